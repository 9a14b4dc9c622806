#pragma once

#include "openrdm/full_propagator.hpp"

#include <memory>
#include <string>
#include <variant>

namespace openrdm {

/// No coupling to the leads: the device evolves as an isolated system.
struct IsolatedFunctional {};

/// Replays the stage-resolved Q_alpha recorded by a full rk4 run on the same
/// time grid. Reproduces the device block of that run to roundoff.
struct ExactReplayFunctional {
  std::shared_ptr<const ReplayTable> table;
};

/// Markovian relaxation closure Q_alpha = 1/2 {Gamma_alpha, sigma_D - sigma_eq_alpha},
/// with sigma_eq_alpha the zero-temperature equilibrium of the instantaneous h_D
/// at chemical potential mu_alpha. A practical stand-in, not an exact functional.
struct WideBandFunctional {
  Mat gamma_L;
  Mat gamma_R;
  double mu_L = 0.0;
  double mu_R = 0.0;
  /// Rebuild sigma_eq every this many steps.
  Index eq_refresh = 1;

  /// gamma on the device site adjacent to each lead, zero elsewhere.
  static WideBandFunctional adjacent_sites(Index n_D, double gamma = 0.5, double mu_L = 0.0,
                                           double mu_R = 0.0);
};

using DissipationFunctional =
    std::variant<IsolatedFunctional, ExactReplayFunctional, WideBandFunctional>;

std::string functional_name(const DissipationFunctional &f);

/// 1/2 {gamma, sigma_D - sigma_eq}. Rejects gamma with negative eigenvalues.
Mat wide_band_Q(const Mat &sigma_D, const Mat &gamma, const Mat &sigma_eq);

struct ReducedOptions {
  double dt = 1e-3;
  Index n_steps = 1000;
  /// rk4 for every closure; crank-nicolson only for the isolated closure.
  Integrator integrator = Integrator::rk4;
  kernels::Backend backend = kernels::Backend::parallel;
};

/// Integrate i d(sigma_D)/dt = [h_D(t), sigma_D] - i (Q_L + Q_R) with Q from the
/// chosen closure. Records J_alpha = -tr Q_alpha at every step.
DensityMatrixTrajectory propagate_reduced(const Mat &sigma_D0, const TightBindingSystem &system,
                                          const BiasProfile &profile,
                                          const DissipationFunctional &functional,
                                          const ReducedOptions &opts);

} // namespace openrdm
