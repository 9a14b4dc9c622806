#pragma once

#include "openrdm/model.hpp"

#include <string>
#include <vector>

namespace openrdm {

/// Dissipative term of lead alpha on the device block,
///   Q_alpha = i (h_{D,alpha} sigma_{alpha,D} - sigma_{D,alpha} h_{alpha,D}),
/// so that  i d(sigma_D)/dt = [h_D, sigma_D] - i (Q_L + Q_R).
/// Only the off-diagonal lead/device blocks of h enter, so an on-site bias does
/// not change Q directly.
Mat compute_Q(const Mat &sigma, const Mat &h, const Partition &p, Region lead);

/// Eigenstates {k_alpha} of a lead's diagonal block.
struct LeadBasis {
  Region lead = Region::L;
  RVec energies;
  Mat states; // columns are |k_alpha> in the site basis of the lead block

  static LeadBasis diagonalize(const Mat &h, const Partition &p, Region lead);
};

/// Same quantity evaluated term by term in the lead eigenbasis:
///   Q_{nm} = i sum_k ( h_{n k} sigma_{k m} - sigma_{n k} h_{k m} ).
Mat compute_Q_eigenbasis(const Mat &sigma, const Mat &h, const Partition &p,
                         const LeadBasis &basis);

/// Terminal current J = -tr Q. Positive J means electrons flow from the lead
/// into the device. Throws NumericalFailure when tr Q carries an imaginary
/// part above `imag_tol`.
double current(const Mat &Q, double imag_tol = 1e-10);

struct DissipationRecord {
  double t = 0.0;
  Mat Q_L;
  Mat Q_R;
  double J_L = 0.0;
  double J_R = 0.0;
  double tr_sigma_D = 0.0;
};

DissipationRecord make_record(double t, const Mat &sigma, const Mat &h, const Partition &p);

/// Residual of the device-block equation of motion,
///   -i [h_D, sigma_D] - (Q_L + Q_R) - (-i [h, sigma])_D,
/// which vanishes identically.
Mat device_eom_residual(const Mat &sigma, const Mat &h, const Partition &p);

// ---------------------------------------------------------------------------
// Landauer steady-state oracle for chain leads.

struct LandauerOptions {
  /// Evaluate T(E) with the biased device and energy-shifted lead self-energies
  /// instead of the unbiased system.
  bool bias_in_transmission = false;
  /// Bias profile used when bias_in_transmission is set (amplitudes are taken
  /// as +V/2 and -V/2 unless overridden here).
  DeviceBias device = DeviceBias::linear;
  double rel_tol = 1e-10;
};

struct LandauerResult {
  double current = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  bool clipped = false;
  std::vector<std::string> warnings;
};

/// Uniform semi-infinite chain lead read off a finite system: on-site energy,
/// intra-lead hopping, and lead/device coupling.
struct ChainLead {
  double onsite = 0.0;
  cplx hopping = 0.0;
  cplx coupling = 0.0;
  Index device_site = 0; // device-local index the lead attaches to

  static ChainLead extract(const TightBindingSystem &system, Region lead);
  /// Retarded surface self-energy projected on the attached device site.
  cplx self_energy(double E) const;
  double band_lo() const { return onsite - 2.0 * std::abs(hopping); }
  double band_hi() const { return onsite + 2.0 * std::abs(hopping); }
};

/// T(E) = tr[Gamma_L G Gamma_R G^dagger] for the device with both chain leads.
double transmission(const TightBindingSystem &system, double E, double shift_L = 0.0,
                    double shift_R = 0.0, const RVec &device_shift = RVec());

/// J = (1/2pi) integral over [mu - V/2, mu + V/2] of T(E) dE (zero temperature).
LandauerResult landauer_current(const TightBindingSystem &system, double V, double mu,
                                const LandauerOptions &opts = {});

} // namespace openrdm
