#pragma once

#include "openrdm/linalg.hpp"

#include <functional>
#include <string>
#include <vector>

namespace openrdm {

/// Uniform grid on [xmin, xmax] with hard walls at both ends. Only interior
/// nodes xmin + i dx, i = 1 .. n, carry values.
struct Grid1D {
  double xmin = -8.0;
  double xmax = 8.0;
  double dx = 1.0 / 64.0;
  Eigen::Index n = 0;

  static Grid1D make(double xmin, double xmax, double dx);
  double x(Eigen::Index i) const { return xmin + static_cast<double>(i + 1) * dx; }
  RVec nodes() const;
  RVec sample(const std::function<double(double)> &f) const;
};

struct GridWavefunction {
  Grid1D grid;
  Vec psi;

  double norm() const; // sqrt(sum |psi|^2 dx)
  RVec density() const;
};

/// v(x, t) = sum_j w_j(x) t^j / j! plus a spatially constant offset.
/// The offset is a pure gauge and never enters a reported quantity.
struct PotentialField {
  std::vector<RVec> w;
  double offset = 0.0;

  static PotentialField stationary(RVec w0);
  RVec at(double t) const;
  /// d^k v / dt^k at t = 0, i.e. w_k (zero beyond the stored terms).
  RVec derivative(int k, Eigen::Index n) const;
  PotentialField shifted(double c) const;
  Eigen::Index size() const { return w.empty() ? 0 : w.front().size(); }
};

struct GroundState {
  GridWavefunction psi;
  double energy = 0.0;
  std::vector<std::string> warnings;
};

/// Lowest eigenvector of -1/2 d^2/dx^2 + v with the three-point Laplacian,
/// normalized and made positive.
GroundState ground_state_1d(const Grid1D &grid, const RVec &v_static);

/// One Crank-Nicolson step of length dt (negative dt runs backward).
void crank_nicolson_step(const Grid1D &grid, const PotentialField &v, double t, double dt,
                         Vec &psi);

struct UField {
  RVec u;
  RVec div_u;
  /// v and v' differ only by constants at every stored order.
  bool gauge_equivalent = false;
};

/// u = rho0 d/dx (d^k/dt^k [v - v'] at t0) and its divergence. k must be the
/// lowest order at which v - v' is not a constant.
UField compute_u(const Grid1D &grid, const RVec &rho0, const PotentialField &v,
                 const PotentialField &vp, int k);

enum class RgSign { physical, negative };

struct RgOptions {
  double dt = 5e-4;
  /// Subinterval D on which residuals and |div u| are also reported.
  double d_lo = 0.5;
  double d_hi = 1.5;
  /// physical: d^{k+2}(rho - rho') = +div u, which the dynamics obeys.
  RgSign sign = RgSign::physical;
  bool allow_k1 = false;
};

struct RgReport {
  int k = 0;
  double dx = 0.0;
  double dt = 0.0;
  RVec x;
  RVec lhs; // finite-difference time derivative of rho - rho'
  RVec rhs; // +-div u
  double signal = 0.0;
  double residual = 0.0;
  double relative_residual = 0.0;
  double residual_D = 0.0;
  double relative_residual_D = 0.0;
  double max_div_u_D = 0.0;
  /// Relative residual against the opposite sign, for comparison.
  double relative_residual_other_sign = 0.0;
  double noise_floor = 0.0;
  bool inconclusive = false;
  double max_norm_drift = 0.0;
  std::vector<std::string> warnings;
};

RgReport check_rg_identity(const GridWavefunction &psi0, const PotentialField &v,
                           const PotentialField &vp, int k, const RgOptions &opts = {});

/// Harmonic (or hard-wall) ground state with a polynomial perturbation.
struct RgProblem {
  double xmin = -8.0;
  double xmax = 8.0;
  double dx = 1.0 / 64.0;
  double dt = 5e-4;
  /// "harmonic" (x^2/2) or "well" (v = 0).
  std::string potential = "harmonic";
  /// "quadratic" (eps x^2/2) or "linear" (eps x).
  std::string perturbation = "quadratic";
  double epsilon = 0.1;
  int k = 0;
  double d_lo = 0.5;
  double d_hi = 1.5;
  RgSign sign = RgSign::physical;
  /// Constant added to both potentials.
  double gauge = 0.0;
};

/// Parses "quadratic:0.1" / "linear:0.05" into the problem.
void parse_perturbation(const std::string &spec, RgProblem &p);

RgReport run_rg_problem(const RgProblem &p);

struct RgLadder {
  std::vector<RgReport> levels;
  double fitted_order = 0.0; // log-log slope of the residual against dx
};

/// Halve dx and dt at each level. Levels run concurrently.
RgLadder rg_refinement_ladder(const RgProblem &base, int levels = 3);

} // namespace openrdm
