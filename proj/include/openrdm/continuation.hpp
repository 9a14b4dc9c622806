#pragma once

#include "openrdm/linalg.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace openrdm {

inline constexpr int kMaxDim = 3;

/// gamma = (gamma_1, ..., gamma_d) with non-negative entries.
struct MultiIndex {
  std::array<int, kMaxDim> g{};
  int dim = 1;

  int total() const;
  /// gamma! = prod gamma_i!, exact.
  std::uint64_t factorial() const;
  /// x^gamma for a displacement x.
  double power(const RVec &x) const;

  bool operator==(const MultiIndex &o) const { return dim == o.dim && g == o.g; }
  bool operator!=(const MultiIndex &o) const { return !(*this == o); }

  /// All indices with |gamma| <= max_order, grouped by total degree.
  static std::vector<MultiIndex> graded(int dim, int max_order);
  static MultiIndex of(std::initializer_list<int> entries);
};

std::string to_string(const MultiIndex &m);

/// Axis-aligned box.
struct Box {
  RVec lo;
  RVec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const RVec &x, double tol = 1e-12) const;
  double diameter() const { return (hi - lo).norm(); }
  RVec center() const { return 0.5 * (lo + hi); }

  static Box make(std::initializer_list<double> lo_hi_pairs);
  /// "lo1,hi1[,lo2,hi2[,lo3,hi3]]"
  static Box parse(const std::string &s);
  static Box hull(const Box &a, const Box &b);
};

/// Values of a function on a uniform tensor grid covering a box. The last
/// axis runs fastest in the flat value array.
class SampledFunction {
public:
  SampledFunction() = default;
  SampledFunction(Box box, std::vector<Eigen::Index> counts, std::vector<double> values);

  static SampledFunction from_function(const Box &box, const std::vector<Eigen::Index> &counts,
                                       const std::function<double(const RVec &)> &f);
  /// Same grid, new values.
  SampledFunction with_values(std::vector<double> values) const;

  int dim() const { return box_.dim(); }
  const Box &box() const { return box_; }
  Eigen::Index count(int axis) const { return counts_[static_cast<std::size_t>(axis)]; }
  const std::vector<Eigen::Index> &counts() const { return counts_; }
  double spacing(int axis) const;
  double min_spacing() const;
  std::size_t size() const { return values_.size(); }
  const std::vector<double> &values() const { return values_; }

  RVec node(std::size_t flat) const;
  std::size_t flat_index(const std::array<Eigen::Index, kMaxDim> &idx) const;
  double value(std::size_t flat) const { return values_[flat]; }

  bool same_grid(const SampledFunction &o, double tol = 1e-12) const;

private:
  Box box_;
  std::vector<Eigen::Index> counts_;
  std::vector<double> values_;
};

/// Truncated Taylor series sum_gamma c_gamma (x - x0)^gamma with
/// c_gamma = (1/gamma!) d^gamma f(x0).
class TaylorModel {
public:
  TaylorModel(RVec x0, std::vector<MultiIndex> indices, std::vector<double> coeffs);

  const RVec &x0() const { return x0_; }
  int dim() const { return static_cast<int>(x0_.size()); }
  int order() const { return order_; }
  const std::vector<MultiIndex> &indices() const { return indices_; }
  const std::vector<double> &coeffs() const { return coeffs_; }

  /// Zero for indices beyond the stored order.
  double coefficient(const MultiIndex &m) const;
  double derivative(const MultiIndex &m) const;

  double radius_estimate = 0.0;
  /// No non-zero high-order coefficient was found (polynomial or zero data).
  bool radius_infinite = false;
  double safety_fraction = 0.5;
  /// Half-width of the stencil the coefficients came from.
  double fit_halfwidth = 0.0;
  /// The data were matched to rounding by a degree below the maximum, so
  /// the series terminates and has no finite radius.
  bool finite_series = false;

  double trust_radius() const { return safety_fraction * radius_estimate; }
  bool in_trust_region(const RVec &x) const;
  /// Throws NumericalFailure outside the trust region.
  double evaluate(const RVec &x) const;
  double evaluate_unchecked(const RVec &x) const;

  /// The same polynomial expanded about x1 (exact binomial shift).
  TaylorModel recentered(const RVec &x1) const;

private:
  RVec x0_;
  std::vector<MultiIndex> indices_;
  std::vector<double> coeffs_;
  int order_ = 0;
};

struct RadiusEstimate {
  double radius = 0.0;
  bool infinite = false;
  /// max over slices of |b_N| / S, the relative size of the top-order slice.
  double decay = 0.0;
};

/// Root test min_k (S/|b_k|)^(1/k), k in [N/2, N], on directional slices
/// b_k = sum_{|gamma|=k} c_gamma e^gamma along axes and diagonals.
RadiusEstimate estimate_radius(const TaylorModel &m);

enum class FitMethod { least_squares, finite_difference };

struct FitOptions {
  FitMethod method = FitMethod::least_squares;
  /// Least-squares degree is max_order + extra_degree.
  int extra_degree = 2;
  /// Nodes per axis; 0 means max_order + 4, rounded up to odd.
  int stencil_points = 0;
  /// Least squares stops at the lowest degree whose RMS residual is below
  /// noise_floor * max|f| on the stencil.
  double noise_floor = 2e-15;
  double safety_fraction = 0.5;
  /// Upper clamp for the radius; 0 uses the sample box diameter.
  double radius_cap = 0.0;
};

FitMethod parse_fit_method(const std::string &s);

TaylorModel fit_taylor(const SampledFunction &samples, const RVec &x0, int max_order,
                       const FitOptions &opts = {});

/// Whether a stencil for (x0, max_order) fits on the grid, and its half-width.
double stencil_halfwidth(const SampledFunction &samples, const RVec &x0, int max_order,
                         const FitOptions &opts = {});

/// Fornberg weights for derivatives 0..m at z from nodes x; entry (node, order).
RMat fornberg_weights(double z, const RVec &x, int m);

struct ContinuationOptions {
  int max_order = 10;
  double step_fraction = 0.5;
  FitOptions fit;
  std::vector<RVec> singular_points;
  double exclusion_radius = 0.0;
  Eigen::Index max_steps = 100000;
  /// Fail when a node of U lies outside every trust region.
  bool require_coverage = true;
};

struct ContinuationStep {
  RVec x0;
  double radius = 0.0;
  bool radius_infinite = false;
  int order = 0;
  double coeff_decay = 0.0;
  bool refit = false;
};

struct ContinuationResult {
  SampledFunction values;
  std::vector<ContinuationStep> steps;
  std::vector<TaylorModel> models;
  std::size_t uncovered_nodes = 0;
};

/// Polyline from the center of D through U: to the far end for d = 1, through
/// the center and corners of U otherwise.
std::vector<RVec> default_path(const Box &D, const Box &U);

/// Walk the path re-expanding at each step, then evaluate on the U grid.
ContinuationResult continue_along_path(const SampledFunction &samples,
                                       const std::vector<RVec> &path, const Box &U,
                                       const std::vector<Eigen::Index> &U_counts,
                                       const ContinuationOptions &opts = {});

struct CertifyOptions {
  double tol_agree = 1e-9;
  ContinuationOptions continuation;
};

struct UniquenessReport {
  bool agree_on_D = false;
  double max_diff_D = 0.0;
  bool continued = false;
  double max_diff_U = 0.0;
  /// max_diff_D times the extrapolation growth of the first fit over U.
  double propagated_bound = 0.0;
  std::string message;
  ContinuationResult f_result;
  ContinuationResult g_result;
};

UniquenessReport certify_uniqueness(const SampledFunction &f, const SampledFunction &g,
                                    const std::vector<RVec> &path, const Box &U,
                                    const std::vector<Eigen::Index> &U_counts,
                                    const CertifyOptions &opts = {});

} // namespace openrdm
