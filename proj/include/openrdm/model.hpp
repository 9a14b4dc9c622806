#pragma once

#include "openrdm/linalg.hpp"

#include <array>
#include <iosfwd>
#include <string>

namespace openrdm {

using Index = Eigen::Index;

enum class Region { L = 0, D = 1, R = 2 };

const char *to_string(Region r);

struct IndexRange {
  Index offset = 0;
  Index size = 0;
  Index end() const { return offset + size; }
  bool contains(Index i) const { return i >= offset && i < end(); }
};

/// Site counts of the left lead, device and right lead, laid out in that order.
struct Partition {
  Index n_L = 0;
  Index n_D = 0;
  Index n_R = 0;

  Index total() const { return n_L + n_D + n_R; }
  IndexRange range(Region r) const;
  Region region_of(Index site) const;
};

/// Full-system single-particle Hamiltonian with its lead/device/lead partition.
/// Immutable once built.
class TightBindingSystem {
public:
  /// Validates Hermiticity and that the partition covers the matrix.
  static TightBindingSystem from_matrix(Mat h0, Partition partition);

  const Mat &h0() const { return h0_; }
  const Partition &partition() const { return partition_; }
  Index size() const { return h0_.rows(); }

  Mat block(Region row, Region col) const;

  /// Copy with the (i, j) bond set to `value` and (j, i) to its conjugate.
  TightBindingSystem with_bond(Index i, Index j, cplx value) const;

  /// Short stable hash of the matrix and partition.
  std::string fingerprint() const;

private:
  TightBindingSystem(Mat h0, Partition partition)
      : h0_(std::move(h0)), partition_(partition) {}

  Mat h0_;
  Partition partition_;
};

/// Nearest-neighbour chain L-D-R with uniform hopping and on-site energy.
TightBindingSystem build_chain_system(Index n_L, Index n_D, Index n_R, double hopping,
                                      double onsite);

enum class BiasShape { step, exponential_ramp };
enum class DeviceBias { flat, linear };

/// On-site energy shifts applied to the leads (and optionally interpolated
/// across the device). Zero for t <= 0.
///
/// The exponential ramp 1 - exp(-t/ramp_time) is analytic for t > 0. The step
/// is its ramp_time -> 0 limit and is not analytic at t = 0.
struct BiasProfile {
  double amplitude_L = 0.0;
  double amplitude_R = 0.0;
  double ramp_time = 1.0;
  BiasShape shape = BiasShape::exponential_ramp;
  DeviceBias device = DeviceBias::linear;

  /// Symmetric +V/2 / -V/2 split between the leads.
  static BiasProfile symmetric(double V, BiasShape shape = BiasShape::exponential_ramp,
                               double ramp_time = 1.0);

  /// Time envelope in [0, 1]. With `right_limit` the value at t = 0 is the
  /// limit from above, which is what an integrator needs at the start of a step.
  double envelope(double t, bool right_limit = false) const;

  /// Diagonal shift vector over all sites.
  RVec onsite_shift(const Partition &p, double t, bool right_limit = false) const;

  bool is_zero() const { return amplitude_L == 0.0 && amplitude_R == 0.0; }
};

BiasShape parse_bias_shape(const std::string &s);
DeviceBias parse_device_bias(const std::string &s);

/// h(t) = h0 + diag(bias(t)).
Mat apply_bias(const TightBindingSystem &system, const BiasProfile &profile, double t);

struct FillingOptions {
  /// Spread the electrons evenly over a multiplet straddling the Fermi level
  /// instead of failing.
  bool fractional = false;
  /// Two levels closer than this (relative to the bandwidth) are degenerate.
  double degeneracy_tol = 1e-9;
};

/// Zero-temperature density matrix of the lowest `n_electrons` eigenstates of h.
Mat ground_state_density_matrix(const Mat &h, Index n_electrons, const FillingOptions &opts = {});

inline Mat ground_state_density_matrix(const TightBindingSystem &system, Index n_electrons,
                                       const FillingOptions &opts = {}) {
  return ground_state_density_matrix(system.h0(), n_electrons, opts);
}

/// Zero-temperature density matrix of h for chemical potential mu. A level
/// exactly at mu (within tolerance) is half filled.
Mat equilibrium_density_matrix(const Mat &h, double mu, double tol = 1e-12);

/// The nine L/D/R blocks of a full-system matrix.
class PartitionedMatrix {
public:
  PartitionedMatrix(const Mat &full, const Partition &p);

  const Mat &block(Region row, Region col) const {
    return blocks_[static_cast<int>(row) * 3 + static_cast<int>(col)];
  }
  const Partition &partition() const { return partition_; }

  Mat assemble() const;

private:
  Partition partition_;
  std::array<Mat, 9> blocks_;
};

/// Plain-text Hermitian matrix: a line with n, then n*n lines `row col re im`
/// (0-based indices, any order).
Mat read_hermitian_text(std::istream &in);
void write_hermitian_text(std::ostream &out, const Mat &m);

} // namespace openrdm
