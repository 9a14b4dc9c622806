#include "openrdm/model.hpp"

#include "openrdm/digest.hpp"
#include "openrdm/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace openrdm {

const char *to_string(Region r) {
  switch (r) {
  case Region::L:
    return "L";
  case Region::D:
    return "D";
  case Region::R:
    return "R";
  }
  return "?";
}

IndexRange Partition::range(Region r) const {
  switch (r) {
  case Region::L:
    return {0, n_L};
  case Region::D:
    return {n_L, n_D};
  case Region::R:
    return {n_L + n_D, n_R};
  }
  return {};
}

Region Partition::region_of(Index site) const {
  if (site < n_L)
    return Region::L;
  if (site < n_L + n_D)
    return Region::D;
  return Region::R;
}

TightBindingSystem TightBindingSystem::from_matrix(Mat h0, Partition partition) {
  require(h0.rows() == h0.cols(), "hamiltonian must be square");
  require(partition.n_L >= 0 && partition.n_D >= 1 && partition.n_R >= 0,
          "partition needs at least one device site and non-negative lead sizes");
  require(partition.total() == h0.rows(),
          "partition sizes (" + std::to_string(partition.total()) +
              ") do not cover the hamiltonian dimension (" + std::to_string(h0.rows()) + ")");
  require(h0.allFinite(), "hamiltonian has non-finite entries");
  const double scale = std::max(1.0, h0.cwiseAbs().maxCoeff());
  const double herm = h0.size() == 0 ? 0.0 : max_abs_antihermitian(h0);
  require(herm <= 1e-12 * scale,
          "hamiltonian is not Hermitian (max |h - h^dagger| = " + std::to_string(herm) + ")");
  // Symmetrise away the residual so downstream invariants hold to roundoff.
  Mat sym = 0.5 * (h0 + h0.adjoint());
  return TightBindingSystem(std::move(sym), partition);
}

Mat TightBindingSystem::block(Region row, Region col) const {
  const auto r = partition_.range(row);
  const auto c = partition_.range(col);
  return h0_.block(r.offset, c.offset, r.size, c.size);
}

TightBindingSystem TightBindingSystem::with_bond(Index i, Index j, cplx value) const {
  require(i >= 0 && j >= 0 && i < size() && j < size() && i != j, "bond indices out of range");
  Mat h = h0_;
  h(i, j) = value;
  h(j, i) = std::conj(value);
  return TightBindingSystem(std::move(h), partition_);
}

std::string TightBindingSystem::fingerprint() const {
  std::vector<double> buf;
  buf.reserve(2 * h0_.size() + 3);
  buf.push_back(static_cast<double>(partition_.n_L));
  buf.push_back(static_cast<double>(partition_.n_D));
  buf.push_back(static_cast<double>(partition_.n_R));
  for (Index c = 0; c < h0_.cols(); ++c)
    for (Index r = 0; r < h0_.rows(); ++r) {
      buf.push_back(h0_(r, c).real());
      buf.push_back(h0_(r, c).imag());
    }
  return sha256_hex(buf, 16);
}

TightBindingSystem build_chain_system(Index n_L, Index n_D, Index n_R, double hopping,
                                      double onsite) {
  require(n_L >= 1 && n_D >= 1 && n_R >= 1, "chain needs at least one site in every region");
  require(std::isfinite(hopping) && std::isfinite(onsite), "chain parameters must be finite");
  require(hopping != 0.0, "hopping must be nonzero");
  const Index n = n_L + n_D + n_R;
  Mat h = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    h(i, i) = onsite;
    if (i + 1 < n) {
      h(i, i + 1) = hopping;
      h(i + 1, i) = hopping;
    }
  }
  return TightBindingSystem::from_matrix(std::move(h), Partition{n_L, n_D, n_R});
}

BiasProfile BiasProfile::symmetric(double V, BiasShape shape, double ramp_time) {
  BiasProfile p;
  p.amplitude_L = 0.5 * V;
  p.amplitude_R = -0.5 * V;
  p.shape = shape;
  p.ramp_time = ramp_time;
  return p;
}

double BiasProfile::envelope(double t, bool right_limit) const {
  require(std::isfinite(t), "bias time must be finite");
  if (t < 0.0 || (t == 0.0 && !right_limit))
    return 0.0;
  switch (shape) {
  case BiasShape::step:
    return 1.0;
  case BiasShape::exponential_ramp:
    return -std::expm1(-t / ramp_time);
  }
  return 0.0;
}

RVec BiasProfile::onsite_shift(const Partition &p, double t, bool right_limit) const {
  RVec shift = RVec::Zero(p.total());
  const double e = envelope(t, right_limit);
  if (e == 0.0)
    return shift;
  const auto L = p.range(Region::L);
  const auto D = p.range(Region::D);
  const auto R = p.range(Region::R);
  shift.segment(L.offset, L.size).setConstant(e * amplitude_L);
  shift.segment(R.offset, R.size).setConstant(e * amplitude_R);
  if (device == DeviceBias::linear) {
    for (Index i = 0; i < D.size; ++i) {
      const double frac = static_cast<double>(i + 1) / static_cast<double>(D.size + 1);
      shift(D.offset + i) = e * (amplitude_L + (amplitude_R - amplitude_L) * frac);
    }
  }
  return shift;
}

BiasShape parse_bias_shape(const std::string &s) {
  if (s == "step")
    return BiasShape::step;
  if (s == "exponential-ramp" || s == "exponential")
    return BiasShape::exponential_ramp;
  throw ValidationError("unknown bias shape '" + s + "' (expected step | exponential-ramp)");
}

DeviceBias parse_device_bias(const std::string &s) {
  if (s == "flat")
    return DeviceBias::flat;
  if (s == "linear")
    return DeviceBias::linear;
  throw ValidationError("unknown device bias '" + s + "' (expected flat | linear)");
}

Mat apply_bias(const TightBindingSystem &system, const BiasProfile &profile, double t) {
  require(std::isfinite(t), "bias time must be finite");
  Mat h = system.h0();
  h.diagonal() += profile.onsite_shift(system.partition(), t).cast<cplx>();
  return h;
}

Mat ground_state_density_matrix(const Mat &h, Index n_electrons, const FillingOptions &opts) {
  const Index n = h.rows();
  require(n_electrons >= 0 && n_electrons <= n,
          "n_electrons must lie in [0, " + std::to_string(n) + "]");
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("eigen-decomposition failed");
  const RVec &e = es.eigenvalues();
  const Mat &v = es.eigenvectors();

  RVec occ = RVec::Zero(n);
  occ.head(n_electrons).setOnes();
  if (n_electrons > 0 && n_electrons < n) {
    const double width = std::max(1.0, e(n - 1) - e(0));
    const double tol = opts.degeneracy_tol * width;
    const double fermi_gap = e(n_electrons) - e(n_electrons - 1);
    if (fermi_gap <= tol) {
      Index lo = n_electrons - 1;
      Index hi = n_electrons;
      while (lo > 0 && e(n_electrons - 1) - e(lo - 1) <= tol)
        --lo;
      while (hi + 1 < n && e(hi + 1) - e(n_electrons) <= tol)
        ++hi;
      if (!opts.fractional) {
        std::ostringstream msg;
        msg << "degenerate multiplet of " << (hi - lo + 1) << " levels at E = " << e(n_electrons)
            << " (levels " << lo << ".." << hi << ") straddles the Fermi level; "
            << "set fractional filling to share the occupation";
        throw ValidationError(msg.str());
      }
      const double frac = static_cast<double>(n_electrons - lo) / static_cast<double>(hi - lo + 1);
      occ.segment(lo, hi - lo + 1).setConstant(frac);
    }
  }
  Mat sigma = v * occ.cast<cplx>().asDiagonal() * v.adjoint();
  return 0.5 * (sigma + sigma.adjoint());
}

Mat equilibrium_density_matrix(const Mat &h, double mu, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("eigen-decomposition failed");
  const RVec &e = es.eigenvalues();
  RVec occ(e.size());
  for (Index i = 0; i < e.size(); ++i) {
    if (std::abs(e(i) - mu) <= tol)
      occ(i) = 0.5;
    else
      occ(i) = e(i) < mu ? 1.0 : 0.0;
  }
  const Mat &v = es.eigenvectors();
  Mat sigma = v * occ.cast<cplx>().asDiagonal() * v.adjoint();
  return 0.5 * (sigma + sigma.adjoint());
}

PartitionedMatrix::PartitionedMatrix(const Mat &full, const Partition &p) : partition_(p) {
  require(full.rows() == p.total() && full.cols() == p.total(),
          "matrix dimension does not match partition");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const auto rr = p.range(static_cast<Region>(r));
      const auto cr = p.range(static_cast<Region>(c));
      blocks_[r * 3 + c] = full.block(rr.offset, cr.offset, rr.size, cr.size);
    }
}

Mat PartitionedMatrix::assemble() const {
  const Index n = partition_.total();
  Mat full(n, n);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const auto rr = partition_.range(static_cast<Region>(r));
      const auto cr = partition_.range(static_cast<Region>(c));
      full.block(rr.offset, cr.offset, rr.size, cr.size) = blocks_[r * 3 + c];
    }
  return full;
}

Mat read_hermitian_text(std::istream &in) {
  long long n = -1;
  if (!(in >> n) || n <= 0)
    throw ValidationError("hermitian matrix file: missing or invalid dimension header");
  Mat m = Mat::Zero(n, n);
  std::vector<char> seen(static_cast<std::size_t>(n * n), 0);
  for (long long k = 0; k < n * n; ++k) {
    long long r = 0, c = 0;
    double re = 0.0, im = 0.0;
    if (!(in >> r >> c >> re >> im))
      throw ValidationError("hermitian matrix file: expected " + std::to_string(n * n) +
                            " entries, got " + std::to_string(k));
    if (r < 0 || c < 0 || r >= n || c >= n)
      throw ValidationError("hermitian matrix file: index out of range at entry " +
                            std::to_string(k));
    auto &flag = seen[static_cast<std::size_t>(r * n + c)];
    if (flag)
      throw ValidationError("hermitian matrix file: duplicate entry (" + std::to_string(r) + ", " +
                            std::to_string(c) + ")");
    flag = 1;
    m(r, c) = cplx(re, im);
  }
  if (!m.allFinite())
    throw ValidationError("hermitian matrix file: non-finite entry");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (max_abs_antihermitian(m) > 1e-12 * scale)
    throw ValidationError("hermitian matrix file: matrix is not Hermitian");
  return m;
}

void write_hermitian_text(std::ostream &out, const Mat &m) {
  out << m.rows() << '\n';
  out.precision(17);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      out << r << ' ' << c << ' ' << m(r, c).real() << ' ' << m(r, c).imag() << '\n';
}

} // namespace openrdm
