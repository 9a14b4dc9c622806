#include "openrdm/kernels.hpp"

#include "openrdm/error.hpp"

namespace openrdm::kernels {

const char *to_string(Backend b) { return b == Backend::serial ? "serial" : "parallel"; }

SparseHermitian::SparseHermitian(const Mat &h, double drop_tol) : n_(h.rows()) {
  require(h.rows() == h.cols(), "sparse hermitian: matrix must be square");
  row_ptr.reserve(static_cast<std::size_t>(n_) + 1);
  row_ptr.push_back(0);
  for (Eigen::Index i = 0; i < n_; ++i) {
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (std::abs(h(i, j)) > drop_tol) {
        cols_.push_back(j);
        values_.push_back(h(i, j));
      }
    }
    row_ptr.push_back(cols_.size());
  }
}

Mat SparseHermitian::to_dense() const {
  Mat h = Mat::Zero(n_, n_);
  for (Eigen::Index i = 0; i < n_; ++i)
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
      h(i, cols_[p]) = values_[p];
  return h;
}

void commutator_serial(const Mat &h, const Mat &sigma, Mat &out) {
  const Eigen::Index n = h.rows();
  out.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      cplx acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k)
        acc += h(i, k) * sigma(k, j) - sigma(i, k) * h(k, j);
      out(i, j) = acc;
    }
}

void commutator_parallel(const SparseHermitian &h, const RVec &shift, const Mat &sigma,
                         Mat &out) {
  const Eigen::Index n = h.size();
  out.resize(n, n);
  const bool has_shift = shift.size() == n;
  const auto &cols = h.cols();
  const auto &vals = h.values();
  const auto &rp = h.row_ptr;
  // Below this amount of work the thread fork costs more than it saves.
  const bool go_parallel = static_cast<std::size_t>(n) * h.nonzeros() > 40000;

#pragma omp parallel for schedule(static) if (go_parallel)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      cplx acc = 0.0;
      for (std::size_t p = rp[i]; p < rp[i + 1]; ++p)
        acc += vals[p] * sigma(cols[p], j);
      // (sigma h)_ij = sum_k sigma_ik h_kj, with h_kj = conj(h_jk).
      for (std::size_t p = rp[j]; p < rp[j + 1]; ++p)
        acc -= sigma(i, cols[p]) * std::conj(vals[p]);
      if (has_shift)
        acc += (shift(i) - shift(j)) * sigma(i, j);
      out(i, j) = acc;
    }
  }
}

void lvn_rhs(const SparseHermitian &h, const RVec &shift, const Mat &sigma, Mat &out,
             Backend backend) {
  if (backend == Backend::serial) {
    Mat hd = h.to_dense();
    if (shift.size() == h.size())
      hd.diagonal() += shift.cast<cplx>();
    commutator_serial(hd, sigma, out);
  } else {
    commutator_parallel(h, shift, sigma, out);
  }
  out *= cplx(0.0, -1.0);
}

} // namespace openrdm::kernels
