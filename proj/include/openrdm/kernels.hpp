#pragma once

#include "openrdm/linalg.hpp"

#include <vector>

namespace openrdm::kernels {

enum class Backend { serial, parallel };

const char *to_string(Backend b);

/// Row-compressed Hermitian matrix. Tight-binding Hamiltonians are banded, so
/// the commutator only needs the stored non-zeros.
class SparseHermitian {
public:
  SparseHermitian() = default;
  explicit SparseHermitian(const Mat &h, double drop_tol = 0.0);

  Eigen::Index size() const { return n_; }
  std::size_t nonzeros() const { return cols_.size(); }
  Mat to_dense() const;

  // Row i occupies [row_ptr[i], row_ptr[i+1]).
  std::vector<std::size_t> row_ptr;

  const std::vector<Eigen::Index> &cols() const { return cols_; }
  const std::vector<cplx> &values() const { return values_; }

private:
  Eigen::Index n_ = 0;
  std::vector<Eigen::Index> cols_;
  std::vector<cplx> values_;
};

/// out = h*sigma - sigma*h with plain dense loops. Reference implementation.
void commutator_serial(const Mat &h, const Mat &sigma, Mat &out);

/// out = [h + diag(shift), sigma], columns distributed over OpenMP threads.
/// `shift` may be empty.
void commutator_parallel(const SparseHermitian &h, const RVec &shift, const Mat &sigma, Mat &out);

/// Liouville-von Neumann right-hand side out = -i [h + diag(shift), sigma].
void lvn_rhs(const SparseHermitian &h, const RVec &shift, const Mat &sigma, Mat &out,
             Backend backend = Backend::parallel);

/// Evaluate many independent scalar jobs f(i), i in [0, n), into out[i].
template <class F> void parallel_map(std::size_t n, std::vector<double> &out, F &&f) {
  out.resize(n);
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = f(static_cast<std::size_t>(i));
}

template <class F> void serial_map(std::size_t n, std::vector<double> &out, F &&f) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = f(i);
}

} // namespace openrdm::kernels
