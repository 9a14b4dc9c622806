#pragma once

#include <Eigen/Dense>
#include <complex>

namespace openrdm {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr cplx I{0.0, 1.0};

inline double hermiticity_error(const Mat &m) { return (m - m.adjoint()).norm(); }

inline double max_abs_antihermitian(const Mat &m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline double idempotency_error(const Mat &m) { return (m * m - m).norm(); }

} // namespace openrdm
