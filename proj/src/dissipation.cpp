#include "openrdm/dissipation.hpp"

#include "openrdm/error.hpp"

#include <cmath>
#include <sstream>

namespace openrdm {

Mat compute_Q(const Mat &sigma, const Mat &h, const Partition &p, Region lead) {
  require(lead != Region::D, "compute_Q: lead must be L or R");
  require(sigma.rows() == p.total() && sigma.cols() == p.total(),
          "compute_Q: density matrix dimension does not match partition");
  require(h.rows() == p.total() && h.cols() == p.total(),
          "compute_Q: hamiltonian dimension does not match partition");
  const auto D = p.range(Region::D);
  const auto a = p.range(lead);
  if (a.size == 0)
    return Mat::Zero(D.size, D.size);
  const Mat x = h.block(D.offset, a.offset, D.size, a.size) *
                    sigma.block(a.offset, D.offset, a.size, D.size) -
                sigma.block(D.offset, a.offset, D.size, a.size) *
                    h.block(a.offset, D.offset, a.size, D.size);
  return I * x;
}

LeadBasis LeadBasis::diagonalize(const Mat &h, const Partition &p, Region lead) {
  require(lead != Region::D, "lead basis: region must be L or R");
  const auto a = p.range(lead);
  LeadBasis b;
  b.lead = lead;
  if (a.size == 0)
    return b;
  Eigen::SelfAdjointEigenSolver<Mat> es(h.block(a.offset, a.offset, a.size, a.size));
  if (es.info() != Eigen::Success)
    throw NumericalFailure("lead block diagonalisation failed");
  b.energies = es.eigenvalues();
  b.states = es.eigenvectors();
  return b;
}

Mat compute_Q_eigenbasis(const Mat &sigma, const Mat &h, const Partition &p,
                         const LeadBasis &basis) {
  const auto D = p.range(Region::D);
  const auto a = p.range(basis.lead);
  Mat Q = Mat::Zero(D.size, D.size);
  if (a.size == 0)
    return Q;
  const Mat &U = basis.states;
  // Matrix elements between device orbitals and lead eigenstates.
  const Mat h_nk = h.block(D.offset, a.offset, D.size, a.size) * U;
  const Mat h_km = U.adjoint() * h.block(a.offset, D.offset, a.size, D.size);
  const Mat s_nk = sigma.block(D.offset, a.offset, D.size, a.size) * U;
  const Mat s_km = U.adjoint() * sigma.block(a.offset, D.offset, a.size, D.size);
  for (Index n = 0; n < D.size; ++n)
    for (Index m = 0; m < D.size; ++m) {
      cplx acc = 0.0;
      for (Index k = 0; k < a.size; ++k)
        acc += h_nk(n, k) * s_km(k, m) - s_nk(n, k) * h_km(k, m);
      Q(n, m) = I * acc;
    }
  return Q;
}

double current(const Mat &Q, double imag_tol) {
  require(Q.rows() == Q.cols(), "current: Q must be square");
  const cplx tr = Q.trace();
  if (std::abs(tr.imag()) > imag_tol) {
    std::ostringstream msg;
    msg << "tr Q has imaginary part " << tr.imag() << " (> " << imag_tol
        << "); the density matrix or hamiltonian is not Hermitian upstream";
    throw NumericalFailure(msg.str());
  }
  return -tr.real();
}

DissipationRecord make_record(double t, const Mat &sigma, const Mat &h, const Partition &p) {
  DissipationRecord r;
  r.t = t;
  r.Q_L = compute_Q(sigma, h, p, Region::L);
  r.Q_R = compute_Q(sigma, h, p, Region::R);
  r.J_L = current(r.Q_L);
  r.J_R = current(r.Q_R);
  const auto D = p.range(Region::D);
  r.tr_sigma_D = sigma.block(D.offset, D.offset, D.size, D.size).trace().real();
  return r;
}

Mat device_eom_residual(const Mat &sigma, const Mat &h, const Partition &p) {
  const auto D = p.range(Region::D);
  const Mat full_rhs = -I * (h * sigma - sigma * h);
  const Mat hD = h.block(D.offset, D.offset, D.size, D.size);
  const Mat sD = sigma.block(D.offset, D.offset, D.size, D.size);
  const Mat reduced_rhs = -I * (hD * sD - sD * hD) - compute_Q(sigma, h, p, Region::L) -
                          compute_Q(sigma, h, p, Region::R);
  return reduced_rhs - full_rhs.block(D.offset, D.offset, D.size, D.size);
}

} // namespace openrdm
