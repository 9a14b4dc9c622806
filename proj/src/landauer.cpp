#include "openrdm/dissipation.hpp"

#include "openrdm/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace openrdm {

namespace {

constexpr double kUniformTol = 1e-12;

bool approx(cplx a, cplx b) { return std::abs(a - b) <= kUniformTol * std::max(1.0, std::abs(b)); }

} // namespace

ChainLead ChainLead::extract(const TightBindingSystem &system, Region lead) {
  require(lead != Region::D, "chain lead: region must be L or R");
  const Partition &p = system.partition();
  const auto a = p.range(lead);
  const auto D = p.range(Region::D);
  const Mat &h = system.h0();
  require(a.size >= 2, std::string("chain lead ") + to_string(lead) +
                           " needs at least two sites to define its hopping");

  ChainLead c;
  c.onsite = h(a.offset, a.offset).real();
  c.hopping = h(a.offset, a.offset + 1);
  require(std::abs(c.hopping) > 0.0, "chain lead has zero hopping");
  for (Index i = 0; i < a.size; ++i)
    for (Index j = 0; j < a.size; ++j) {
      const cplx v = h(a.offset + i, a.offset + j);
      cplx expect = 0.0;
      if (i == j)
        expect = c.onsite;
      else if (j == i + 1)
        expect = c.hopping;
      else if (i == j + 1)
        expect = std::conj(c.hopping);
      require(approx(v, expect), std::string("lead ") + to_string(lead) +
                                     " is not a uniform nearest-neighbour chain");
    }

  // The lead couples to the device only through its surface site.
  const Index surface = lead == Region::L ? a.end() - 1 : a.offset;
  c.device_site = lead == Region::L ? 0 : D.size - 1;
  for (Index i = 0; i < a.size; ++i)
    for (Index j = 0; j < D.size; ++j) {
      const cplx v = h(a.offset + i, D.offset + j);
      if (a.offset + i == surface && j == c.device_site)
        c.coupling = v;
      else
        require(std::abs(v) <= kUniformTol, std::string("lead ") + to_string(lead) +
                                                 " couples to the device beyond its surface site");
    }
  require(std::abs(c.coupling) > 0.0, std::string("lead ") + to_string(lead) +
                                          " is decoupled from the device");
  return c;
}

cplx ChainLead::self_energy(double E) const {
  const double t2 = std::norm(hopping);
  const double x = E - onsite;
  cplx g;
  if (x * x < 4.0 * t2)
    g = cplx(x, -std::sqrt(4.0 * t2 - x * x)) / (2.0 * t2);
  else
    g = (x - std::copysign(std::sqrt(x * x - 4.0 * t2), x)) / (2.0 * t2);
  return std::norm(coupling) * g;
}

double transmission(const TightBindingSystem &system, double E, double shift_L, double shift_R,
                    const RVec &device_shift) {
  ChainLead L = ChainLead::extract(system, Region::L);
  ChainLead R = ChainLead::extract(system, Region::R);
  L.onsite += shift_L;
  R.onsite += shift_R;
  const Mat hD = system.block(Region::D, Region::D);
  const Index n = hD.rows();
  Mat A = -hD;
  A.diagonal().array() += E;
  if (device_shift.size() == n)
    A.diagonal() -= device_shift.cast<cplx>();
  const cplx sL = L.self_energy(E);
  const cplx sR = R.self_energy(E);
  A(L.device_site, L.device_site) -= sL;
  A(R.device_site, R.device_site) -= sR;
  const Mat G = A.partialPivLu().inverse();
  const double gL = -2.0 * sL.imag();
  const double gR = -2.0 * sR.imag();
  return gL * gR * std::norm(G(L.device_site, R.device_site));
}

LandauerResult landauer_current(const TightBindingSystem &system, double V, double mu,
                                const LandauerOptions &opts) {
  require(std::isfinite(V) && std::isfinite(mu), "landauer: bias and mu must be finite");
  LandauerResult res;
  res.window_lo = mu - 0.5 * std::abs(V);
  res.window_hi = mu + 0.5 * std::abs(V);
  if (V == 0.0)
    return res;

  const ChainLead L = ChainLead::extract(system, Region::L);
  const ChainLead R = ChainLead::extract(system, Region::R);
  double shift_L = 0.0, shift_R = 0.0;
  RVec device_shift;
  if (opts.bias_in_transmission) {
    BiasProfile b = BiasProfile::symmetric(V, BiasShape::step);
    b.device = opts.device;
    const RVec s = b.onsite_shift(system.partition(), 1.0);
    shift_L = b.amplitude_L;
    shift_R = b.amplitude_R;
    const auto D = system.partition().range(Region::D);
    device_shift = s.segment(D.offset, D.size);
  }
  const double band_lo = std::max(L.band_lo() + shift_L, R.band_lo() + shift_R);
  const double band_hi = std::min(L.band_hi() + shift_L, R.band_hi() + shift_R);
  double lo = res.window_lo, hi = res.window_hi;
  if (lo < band_lo || hi > band_hi) {
    res.clipped = true;
    std::ostringstream msg;
    msg << "bias window [" << lo << ", " << hi << "] extends outside the common lead band ["
        << band_lo << ", " << band_hi << "]; clipped";
    res.warnings.push_back(msg.str());
    lo = std::max(lo, band_lo);
    hi = std::min(hi, band_hi);
  }
  if (hi <= lo)
    return res;

  auto T = [&](double E) { return transmission(system, E, shift_L, shift_R, device_shift); };
  double err = 0.0;
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(T, lo, hi, 15, opts.rel_tol,
                                                                    &err);
  res.current = std::copysign(integral / (2.0 * std::numbers::pi), V);
  return res;
}

} // namespace openrdm
