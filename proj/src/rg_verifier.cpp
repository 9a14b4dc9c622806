#include "openrdm/rg_verifier.hpp"

#include "openrdm/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace openrdm {

using Eigen::Index;

Grid1D Grid1D::make(double xmin, double xmax, double dx) {
  require(std::isfinite(xmin) && std::isfinite(xmax) && xmin < xmax, "grid needs xmin < xmax");
  require(dx > 0.0 && std::isfinite(dx), "grid spacing must be positive");
  const double cells = (xmax - xmin) / dx;
  const auto nc = static_cast<Index>(std::llround(cells));
  require(std::abs(cells - static_cast<double>(nc)) <= 1e-9 * cells,
          "grid spacing must divide the interval length");
  require(nc >= 4, "grid needs at least four cells");
  return Grid1D{xmin, xmax, dx, nc - 1};
}

RVec Grid1D::nodes() const {
  RVec x(n);
  for (Index i = 0; i < n; ++i)
    x(i) = this->x(i);
  return x;
}

RVec Grid1D::sample(const std::function<double(double)> &f) const {
  RVec v(n);
  for (Index i = 0; i < n; ++i)
    v(i) = f(x(i));
  return v;
}

double GridWavefunction::norm() const { return std::sqrt(psi.squaredNorm() * grid.dx); }

RVec GridWavefunction::density() const { return psi.cwiseAbs2(); }

PotentialField PotentialField::stationary(RVec w0) {
  PotentialField p;
  p.w.push_back(std::move(w0));
  return p;
}

RVec PotentialField::at(double t) const {
  require(!w.empty(), "potential has no terms");
  RVec v = RVec::Zero(size());
  double c = 1.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (j > 0)
      c *= t / static_cast<double>(j);
    v += c * w[j];
  }
  return v;
}

RVec PotentialField::derivative(int k, Index n) const {
  if (k >= 0 && static_cast<std::size_t>(k) < w.size())
    return w[static_cast<std::size_t>(k)];
  return RVec::Zero(n);
}

PotentialField PotentialField::shifted(double c) const {
  PotentialField p = *this;
  p.offset += c;
  return p;
}

namespace {

// Remove spatial constants from every term so that gauge shifts cancel exactly.
PotentialField canonical(const PotentialField &v, Index n) {
  require(!v.w.empty(), "potential has no terms");
  PotentialField c;
  for (const RVec &wj : v.w) {
    require(wj.size() == n, "potential profile does not match the grid");
    require(wj.allFinite(), "potential profile has non-finite values");
    c.w.push_back(wj.array() - wj.minCoeff());
  }
  return c;
}

// Solve (d + off * shift-structure) x = b for a symmetric tridiagonal complex
// system with constant off-diagonal.
void thomas(const Vec &diag, cplx off, const Vec &rhs, Vec &x) {
  const Index n = diag.size();
  Vec c(n);
  Vec d(n);
  cplx beta = diag(0);
  c(0) = off / beta;
  d(0) = rhs(0) / beta;
  for (Index i = 1; i < n; ++i) {
    beta = diag(i) - off * c(i - 1);
    c(i) = off / beta;
    d(i) = (rhs(i) - off * d(i - 1)) / beta;
  }
  x.resize(n);
  x(n - 1) = d(n - 1);
  for (Index i = n - 2; i >= 0; --i)
    x(i) = d(i) - c(i) * x(i + 1);
}

} // namespace

GroundState ground_state_1d(const Grid1D &grid, const RVec &v_static) {
  const Index n = grid.n;
  require(v_static.size() == n, "ground_state_1d: potential does not match the grid");
  require(v_static.allFinite(), "ground_state_1d: potential has non-finite values");
  const double kin = 1.0 / (grid.dx * grid.dx);
  const RVec v = v_static.array() - v_static.minCoeff();
  RVec diag = v.array() + kin;
  RVec sub = RVec::Constant(n - 1, -0.5 * kin);

  Eigen::SelfAdjointEigenSolver<RMat> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const double e0 = es.eigenvalues()(0);
  const double gap = n > 1 ? es.eigenvalues()(1) - e0 : 1.0;

  // Inverse iteration just below the lowest level.
  const double shift = e0 - 1e-3 * gap;
  Vec dshift = (diag.array() - shift).cast<cplx>();
  Vec psi = Vec::Ones(n);
  Vec next;
  for (int it = 0; it < 50; ++it) {
    thomas(dshift, cplx(-0.5 * kin), psi, next);
    next /= next.norm();
    const double change = std::min((next - psi).norm(), (next + psi).norm());
    psi = next;
    if (change < 1e-15)
      break;
  }
  if (psi.real().sum() < 0.0)
    psi = -psi;
  for (Index i = 0; i < n; ++i)
    psi(i) = cplx(psi(i).real(), 0.0);
  psi /= std::sqrt(psi.squaredNorm() * grid.dx);

  GroundState gs;
  gs.psi = GridWavefunction{grid, psi};
  gs.energy = e0 + v_static.minCoeff();
  const double center = v_static(n / 2);
  if (v_static(0) < center || v_static(n - 1) < center)
    gs.warnings.push_back("potential is not confining: it decreases toward the grid boundary");
  return gs;
}

void crank_nicolson_step(const Grid1D &grid, const PotentialField &v, double t, double dt,
                         Vec &psi) {
  const Index n = grid.n;
  require(psi.size() == n, "crank_nicolson_step: wavefunction does not match the grid");
  const double kin = 1.0 / (grid.dx * grid.dx);
  const RVec vm = v.at(t + 0.5 * dt);
  const cplx a = I * (0.5 * dt);
  // H psi with hard walls.
  Vec hpsi(n);
  for (Index i = 0; i < n; ++i) {
    const cplx left = i > 0 ? psi(i - 1) : cplx(0.0);
    const cplx right = i + 1 < n ? psi(i + 1) : cplx(0.0);
    hpsi(i) = (kin + vm(i)) * psi(i) - 0.5 * kin * (left + right);
  }
  const Vec rhs = psi - a * hpsi;
  Vec diag(n);
  for (Index i = 0; i < n; ++i)
    diag(i) = 1.0 + a * (kin + vm(i));
  thomas(diag, -a * (0.5 * kin), rhs, psi);
}

UField compute_u(const Grid1D &grid, const RVec &rho0, const PotentialField &v,
                 const PotentialField &vp, int k) {
  const Index n = grid.n;
  require(rho0.size() == n, "compute_u: density does not match the grid");
  require(k >= 0, "compute_u: k must be non-negative");
  const PotentialField cv = canonical(v, n);
  const PotentialField cp = canonical(vp, n);

  auto spread = [&](int j) {
    const RVec d = cv.derivative(j, n) - cp.derivative(j, n);
    const double scale =
        std::max({1.0, cv.derivative(j, n).cwiseAbs().maxCoeff(), cp.derivative(j, n).cwiseAbs().maxCoeff()});
    return std::pair<double, double>{d.maxCoeff() - d.minCoeff(), scale};
  };

  UField out;
  out.u = RVec::Zero(n);
  out.div_u = RVec::Zero(n);
  const int orders = static_cast<int>(std::max(cv.w.size(), cp.w.size()));
  bool all_const = true;
  for (int j = 0; j < std::max(orders, k + 1); ++j) {
    const auto [s, scale] = spread(j);
    if (s > 1e-12 * scale)
      all_const = false;
  }
  if (all_const) {
    out.gauge_equivalent = true;
    return out;
  }
  for (int j = 0; j < k; ++j) {
    const auto [s, scale] = spread(j);
    if (s > 1e-12 * scale) {
      std::ostringstream msg;
      msg << "k = " << k << " is not the differentiating order: the potentials already differ "
          << "by a non-constant at order " << j << " (spread " << s << ")";
      throw ValidationError(msg.str());
    }
  }
  {
    const auto [s, scale] = spread(k);
    if (s <= 1e-12 * scale) {
      std::ostringstream msg;
      msg << "v - v' is a constant at order " << k
          << "; no differentiating order at k (the potentials are gauge-equivalent there)";
      throw ValidationError(msg.str());
    }
  }

  const RVec w = cv.derivative(k, n) - cp.derivative(k, n);
  const double dx = grid.dx;
  // Values beyond the walls: rho = 0, w extrapolated linearly.
  auto W = [&](Index i) {
    if (i < 0)
      return 2.0 * w(0) - w(1);
    if (i >= n)
      return 2.0 * w(n - 1) - w(n - 2);
    return w(i);
  };
  auto R = [&](Index i) { return i < 0 || i >= n ? 0.0 : rho0(i); };
  for (Index i = 0; i < n; ++i) {
    out.u(i) = rho0(i) * (W(i + 1) - W(i - 1)) / (2.0 * dx);
    const double f_plus = 0.5 * (R(i) + R(i + 1)) * (W(i + 1) - W(i)) / dx;
    const double f_minus = 0.5 * (R(i - 1) + R(i)) * (W(i) - W(i - 1)) / dx;
    out.div_u(i) = (f_plus - f_minus) / dx;
  }
  return out;
}

RgReport check_rg_identity(const GridWavefunction &psi0, const PotentialField &v,
                           const PotentialField &vp, int k, const RgOptions &opts) {
  const Grid1D &grid = psi0.grid;
  const Index n = grid.n;
  require(k == 0 || (k == 1 && opts.allow_k1), "only k = 0 is supported (k = 1 behind a flag)");
  require(opts.dt > 0.0 && std::isfinite(opts.dt), "dt must be positive");
  require(psi0.psi.size() == n, "wavefunction does not match the grid");
  require(std::abs(psi0.norm() - 1.0) < 1e-10, "initial wavefunction is not normalized");
  require(opts.d_lo < opts.d_hi, "subinterval needs lo < hi");

  RgReport rep;
  rep.k = k;
  rep.dx = grid.dx;
  rep.dt = opts.dt;
  rep.x = grid.nodes();
  if (opts.dt > 1e-3)
    rep.warnings.push_back("dt above 1e-3: the time finite difference may be inaccurate");
  if (k == 1)
    rep.warnings.push_back("k = 1 uses a third time derivative; noise grows as dt^-3");

  const PotentialField cv = canonical(v, n);
  const PotentialField cp = canonical(vp, n);
  const RVec rho0 = psi0.density();
  const UField uf = compute_u(grid, rho0, v, vp, k);

  // States at t0 + j dt, j = -2 .. 2.
  std::array<RVec, 5> drho;
  const double dt = opts.dt;
  for (int dir : {-1, 1}) {
    Vec a = psi0.psi;
    Vec b = psi0.psi;
    for (int j = 1; j <= 2; ++j) {
      const double t = dir * (j - 1) * dt;
      crank_nicolson_step(grid, cv, t, dir * dt, a);
      crank_nicolson_step(grid, cp, t, dir * dt, b);
      const GridWavefunction wa{grid, a}, wb{grid, b};
      rep.max_norm_drift = std::max({rep.max_norm_drift, std::abs(wa.norm() - 1.0),
                                     std::abs(wb.norm() - 1.0)});
      drho[static_cast<std::size_t>(2 + dir * j)] = wa.density() - wb.density();
    }
  }
  drho[2] = RVec::Zero(n);

  double stencil_abs = 0.0;
  if (k == 0) {
    rep.lhs = (-drho[4] + 16.0 * drho[3] - 30.0 * drho[2] + 16.0 * drho[1] - drho[0]) /
              (12.0 * dt * dt);
    stencil_abs = 64.0 / (12.0 * dt * dt);
  } else {
    rep.lhs = (drho[4] - 2.0 * drho[3] + 2.0 * drho[1] - drho[0]) / (2.0 * dt * dt * dt);
    stencil_abs = 6.0 / (2.0 * dt * dt * dt);
  }
  const RVec &div = uf.div_u;
  rep.rhs = opts.sign == RgSign::physical ? RVec(div) : RVec(-div);

  rep.signal = rep.rhs.cwiseAbs().maxCoeff();
  rep.residual = (rep.lhs - rep.rhs).cwiseAbs().maxCoeff();
  rep.relative_residual = rep.signal > 0.0 ? rep.residual / rep.signal : rep.residual;
  rep.relative_residual_other_sign =
      rep.signal > 0.0 ? (rep.lhs + rep.rhs).cwiseAbs().maxCoeff() / rep.signal : 0.0;

  double sig_D = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (rep.x(i) < opts.d_lo || rep.x(i) > opts.d_hi)
      continue;
    rep.residual_D = std::max(rep.residual_D, std::abs(rep.lhs(i) - rep.rhs(i)));
    rep.max_div_u_D = std::max(rep.max_div_u_D, std::abs(div(i)));
    sig_D = std::max(sig_D, std::abs(rep.rhs(i)));
  }
  rep.relative_residual_D = sig_D > 0.0 ? rep.residual_D / sig_D : rep.residual_D;

  rep.noise_floor = 16.0 * std::numeric_limits<double>::epsilon() * rho0.maxCoeff() * stencil_abs;
  if (rep.signal > 0.0 && rep.noise_floor > 0.1 * rep.signal) {
    rep.inconclusive = true;
    std::ostringstream msg;
    msg << "inconclusive: noise floor " << rep.noise_floor << " exceeds a tenth of the signal "
        << rep.signal;
    rep.warnings.push_back(msg.str());
  }
  if (rep.max_norm_drift > 1e-10)
    rep.warnings.push_back("norm drift above 1e-10 during propagation");
  return rep;
}

void parse_perturbation(const std::string &spec, RgProblem &p) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  require(kind == "quadratic" || kind == "linear",
          "perturbation must be quadratic:<eps> or linear:<eps>, got '" + spec + "'");
  p.perturbation = kind;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      p.epsilon = std::stod(spec.substr(colon + 1), &used);
      require(used == spec.size() - colon - 1, "bad perturbation strength in '" + spec + "'");
    } catch (const std::logic_error &) {
      throw ValidationError("bad perturbation strength in '" + spec + "'");
    }
  }
  require(std::isfinite(p.epsilon), "perturbation strength must be finite");
}

RgReport run_rg_problem(const RgProblem &p) {
  const Grid1D grid = Grid1D::make(p.xmin, p.xmax, p.dx);
  RVec w0;
  if (p.potential == "harmonic")
    w0 = grid.sample([](double x) { return 0.5 * x * x; });
  else if (p.potential == "well")
    w0 = RVec::Zero(grid.n);
  else
    throw ValidationError("unknown potential '" + p.potential + "' (expected harmonic | well)");
  RVec dw;
  if (p.perturbation == "quadratic")
    dw = grid.sample([&](double x) { return 0.5 * p.epsilon * x * x; });
  else if (p.perturbation == "linear")
    dw = grid.sample([&](double x) { return p.epsilon * x; });
  else
    throw ValidationError("unknown perturbation '" + p.perturbation + "'");

  const GroundState gs = ground_state_1d(grid, w0);
  PotentialField v = PotentialField::stationary(w0);
  PotentialField vp = PotentialField::stationary(w0);
  if (p.k == 0) {
    vp.w[0] -= dw;
  } else {
    v.w.push_back(RVec::Zero(grid.n));
    vp.w.push_back(-dw);
  }
  v = v.shifted(p.gauge);
  vp = vp.shifted(p.gauge);

  RgOptions o;
  o.dt = p.dt;
  o.d_lo = p.d_lo;
  o.d_hi = p.d_hi;
  o.sign = p.sign;
  o.allow_k1 = p.k == 1;
  RgReport rep = check_rg_identity(gs.psi, v, vp, p.k, o);
  rep.warnings.insert(rep.warnings.end(), gs.warnings.begin(), gs.warnings.end());
  return rep;
}

RgLadder rg_refinement_ladder(const RgProblem &base, int levels) {
  require(levels >= 2, "a refinement ladder needs at least two levels");
  RgLadder ladder;
  ladder.levels.resize(static_cast<std::size_t>(levels));
  std::vector<std::string> errors(static_cast<std::size_t>(levels));
#pragma omp parallel for schedule(dynamic)
  for (int l = 0; l < levels; ++l) {
    RgProblem p = base;
    p.dx = base.dx / std::pow(2.0, l);
    p.dt = base.dt / std::pow(2.0, l);
    try {
      ladder.levels[static_cast<std::size_t>(l)] = run_rg_problem(p);
    } catch (const std::exception &e) {
      errors[static_cast<std::size_t>(l)] = e.what();
    }
  }
  for (const auto &e : errors)
    if (!e.empty())
      throw ValidationError(e);
  // Least-squares slope of log residual against log dx.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const RgReport &r : ladder.levels) {
    const double lx = std::log(r.dx);
    const double ly = std::log(std::max(r.residual, std::numeric_limits<double>::min()));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double m = static_cast<double>(levels);
  ladder.fitted_order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return ladder;
}

} // namespace openrdm
