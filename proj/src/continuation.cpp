#include "openrdm/continuation.hpp"

#include "openrdm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace openrdm {

using Eigen::Index;

int MultiIndex::total() const {
  int s = 0;
  for (int i = 0; i < dim; ++i)
    s += g[static_cast<std::size_t>(i)];
  return s;
}

std::uint64_t MultiIndex::factorial() const {
  std::uint64_t f = 1;
  for (int i = 0; i < dim; ++i)
    for (int k = 2; k <= g[static_cast<std::size_t>(i)]; ++k)
      f *= static_cast<std::uint64_t>(k);
  return f;
}

double MultiIndex::power(const RVec &x) const {
  double p = 1.0;
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < g[static_cast<std::size_t>(i)]; ++k)
      p *= x(i);
  return p;
}

std::vector<MultiIndex> MultiIndex::graded(int dim, int max_order) {
  require(dim >= 1 && dim <= kMaxDim, "dimension must be 1, 2 or 3");
  require(max_order >= 0 && max_order <= 20, "max_order must be in [0, 20]");
  std::vector<MultiIndex> out;
  for (int n = 0; n <= max_order; ++n) {
    if (dim == 1) {
      out.push_back(MultiIndex{{n, 0, 0}, 1});
    } else if (dim == 2) {
      for (int a = n; a >= 0; --a)
        out.push_back(MultiIndex{{a, n - a, 0}, 2});
    } else {
      for (int a = n; a >= 0; --a)
        for (int b = n - a; b >= 0; --b)
          out.push_back(MultiIndex{{a, b, n - a - b}, 3});
    }
  }
  return out;
}

MultiIndex MultiIndex::of(std::initializer_list<int> entries) {
  require(entries.size() >= 1 && entries.size() <= kMaxDim, "multi-index dimension out of range");
  MultiIndex m;
  m.dim = static_cast<int>(entries.size());
  int i = 0;
  for (int e : entries) {
    require(e >= 0, "multi-index entries must be non-negative");
    m.g[static_cast<std::size_t>(i++)] = e;
  }
  return m;
}

std::string to_string(const MultiIndex &m) {
  std::ostringstream s;
  s << '(';
  for (int i = 0; i < m.dim; ++i)
    s << (i ? "," : "") << m.g[static_cast<std::size_t>(i)];
  s << ')';
  return s.str();
}

// ---------------------------------------------------------------------------

bool Box::contains(const RVec &x, double tol) const {
  if (x.size() != lo.size())
    return false;
  for (Index i = 0; i < lo.size(); ++i) {
    const double t = tol * std::max(1.0, hi(i) - lo(i));
    if (x(i) < lo(i) - t || x(i) > hi(i) + t)
      return false;
  }
  return true;
}

Box Box::make(std::initializer_list<double> lo_hi_pairs) {
  require(lo_hi_pairs.size() % 2 == 0 && lo_hi_pairs.size() >= 2 &&
              lo_hi_pairs.size() <= 2 * kMaxDim,
          "box needs lo,hi pairs for 1 to 3 axes");
  const auto d = static_cast<Index>(lo_hi_pairs.size() / 2);
  Box b{RVec(d), RVec(d)};
  auto it = lo_hi_pairs.begin();
  for (Index i = 0; i < d; ++i) {
    b.lo(i) = *it++;
    b.hi(i) = *it++;
    require(std::isfinite(b.lo(i)) && std::isfinite(b.hi(i)) && b.lo(i) < b.hi(i),
            "box axis " + std::to_string(i) + " needs lo < hi");
  }
  return b;
}

Box Box::parse(const std::string &s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      require(used == tok.size() || tok.find_first_not_of(" \t", used) == std::string::npos,
              "bad number '" + tok + "' in box '" + s + "'");
    } catch (const std::logic_error &) {
      throw ValidationError("bad number '" + tok + "' in box '" + s + "'");
    }
  }
  require(v.size() % 2 == 0 && v.size() >= 2 && v.size() <= 2 * kMaxDim,
          "box '" + s + "' must be lo,hi pairs for 1 to 3 axes");
  const auto d = static_cast<Index>(v.size() / 2);
  Box b{RVec(d), RVec(d)};
  for (Index i = 0; i < d; ++i) {
    b.lo(i) = v[static_cast<std::size_t>(2 * i)];
    b.hi(i) = v[static_cast<std::size_t>(2 * i + 1)];
    require(b.lo(i) < b.hi(i), "box '" + s + "' needs lo < hi on every axis");
  }
  return b;
}

Box Box::hull(const Box &a, const Box &b) {
  require(a.dim() == b.dim(), "box dimension mismatch");
  return Box{a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi)};
}

// ---------------------------------------------------------------------------

SampledFunction::SampledFunction(Box box, std::vector<Index> counts, std::vector<double> values)
    : box_(std::move(box)), counts_(std::move(counts)), values_(std::move(values)) {
  require(box_.dim() >= 1 && box_.dim() <= kMaxDim, "samples must be 1-, 2- or 3-dimensional");
  require(static_cast<int>(counts_.size()) == box_.dim(), "one grid count per axis required");
  std::size_t n = 1;
  for (Index c : counts_) {
    require(c >= 2, "each axis needs at least two grid nodes");
    n *= static_cast<std::size_t>(c);
  }
  require(values_.size() == n, "sample count does not match the grid");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(values_[i])) {
      std::ostringstream msg;
      msg << "non-finite sample at node " << node(i).transpose();
      throw ValidationError(msg.str());
    }
}

SampledFunction SampledFunction::from_function(const Box &box, const std::vector<Index> &counts,
                                               const std::function<double(const RVec &)> &f) {
  std::size_t n = 1;
  for (Index c : counts)
    n *= static_cast<std::size_t>(std::max<Index>(c, 0));
  SampledFunction proto(box, counts, std::vector<double>(n, 0.0));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = f(proto.node(i));
  return proto.with_values(std::move(v));
}

SampledFunction SampledFunction::with_values(std::vector<double> values) const {
  return SampledFunction(box_, counts_, std::move(values));
}

double SampledFunction::spacing(int axis) const {
  return (box_.hi(axis) - box_.lo(axis)) / static_cast<double>(count(axis) - 1);
}

double SampledFunction::min_spacing() const {
  double h = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim(); ++a)
    h = std::min(h, spacing(a));
  return h;
}

RVec SampledFunction::node(std::size_t flat) const {
  RVec x(dim());
  for (int a = dim() - 1; a >= 0; --a) {
    const auto c = static_cast<std::size_t>(count(a));
    const auto i = flat % c;
    flat /= c;
    // Endpoint-exact placement.
    x(a) = i + 1 == c ? box_.hi(a)
                      : box_.lo(a) + static_cast<double>(i) * spacing(a);
  }
  return x;
}

std::size_t SampledFunction::flat_index(const std::array<Index, kMaxDim> &idx) const {
  std::size_t f = 0;
  for (int a = 0; a < dim(); ++a)
    f = f * static_cast<std::size_t>(count(a)) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
  return f;
}

bool SampledFunction::same_grid(const SampledFunction &o, double tol) const {
  if (dim() != o.dim() || counts_ != o.counts_)
    return false;
  const double scale = std::max(1.0, box_.diameter());
  return (box_.lo - o.box_.lo).cwiseAbs().maxCoeff() <= tol * scale &&
         (box_.hi - o.box_.hi).cwiseAbs().maxCoeff() <= tol * scale;
}

// ---------------------------------------------------------------------------

TaylorModel::TaylorModel(RVec x0, std::vector<MultiIndex> indices, std::vector<double> coeffs)
    : x0_(std::move(x0)), indices_(std::move(indices)), coeffs_(std::move(coeffs)) {
  require(indices_.size() == coeffs_.size(), "Taylor model: one coefficient per index");
  require(!indices_.empty() && indices_.front().total() == 0,
          "Taylor model must start with the constant term");
  for (const auto &m : indices_) {
    require(m.dim == x0_.size(), "Taylor model: index dimension mismatch");
    order_ = std::max(order_, m.total());
  }
}

double TaylorModel::coefficient(const MultiIndex &m) const {
  for (std::size_t i = 0; i < indices_.size(); ++i)
    if (indices_[i] == m)
      return coeffs_[i];
  return 0.0;
}

double TaylorModel::derivative(const MultiIndex &m) const {
  return coefficient(m) * static_cast<double>(m.factorial());
}

bool TaylorModel::in_trust_region(const RVec &x) const {
  return radius_infinite || (x - x0_).norm() < trust_radius() * (1.0 + 1e-12);
}

double TaylorModel::evaluate(const RVec &x) const {
  require(x.size() == x0_.size(), "Taylor model: point dimension mismatch");
  if (!in_trust_region(x)) {
    std::ostringstream msg;
    msg << "point at distance " << (x - x0_).norm() << " from the expansion point "
        << x0_.transpose() << " is outside the trust radius " << trust_radius()
        << " (radius estimate " << radius_estimate << ")";
    throw NumericalFailure(msg.str());
  }
  return evaluate_unchecked(x);
}

double TaylorModel::evaluate_unchecked(const RVec &x) const {
  const RVec dx = x - x0_;
  const int d = dim();
  // powers[a][k] = dx_a^k
  std::array<std::vector<double>, kMaxDim> pw;
  for (int a = 0; a < d; ++a) {
    auto &p = pw[static_cast<std::size_t>(a)];
    p.assign(static_cast<std::size_t>(order_) + 1, 1.0);
    for (int k = 1; k <= order_; ++k)
      p[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k - 1)] * dx(a);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    double term = coeffs_[i];
    for (int a = 0; a < d; ++a)
      term *= pw[static_cast<std::size_t>(a)]
                [static_cast<std::size_t>(indices_[i].g[static_cast<std::size_t>(a)])];
    s += term;
  }
  return s;
}

namespace {

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i)
    b = b * static_cast<double>(n - k + i) / static_cast<double>(i);
  return b;
}

} // namespace

TaylorModel TaylorModel::recentered(const RVec &x1) const {
  require(x1.size() == x0_.size(), "recenter: point dimension mismatch");
  const RVec delta = x1 - x0_;
  const int d = dim();
  std::vector<double> c(indices_.size(), 0.0);
  for (std::size_t j = 0; j < indices_.size(); ++j) {
    const MultiIndex &beta = indices_[j];
    double s = 0.0;
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      const MultiIndex &gamma = indices_[i];
      double w = coeffs_[i];
      for (int a = 0; a < d && w != 0.0; ++a) {
        const int ga = gamma.g[static_cast<std::size_t>(a)];
        const int ba = beta.g[static_cast<std::size_t>(a)];
        if (ga < ba) {
          w = 0.0;
          break;
        }
        w *= binomial(ga, ba) * std::pow(delta(a), ga - ba);
      }
      s += w;
    }
    c[j] = s;
  }
  TaylorModel m(x1, indices_, std::move(c));
  m.safety_fraction = safety_fraction;
  m.fit_halfwidth = fit_halfwidth;
  m.finite_series = finite_series;
  return m;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<RVec> slice_directions(int d) {
  std::vector<RVec> dirs;
  for (int a = 0; a < d; ++a)
    dirs.push_back(RVec::Unit(d, a));
  if (d == 2) {
    dirs.push_back(RVec::Constant(2, 1.0 / std::sqrt(2.0)));
    RVec v(2);
    v << 1.0, -1.0;
    dirs.push_back(v / std::sqrt(2.0));
  } else if (d == 3) {
    for (int sy : {1, -1})
      for (int sz : {1, -1}) {
        RVec v(3);
        v << 1.0, sy, sz;
        dirs.push_back(v / std::sqrt(3.0));
      }
  }
  return dirs;
}

// Radius estimate without clamping. `noise_scale` is the length scale on which
// the coefficients were fitted: |b_k| h^k below rounding is treated as zero.
RadiusEstimate raw_radius(const TaylorModel &m, double noise_scale) {
  const int N = m.order();
  RadiusEstimate est;
  est.radius = std::numeric_limits<double>::infinity();
  est.infinite = true;
  if (N == 0 || m.finite_series)
    return est;
  const double h = noise_scale > 0.0 ? noise_scale : 1.0;
  for (const RVec &e : slice_directions(m.dim())) {
    std::vector<double> b(static_cast<std::size_t>(N) + 1, 0.0);
    for (std::size_t i = 0; i < m.indices().size(); ++i)
      b[static_cast<std::size_t>(m.indices()[i].total())] += m.coeffs()[i] * m.indices()[i].power(e);
    double S = std::abs(b[0]);
    if (S == 0.0)
      for (int j = 1; j <= N; ++j)
        S = std::max(S, std::abs(b[static_cast<std::size_t>(j)]) * std::pow(h, j));
    if (S == 0.0)
      continue;
    est.decay = std::max(est.decay, std::abs(b[static_cast<std::size_t>(N)]) * std::pow(h, N) / S);
    for (int k = std::max(1, (N + 1) / 2); k <= N; ++k) {
      const double bk = std::abs(b[static_cast<std::size_t>(k)]);
      if (bk * std::pow(h, k) <= 1e-14 * S)
        continue;
      est.infinite = false;
      est.radius = std::min(est.radius, std::pow(S / bk, 1.0 / k));
    }
  }
  return est;
}

void assign_radius(TaylorModel &m, double spacing, double cap) {
  const RadiusEstimate raw = raw_radius(m, m.fit_halfwidth);
  m.radius_infinite = raw.infinite;
  m.radius_estimate = raw.infinite ? cap : std::clamp(raw.radius, spacing, cap);
}

struct Stencil {
  std::array<std::vector<double>, kMaxDim> coords; // per-axis node coordinates
  std::array<std::vector<Index>, kMaxDim> nodes;   // per-axis grid indices
  RVec halfwidth;
};

int stencil_size(int max_order, const FitOptions &opts) {
  int m = opts.stencil_points > 0 ? opts.stencil_points : max_order + 4;
  if (m % 2 == 0)
    ++m;
  return m;
}

// Centered stencil of m nodes per axis with the largest stride that stays on
// the grid. Empty result when even stride 1 does not fit.
bool build_stencil(const SampledFunction &s, const RVec &x0, int m, Stencil &out,
                   std::string *why) {
  const Index half = (m - 1) / 2;
  out.halfwidth = RVec(s.dim());
  for (int a = 0; a < s.dim(); ++a) {
    const double h = s.spacing(a);
    const Index n = s.count(a);
    const double pos = (x0(a) - s.box().lo(a)) / h;
    const Index c = static_cast<Index>(std::llround(pos));
    if (c < 0 || c >= n || std::abs(pos - static_cast<double>(c)) > 0.5 + 1e-9) {
      if (why)
        *why = "expansion point lies outside the sample box on axis " + std::to_string(a);
      return false;
    }
    const Index stride = std::min(c, n - 1 - c) / std::max<Index>(half, 1);
    if (stride < 1) {
      if (why) {
        std::ostringstream msg;
        msg << "expansion point is too close to the boundary on axis " << a << ": the " << m
            << "-point stencil needs " << half << " nodes on each side, found "
            << std::min(c, n - 1 - c);
        *why = msg.str();
      }
      return false;
    }
    auto &co = out.coords[static_cast<std::size_t>(a)];
    auto &no = out.nodes[static_cast<std::size_t>(a)];
    co.clear();
    no.clear();
    for (Index k = -half; k <= half; ++k) {
      const Index idx = c + k * stride;
      no.push_back(idx);
      co.push_back(idx + 1 == n ? s.box().hi(a) : s.box().lo(a) + static_cast<double>(idx) * h);
    }
    out.halfwidth(a) = static_cast<double>(half * stride) * h;
  }
  return true;
}

template <class F> void for_each_stencil_node(const SampledFunction &s, const Stencil &st, F &&f) {
  const int d = s.dim();
  const auto m = st.nodes[0].size();
  std::array<std::size_t, kMaxDim> k{};
  const std::size_t total = static_cast<std::size_t>(std::pow(m, d) + 0.5);
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t r = t;
    for (int a = d - 1; a >= 0; --a) {
      k[static_cast<std::size_t>(a)] = r % m;
      r /= m;
    }
    std::array<Index, kMaxDim> idx{};
    for (int a = 0; a < d; ++a)
      idx[static_cast<std::size_t>(a)] = st.nodes[static_cast<std::size_t>(a)][k[static_cast<std::size_t>(a)]];
    f(k, s.value(s.flat_index(idx)));
  }
}

} // namespace

RadiusEstimate estimate_radius(const TaylorModel &m) { return raw_radius(m, m.fit_halfwidth); }

FitMethod parse_fit_method(const std::string &s) {
  if (s == "least-squares" || s == "lsq")
    return FitMethod::least_squares;
  if (s == "finite-difference" || s == "fd")
    return FitMethod::finite_difference;
  throw ValidationError("unknown fit method '" + s + "' (expected least-squares | finite-difference)");
}

double stencil_halfwidth(const SampledFunction &samples, const RVec &x0, int max_order,
                         const FitOptions &opts) {
  if (x0.size() != samples.dim())
    return 0.0;
  Stencil st;
  if (!build_stencil(samples, x0, stencil_size(max_order, opts), st, nullptr))
    return 0.0;
  return st.halfwidth.minCoeff();
}

RMat fornberg_weights(double z, const RVec &x, int m) {
  const Index n = x.size() - 1;
  RMat c = RMat::Zero(n + 1, m + 1);
  double c1 = 1.0;
  double c4 = x(0) - z;
  c(0, 0) = 1.0;
  for (Index i = 1; i <= n; ++i) {
    const Index mn = std::min<Index>(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x(i) - z;
    for (Index j = 0; j < i; ++j) {
      const double c3 = x(i) - x(j);
      c2 *= c3;
      if (j == i - 1) {
        for (Index k = mn; k >= 1; --k)
          c(i, k) = c1 * (static_cast<double>(k) * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
        c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
      }
      for (Index k = mn; k >= 1; --k)
        c(j, k) = (c4 * c(j, k) - static_cast<double>(k) * c(j, k - 1)) / c3;
      c(j, 0) = c4 * c(j, 0) / c3;
    }
    c1 = c2;
  }
  return c;
}

TaylorModel fit_taylor(const SampledFunction &samples, const RVec &x0, int max_order,
                       const FitOptions &opts) {
  const int d = samples.dim();
  require(x0.size() == d, "fit_taylor: expansion point dimension mismatch");
  require(max_order >= 0 && max_order <= 18, "fit_taylor: max_order must be in [0, 18]");
  require(opts.safety_fraction > 0.0 && opts.safety_fraction <= 1.0,
          "fit_taylor: safety_fraction must be in (0, 1]");
  const int m = stencil_size(max_order, opts);
  Stencil st;
  std::string why;
  if (!build_stencil(samples, x0, m, st, &why))
    throw ValidationError("fit_taylor: " + why);

  std::vector<MultiIndex> idx;
  std::vector<double> coeffs;
  bool finite_series = false;

  if (opts.method == FitMethod::least_squares) {
    const int P = max_order + std::max(0, opts.extra_degree);
    require(P <= m - 1, "fit_taylor: least-squares degree exceeds the stencil size");
    const auto all = MultiIndex::graded(d, P);
    const auto rows = static_cast<Index>(std::pow(m, d) + 0.5);
    RMat A(rows, static_cast<Index>(all.size()));
    RVec f(rows);
    Index r = 0;
    for_each_stencil_node(samples, st, [&](const std::array<std::size_t, kMaxDim> &k, double v) {
      RVec xi(d);
      for (int a = 0; a < d; ++a)
        xi(a) = (st.coords[static_cast<std::size_t>(a)][k[static_cast<std::size_t>(a)]] - x0(a)) /
                st.halfwidth(a);
      for (std::size_t j = 0; j < all.size(); ++j)
        A(r, static_cast<Index>(j)) = all[j].power(xi);
      f(r) = v;
      ++r;
    });
    const double fmax = f.cwiseAbs().maxCoeff();
    RVec a = RVec::Zero(static_cast<Index>(all.size()));
    Index used = 1;
    bool terminated = fmax == 0.0;
    if (fmax > 0.0) {
      const double target = opts.noise_floor * fmax * std::sqrt(static_cast<double>(rows));
      for (int p = 0; p <= P; ++p) {
        const auto cols = static_cast<Index>(MultiIndex::graded(d, p).size());
        const auto qr = A.leftCols(cols).colPivHouseholderQr();
        RVec sol = qr.solve(f);
        const double res = (A.leftCols(cols) * sol - f).norm();
        a.setZero();
        a.head(cols) = sol;
        used = cols;
        if (res <= target) {
          terminated = p < P;
          break;
        }
      }
    }
    finite_series = terminated;
    idx.assign(all.begin(), all.begin() + used);
    for (Index j = 0; j < used; ++j) {
      double scale = 1.0;
      for (int ax = 0; ax < d; ++ax)
        scale *= std::pow(st.halfwidth(ax), all[static_cast<std::size_t>(j)].g[static_cast<std::size_t>(ax)]);
      coeffs.push_back(a(j) / scale);
    }
  } else {
    const int K = std::min(max_order, m - 1);
    std::array<RMat, kMaxDim> w;
    for (int ax = 0; ax < d; ++ax) {
      const auto &co = st.coords[static_cast<std::size_t>(ax)];
      w[static_cast<std::size_t>(ax)] =
          fornberg_weights(x0(ax), Eigen::Map<const RVec>(co.data(), static_cast<Index>(co.size())), K);
    }
    idx = MultiIndex::graded(d, K);
    coeffs.assign(idx.size(), 0.0);
    for_each_stencil_node(samples, st, [&](const std::array<std::size_t, kMaxDim> &k, double v) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        double wt = 1.0;
        for (int ax = 0; ax < d; ++ax)
          wt *= w[static_cast<std::size_t>(ax)](static_cast<Index>(k[static_cast<std::size_t>(ax)]),
                                                idx[j].g[static_cast<std::size_t>(ax)]);
        coeffs[j] += wt * v;
      }
    });
    for (std::size_t j = 0; j < idx.size(); ++j)
      coeffs[j] /= static_cast<double>(idx[j].factorial());
  }

  TaylorModel model(x0, std::move(idx), std::move(coeffs));
  model.safety_fraction = opts.safety_fraction;
  model.fit_halfwidth = st.halfwidth.minCoeff();
  model.finite_series = finite_series;
  const double cap = opts.radius_cap > 0.0 ? opts.radius_cap : samples.box().diameter();
  assign_radius(model, samples.min_spacing(), cap);
  return model;
}

// ---------------------------------------------------------------------------

std::vector<RVec> default_path(const Box &D, const Box &U) {
  require(D.dim() == U.dim(), "default_path: box dimension mismatch");
  const RVec c = D.center();
  std::vector<RVec> path{c};
  if (D.dim() == 1) {
    RVec lo = U.lo, hi = U.hi;
    if (c(0) <= U.lo(0)) {
      path.push_back(hi);
    } else if (c(0) >= U.hi(0)) {
      path.push_back(lo);
    } else {
      path.push_back(lo);
      path.push_back(hi);
    }
    return path;
  }
  const RVec uc = U.center();
  path.push_back(uc);
  const int d = D.dim();
  for (int corner = 0; corner < (1 << d); ++corner) {
    RVec x(d);
    for (int a = 0; a < d; ++a)
      x(a) = (corner >> a) & 1 ? U.hi(a) : U.lo(a);
    path.push_back(x);
    path.push_back(uc);
  }
  return path;
}

namespace {

double distance_to_singularities(const RVec &x, const ContinuationOptions &opts) {
  double dist = std::numeric_limits<double>::infinity();
  for (const RVec &s : opts.singular_points)
    dist = std::min(dist, (x - s).norm());
  return dist;
}

void validate_path(const std::vector<RVec> &path, const Box &D, const Box &U, double h,
                   const ContinuationOptions &opts) {
  require(path.size() >= 2, "continuation path needs at least two points");
  for (const RVec &p : path)
    require(p.size() == D.dim(), "continuation path point has the wrong dimension");
  require(D.contains(path.front(), 0.0), "continuation path must start inside the sampled box D");
  for (const RVec &s : opts.singular_points)
    require(s.size() == D.dim(), "singular point has the wrong dimension");
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double len = (path[i + 1] - path[i]).norm();
    const auto n = static_cast<Index>(std::ceil(len / (0.5 * h))) + 1;
    for (Index k = 0; k <= n; ++k) {
      const RVec x = path[i] + (path[i + 1] - path[i]) * (static_cast<double>(k) / n);
      if (!D.contains(x) && !U.contains(x)) {
        std::ostringstream msg;
        msg << "continuation path leaves D and U at " << x.transpose();
        throw ValidationError(msg.str());
      }
      if (distance_to_singularities(x, opts) < opts.exclusion_radius) {
        std::ostringstream msg;
        msg << "continuation path enters the exclusion radius of a singular point at "
            << x.transpose();
        throw ValidationError(msg.str());
      }
    }
  }
}

ContinuationStep describe(const TaylorModel &m, bool refit) {
  ContinuationStep s;
  s.x0 = m.x0();
  s.radius = m.radius_estimate;
  s.radius_infinite = m.radius_infinite;
  s.order = m.order();
  s.coeff_decay = estimate_radius(m).decay;
  s.refit = refit;
  return s;
}

} // namespace

ContinuationResult continue_along_path(const SampledFunction &samples,
                                       const std::vector<RVec> &path, const Box &U,
                                       const std::vector<Index> &U_counts,
                                       const ContinuationOptions &opts) {
  const Box &D = samples.box();
  require(U.dim() == D.dim(), "target box dimension differs from the samples");
  require(opts.step_fraction > 0.0 && opts.step_fraction < 1.0,
          "step_fraction must lie in (0, 1)");
  require(opts.exclusion_radius >= 0.0, "exclusion radius must be non-negative");
  const double h = samples.min_spacing();
  validate_path(path, D, U, h, opts);

  FitOptions fit = opts.fit;
  const double cap = fit.radius_cap > 0.0 ? fit.radius_cap : Box::hull(D, U).diameter();
  fit.radius_cap = cap;

  ContinuationResult result;
  TaylorModel model = fit_taylor(samples, path.front(), opts.max_order, fit);
  result.models.push_back(model);
  result.steps.push_back(describe(model, true));

  std::size_t seg = 0;
  double along = 0.0; // distance travelled within segment `seg`
  RVec x = path.front();
  for (Index step = 0;; ++step) {
    while (seg + 1 < path.size() && along >= (path[seg + 1] - path[seg]).norm() - 1e-14) {
      along = 0.0;
      ++seg;
    }
    if (seg + 1 >= path.size())
      break;
    if (step >= opts.max_steps)
      throw NumericalFailure("continuation exceeded " + std::to_string(opts.max_steps) + " steps");

    const RadiusEstimate raw = raw_radius(model, model.fit_halfwidth);
    double r = raw.infinite ? cap : raw.radius;
    r = std::min(r, cap);
    r = std::min(r, distance_to_singularities(x, opts));
    if (r < h) {
      std::ostringstream msg;
      msg << "radius collapse: estimate " << r << " is below the grid spacing " << h
          << "; furthest point reached " << x.transpose();
      throw NumericalFailure(msg.str());
    }
    const double len = (path[seg + 1] - path[seg]).norm();
    along = std::min(len, along + opts.step_fraction * r);
    x = path[seg] + (path[seg + 1] - path[seg]) * (along / len);

    const double hw = D.contains(x) ? stencil_halfwidth(samples, x, opts.max_order, fit) : 0.0;
    if (hw > 0.0 && hw >= model.fit_halfwidth * (1.0 - 1e-12)) {
      model = fit_taylor(samples, x, opts.max_order, fit);
      result.steps.push_back(describe(model, true));
    } else {
      model = model.recentered(x);
      assign_radius(model, h, cap);
      result.steps.push_back(describe(model, false));
    }
    result.models.push_back(model);
  }

  // Each target node takes the nearest expansion whose trust ball contains it.
  std::size_t n_nodes = 1;
  for (Index c : U_counts)
    n_nodes *= static_cast<std::size_t>(std::max<Index>(c, 0));
  SampledFunction grid(U, U_counts, std::vector<double>(n_nodes, 0.0));
  std::vector<double> values(n_nodes);
  std::vector<char> covered(n_nodes, 1);
  const long long count = static_cast<long long>(n_nodes);
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < count; ++t) {
    const RVec xn = grid.node(static_cast<std::size_t>(t));
    const TaylorModel *best = nullptr;
    const TaylorModel *nearest = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    double near_d = best_d;
    for (const TaylorModel &m : result.models) {
      const double dist = (xn - m.x0()).norm();
      if (dist < near_d) {
        near_d = dist;
        nearest = &m;
      }
      if (m.in_trust_region(xn) && dist < best_d) {
        best_d = dist;
        best = &m;
      }
    }
    if (!best) {
      covered[static_cast<std::size_t>(t)] = 0;
      best = nearest;
    }
    values[static_cast<std::size_t>(t)] = best->evaluate_unchecked(xn);
  }
  for (std::size_t t = 0; t < n_nodes; ++t)
    if (!covered[t]) {
      if (result.uncovered_nodes == 0 && opts.require_coverage) {
        std::size_t total = 0;
        for (char c : covered)
          total += c ? 0 : 1;
        std::ostringstream msg;
        msg << total << " target nodes lie outside every trust region, first at "
            << grid.node(t).transpose();
        throw NumericalFailure(msg.str());
      }
      ++result.uncovered_nodes;
    }
  for (double v : values)
    if (!std::isfinite(v))
      throw NumericalFailure("continuation produced non-finite values");
  result.values = grid.with_values(std::move(values));
  return result;
}

UniquenessReport certify_uniqueness(const SampledFunction &f, const SampledFunction &g,
                                    const std::vector<RVec> &path, const Box &U,
                                    const std::vector<Index> &U_counts,
                                    const CertifyOptions &opts) {
  require(f.same_grid(g), "certify_uniqueness: f and g must share the same grid over D");
  UniquenessReport rep;
  for (std::size_t i = 0; i < f.size(); ++i)
    rep.max_diff_D = std::max(rep.max_diff_D, std::abs(f.value(i) - g.value(i)));
  rep.agree_on_D = rep.max_diff_D < opts.tol_agree;
  if (!rep.agree_on_D) {
    std::ostringstream msg;
    msg << "f and g disagree on D: max |f - g| = " << rep.max_diff_D << " exceeds "
        << opts.tol_agree << "; not continued";
    rep.message = msg.str();
    return rep;
  }
  rep.f_result = continue_along_path(f, path, U, U_counts, opts.continuation);
  rep.g_result = continue_along_path(g, path, U, U_counts, opts.continuation);
  rep.continued = true;
  const auto &fu = rep.f_result.values;
  const auto &gu = rep.g_result.values;
  for (std::size_t i = 0; i < fu.size(); ++i)
    rep.max_diff_U = std::max(rep.max_diff_U, std::abs(fu.value(i) - gu.value(i)));

  // Chebyshev growth of a degree-P fit evaluated at scaled distance xi.
  const TaylorModel &m0 = rep.f_result.models.front();
  double growth = 1.0;
  for (std::size_t i = 0; i < fu.size(); ++i) {
    const double xi = (fu.node(i) - m0.x0()).cwiseAbs().maxCoeff() / m0.fit_halfwidth;
    if (xi > 1.0)
      growth = std::max(growth, std::cosh(m0.order() * std::acosh(xi)));
  }
  rep.propagated_bound = rep.max_diff_D * growth;
  std::ostringstream msg;
  msg << "agree on D to " << rep.max_diff_D << "; continuations differ by " << rep.max_diff_U
      << " on U (propagated bound " << rep.propagated_bound << ")";
  rep.message = msg.str();
  return rep;
}

} // namespace openrdm
