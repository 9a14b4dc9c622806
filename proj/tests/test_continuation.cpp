#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "openrdm/continuation.hpp"
#include "openrdm/error.hpp"

#include <cmath>

using namespace openrdm;

namespace {

RVec P(double x) {
  RVec v(1);
  v << x;
  return v;
}

RVec P(double x, double y) {
  RVec v(2);
  v << x, y;
  return v;
}

using Fn = std::function<double(const RVec &)>;

double max_error(const SampledFunction &s, const Fn &f) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    e = std::max(e, std::abs(s.value(i) - f(s.node(i))));
  return e;
}

ContinuationResult continue_to(const Fn &f, const Box &D, Eigen::Index nD, const Box &U,
                               Eigen::Index nU, const ContinuationOptions &o = {}) {
  const auto s = SampledFunction::from_function(D, {nD}, f);
  return continue_along_path(s, default_path(D, U), U, {nU}, o);
}

} // namespace

TEST_CASE("multi-index arithmetic") {
  const auto m = MultiIndex::of({3, 0, 2});
  CHECK(m.total() == 5);
  CHECK(m.factorial() == 12);
  CHECK(MultiIndex::of({20}).factorial() == 2432902008176640000ULL);
  CHECK(m.power(RVec::Constant(3, 2.0)) == 32.0);
  CHECK(MultiIndex::graded(2, 3).size() == 10);
  CHECK(MultiIndex::graded(3, 2).size() == 10);
  const auto g = MultiIndex::graded(2, 4);
  for (std::size_t i = 1; i < g.size(); ++i)
    CHECK(g[i - 1].total() <= g[i].total());
  CHECK_THROWS_AS(MultiIndex::of({1, -1}), ValidationError);
  CHECK_THROWS_AS(MultiIndex::graded(4, 2), ValidationError);
}

TEST_CASE("box parsing and geometry") {
  const auto b = Box::parse("0, 1, -2,2");
  CHECK(b.dim() == 2);
  CHECK(b.contains(P(0.5, -2.0)));
  CHECK_FALSE(b.contains(P(1.1, 0.0)));
  CHECK(b.diameter() == doctest::Approx(std::sqrt(17.0)));
  CHECK_THROWS_AS(Box::parse("1,0"), ValidationError);
  CHECK_THROWS_AS(Box::parse("0,1,2"), ValidationError);
  CHECK_THROWS_AS(Box::parse("0,x"), ValidationError);
  const auto h = Box::hull(Box::make({0, 1}), Box::make({2, 3}));
  CHECK(h.lo(0) == 0.0);
  CHECK(h.hi(0) == 3.0);
}

TEST_CASE("sampled function validates its grid") {
  CHECK_THROWS_AS(SampledFunction(Box::make({0, 1}), {3}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(SampledFunction(Box::make({0, 1}), {2}, {1.0, NAN}), ValidationError);
  const auto s = SampledFunction::from_function(Box::make({0, 1, 0, 2}), {3, 5},
                                                [](const RVec &x) { return x(0) + 10 * x(1); });
  CHECK(s.spacing(1) == doctest::Approx(0.5));
  CHECK(s.node(1)(1) == doctest::Approx(0.5)); // last axis fastest
  CHECK(s.value(s.flat_index({2, 4, 0})) == doctest::Approx(21.0));
}

TEST_CASE("fornberg weights reproduce the standard stencils") {
  RVec x(3);
  x << -1.0, 0.0, 1.0;
  const RMat w = fornberg_weights(0.0, x, 2);
  CHECK(w(1, 0) == doctest::Approx(1.0));
  CHECK(w(0, 1) == doctest::Approx(-0.5));
  CHECK(w(2, 1) == doctest::Approx(0.5));
  CHECK(w(0, 2) == doctest::Approx(1.0));
  CHECK(w(1, 2) == doctest::Approx(-2.0));
}

TEST_CASE("fit of x^2 recovers the exact coefficients") {
  const auto s = SampledFunction::from_function(Box::make({-1, 1}), {41},
                                                [](const RVec &x) { return x(0) * x(0); });
  for (auto method : {FitMethod::least_squares, FitMethod::finite_difference}) {
    FitOptions o;
    o.method = method;
    const auto m = fit_taylor(s, P(0.0), 4, o);
    for (int k = 0; k <= 4; ++k)
      CHECK(std::abs(m.coefficient(MultiIndex::of({k})) - (k == 2 ? 1.0 : 0.0)) < 1e-10);
    CHECK(m.evaluate(P(0.0)) == m.coeffs()[0]);
  }
}

TEST_CASE("fit of exp recovers 1/k!") {
  const auto s = SampledFunction::from_function(Box::make({-1, 1}), {201},
                                                [](const RVec &x) { return std::exp(x(0)); });
  for (auto method : {FitMethod::least_squares, FitMethod::finite_difference}) {
    FitOptions o;
    o.method = method;
    const auto m = fit_taylor(s, P(0.0), 8, o);
    double fact = 1.0;
    for (int k = 0; k <= 8; ++k) {
      if (k > 0)
        fact *= k;
      CHECK(std::abs(m.coefficient(MultiIndex::of({k})) - 1.0 / fact) < 1e-6);
    }
    CHECK(m.radius_estimate > 0.0);
  }
  CHECK(parse_fit_method("fd") == FitMethod::finite_difference);
  CHECK_THROWS_AS(parse_fit_method("spline"), ValidationError);
}

TEST_CASE("bilinear fit has a single non-zero coefficient") {
  const auto s = SampledFunction::from_function(Box::make({-1, 1, -1, 1}), {21, 21},
                                                [](const RVec &x) { return x(0) * x(1); });
  const auto m = fit_taylor(s, P(0.0, 0.0), 4);
  for (std::size_t i = 0; i < m.indices().size(); ++i) {
    const double expect = m.indices()[i] == MultiIndex::of({1, 1}) ? 1.0 : 0.0;
    CHECK(std::abs(m.coeffs()[i] - expect) < 1e-10);
  }
  CHECK(m.radius_infinite);
}

TEST_CASE("fit refuses points too close to the boundary and all-zero data is infinite radius") {
  const auto s = SampledFunction::from_function(Box::make({0, 1}), {41},
                                                [](const RVec &x) { return std::sin(x(0)); });
  CHECK_THROWS_AS(fit_taylor(s, P(0.02), 10), ValidationError);
  CHECK_THROWS_AS(fit_taylor(s, P(1.5), 4), ValidationError);
  const auto z = s.with_values(std::vector<double>(41, 0.0));
  CHECK(fit_taylor(z, P(0.5), 6).radius_infinite);
}

TEST_CASE("trust region and exact recentering") {
  const auto s = SampledFunction::from_function(Box::make({0, 1}), {101},
                                                [](const RVec &x) { return 1.0 / (3.0 - x(0)); });
  const auto m = fit_taylor(s, P(0.5), 8);
  CHECK_FALSE(m.radius_infinite);
  CHECK(m.in_trust_region(P(0.6)));
  const auto far = P(0.5 + 2.0 * m.radius_estimate);
  CHECK_FALSE(m.in_trust_region(far));
  CHECK_THROWS_AS(m.evaluate(far), NumericalFailure);
  const auto r = m.recentered(P(0.7));
  CHECK(r.x0()(0) == 0.7);
  for (double x : {0.3, 0.55, 0.9})
    CHECK(r.evaluate_unchecked(P(x)) == doctest::Approx(m.evaluate_unchecked(P(x))).epsilon(1e-13));
}

TEST_CASE("polynomials continue exactly in one and two dimensions") {
  const Fn poly = [](const RVec &x) {
    const double t = x(0);
    return 1 - 2 * t + 0.5 * t * t * t + 0.1 * std::pow(t, 7) - 0.01 * std::pow(t, 10);
  };
  const auto r = continue_to(poly, Box::make({0, 1}), 101, Box::make({1, 3}), 201);
  double scale = 0.0;
  for (std::size_t i = 0; i < r.values.size(); ++i)
    scale = std::max(scale, std::abs(poly(r.values.node(i))));
  CHECK(max_error(r.values, poly) / scale < 1e-9);

  const Fn p2 = [](const RVec &x) {
    return 1 + x(0) * x(1) - 2 * x(0) * x(0) * x(1) + std::pow(x(1), 5);
  };
  const Box D = Box::make({0, 1, 0, 1}), U = Box::make({1, 1.5, 0, 1});
  const auto s2 = SampledFunction::from_function(D, {41, 41}, p2);
  const auto r2 = continue_along_path(s2, default_path(D, U), U, {21, 41});
  CHECK(max_error(r2.values, p2) < 1e-9);
}

TEST_CASE("two-dimensional analytic continuation") {
  const Fn f = [](const RVec &x) { return std::exp(0.5 * x(0)) * std::cos(x(1)); };
  const Box D = Box::make({0, 1, 0, 1}), U = Box::make({1, 1.5, 0, 1});
  const auto s = SampledFunction::from_function(D, {41, 41}, f);
  const auto r = continue_along_path(s, default_path(D, U), U, {21, 41});
  CHECK(max_error(r.values, f) < 1e-8);
  CHECK_FALSE(r.steps.empty());
}

TEST_CASE("gaussian error does not grow as the step fraction is halved") {
  const Fn g = [](const RVec &x) { return std::exp(-x(0) * x(0)); };
  double prev = -1.0;
  for (double sf : {0.5, 0.25, 0.125, 0.0625}) {
    ContinuationOptions o;
    o.step_fraction = sf;
    const double e = max_error(continue_to(g, Box::make({0, 1}), 101, Box::make({1, 2}), 101, o).values, g);
    if (prev >= 0.0)
      CHECK(e <= 2.0 * prev);
    prev = e;
  }
}

TEST_CASE("runge function: radius tracks the pole, single jump is refused") {
  const Fn f = [](const RVec &x) { return 1.0 / (1.0 + x(0) * x(0)); };
  const auto s = SampledFunction::from_function(Box::make({0, 0.5}), {101}, f);
  FitOptions o;
  o.radius_cap = 2.0;
  const auto m = fit_taylor(s, P(0.25), 10, o);
  CHECK(m.radius_estimate == doctest::Approx(std::sqrt(1.0 + 0.0625)).epsilon(0.05));
  CHECK_THROWS_AS(m.evaluate(P(2.0)), NumericalFailure);
  CHECK(std::abs(m.evaluate_unchecked(P(2.0)) - f(P(2.0))) > 1.0);

  ContinuationOptions co;
  co.fit.radius_cap = 2.0;
  ContinuationResult r;
  CHECK_NOTHROW(r = continue_along_path(s, {P(0.25), P(2.0)}, Box::make({0.5, 2}), {151}, co));
  CHECK(r.steps.size() > 1);
}

TEST_CASE("|x|^3 is not analytic at zero and continuation across it fails") {
  const Fn f = [](const RVec &x) { return std::abs(x(0)) * x(0) * x(0); };
  const auto r = continue_to(f, Box::make({-1, -0.25}), 101, Box::make({-0.25, 1}), 126);
  CHECK(max_error(r.values, f) > 1e-2);
}

TEST_CASE("paths must stay connected and avoid declared singular points") {
  const auto s = SampledFunction::from_function(Box::make({0, 1}), {101},
                                                [](const RVec &x) { return std::sin(x(0)); });
  const Box U = Box::make({1, 2});
  CHECK_THROWS_AS(continue_along_path(s, {P(0.5), P(3.0)}, U, {11}), ValidationError);
  CHECK_THROWS_AS(continue_along_path(s, {P(-0.5), P(2.0)}, U, {11}), ValidationError);
  ContinuationOptions o;
  o.singular_points = {P(1.5)};
  o.exclusion_radius = 0.1;
  CHECK_THROWS_AS(continue_along_path(s, {P(0.5), P(2.0)}, U, {11}, o), ValidationError);
  o.step_fraction = 1.0;
  o.singular_points.clear();
  CHECK_THROWS_AS(continue_along_path(s, {P(0.5), P(2.0)}, U, {11}, o), ValidationError);
}

TEST_CASE("derivatives of the continuation match the analytic ones") {
  const Fn f = [](const RVec &x) { return std::sin(x(0)); };
  const auto r = continue_to(f, Box::make({0, 1}), 101, Box::make({1, 2}), 101);
  const auto m = fit_taylor(r.values, P(1.5), 10);
  const double d[] = {std::sin(1.5), std::cos(1.5), -std::sin(1.5), -std::cos(1.5)};
  for (int k = 0; k <= 4; ++k)
    CHECK(std::abs(m.derivative(MultiIndex::of({k})) - d[k % 4]) < 1e-4);
}

TEST_CASE("uniqueness certification") {
  const Fn f = [](const RVec &x) { return std::sin(x(0)); };
  const Box D = Box::make({0, 1}), U = Box::make({1, 3});
  const auto s = SampledFunction::from_function(D, {101}, f);
  const auto path = default_path(D, U);

  const auto same = certify_uniqueness(s, s, path, U, {201});
  CHECK(same.agree_on_D);
  CHECK(same.continued);
  CHECK(same.max_diff_U <= 1e-9);

  std::vector<double> cubic;
  for (std::size_t i = 0; i < s.size(); ++i)
    cubic.push_back(s.value(i) + 1e-3 * std::pow(s.node(i)(0), 3));
  const auto bad = certify_uniqueness(s, s.with_values(cubic), path, U, {201});
  CHECK_FALSE(bad.agree_on_D);
  CHECK_FALSE(bad.continued);
  CHECK(bad.message.find("disagree") != std::string::npos);

  const auto m0 = fit_taylor(s, D.center(), 10);
  std::vector<double> refit;
  for (std::size_t i = 0; i < s.size(); ++i)
    refit.push_back(m0.evaluate_unchecked(s.node(i)));
  const auto rep = certify_uniqueness(s, s.with_values(refit), path, U, {201});
  CHECK(rep.agree_on_D);
  CHECK(rep.max_diff_U < 1e-5);

  const auto other = SampledFunction::from_function(D, {51}, f);
  CHECK_THROWS_AS(certify_uniqueness(s, other, path, U, {201}), ValidationError);
}
