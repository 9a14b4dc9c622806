#include "openrdm/runner.hpp"

#include "openrdm/continuation.hpp"
#include "openrdm/digest.hpp"
#include "openrdm/dissipation.hpp"
#include "openrdm/error.hpp"
#include "openrdm/full_propagator.hpp"
#include "openrdm/io.hpp"
#include "openrdm/reduced_propagator.hpp"
#include "openrdm/rg_verifier.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#ifndef OPENRDM_VERSION
#define OPENRDM_VERSION "0.0.0"
#endif

namespace openrdm {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> &known_modes() {
  static const std::vector<std::string> modes{"transport-full", "transport-reduced", "landauer",
                                              "continue",       "certify",           "rg-check"};
  return modes;
}

namespace {

// Typed access to one JSON object with field-path error messages and
// rejection of unknown keys.
class Node {
public:
  Node(const json *j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object())
      throw ValidationError(path_ + ": expected an object");
  }

  bool has(const std::string &key) const { return j_ && j_->contains(key) && !(*j_)[key].is_null(); }

  std::string path(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double num(const std::string &key, std::optional<double> def = {}) {
    const json *v = fetch(key, def.has_value());
    if (!v)
      return *def;
    if (!v->is_number())
      throw ValidationError(path(key) + ": expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d))
      throw ValidationError(path(key) + ": must be finite");
    return d;
  }

  long long integer(const std::string &key, std::optional<long long> def = {}) {
    const json *v = fetch(key, def.has_value());
    if (!v)
      return *def;
    if (!v->is_number_integer())
      throw ValidationError(path(key) + ": expected an integer");
    return v->get<long long>();
  }

  bool boolean(const std::string &key, std::optional<bool> def = {}) {
    const json *v = fetch(key, def.has_value());
    if (!v)
      return *def;
    if (!v->is_boolean())
      throw ValidationError(path(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string str(const std::string &key, std::optional<std::string> def = {}) {
    const json *v = fetch(key, def.has_value());
    if (!v)
      return *def;
    if (!v->is_string())
      throw ValidationError(path(key) + ": expected a string");
    return v->get<std::string>();
  }

  std::vector<double> nums(const std::string &key, std::optional<std::vector<double>> def = {}) {
    const json *v = fetch(key, def.has_value());
    if (!v)
      return *def;
    if (!v->is_array())
      throw ValidationError(path(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number())
        throw ValidationError(path(key) + "[" + std::to_string(i) + "]: expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  const json *raw(const std::string &key) {
    used_.insert(key);
    return has(key) ? &(*j_)[key] : nullptr;
  }

  Node child(const std::string &key) {
    used_.insert(key);
    return Node(has(key) ? &(*j_)[key] : nullptr, path(key));
  }

  void finish() const {
    if (!j_)
      return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!used_.count(it.key()))
        throw ValidationError(path(it.key()) + ": unknown field");
  }

private:
  const json *fetch(const std::string &key, bool optional) {
    used_.insert(key);
    if (!has(key)) {
      if (optional)
        return nullptr;
      throw ValidationError(path(key) + ": required field is missing");
    }
    return &(*j_)[key];
  }

  const json *j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string resolve(const std::string &base, const std::string &file) {
  const fs::path p(file);
  return p.is_absolute() ? p.string() : (fs::path(base) / p).string();
}

std::string existing_file(Node &n, const std::string &key, const std::string &base) {
  const std::string f = resolve(base, n.str(key));
  if (!fs::is_regular_file(f))
    throw ValidationError(n.path(key) + ": file '" + f + "' does not exist");
  return f;
}

// ---------------------------------------------------------------------------
// Mode blocks

struct SystemSpec {
  TightBindingSystem system = build_chain_system(1, 1, 1, -1.0, 0.0);
};

SystemSpec parse_system(Node n, const std::string &base) {
  const long long nL = n.integer("n_L", 20);
  const long long nD = n.integer("n_D", 4);
  const long long nR = n.integer("n_R", 20);
  const double hop = n.num("hopping", -1.0);
  const double onsite = n.num("onsite", 0.0);
  const bool has_coupling = n.has("coupling");
  const double coupling = n.num("coupling", hop);
  require(nL >= 0 && nD >= 1 && nR >= 0, n.path("n_D") + ": region sizes must be n_L, n_R >= 0, n_D >= 1");
  SystemSpec s;
  if (n.has("hamiltonian_file")) {
    const std::string f = existing_file(n, "hamiltonian_file", base);
    std::ifstream in(f);
    s.system = TightBindingSystem::from_matrix(read_hermitian_text(in), Partition{nL, nD, nR});
  } else {
    require(nL >= 1 && nR >= 1, n.path("n_L") + ": chain leads need at least one site");
    s.system = build_chain_system(nL, nD, nR, hop, onsite);
  }
  if (has_coupling) {
    require(coupling != 0.0, n.path("coupling") + ": must be nonzero");
    if (nL > 0)
      s.system = s.system.with_bond(nL - 1, nL, coupling);
    if (nR > 0)
      s.system = s.system.with_bond(nL + nD - 1, nL + nD, coupling);
  }
  n.finish();
  return s;
}

BiasProfile parse_bias(Node n) {
  const double V = n.num("V", 0.0);
  BiasProfile b = BiasProfile::symmetric(V);
  b.amplitude_L = n.num("amplitude_L", b.amplitude_L);
  b.amplitude_R = n.num("amplitude_R", b.amplitude_R);
  b.shape = parse_bias_shape(n.str("shape", "step"));
  b.ramp_time = n.num("ramp_time", 1.0);
  require(b.ramp_time > 0.0, n.path("ramp_time") + ": must be positive");
  b.device = parse_device_bias(n.str("device", "linear"));
  n.finish();
  return b;
}

struct FillingSpec {
  Index electrons = -1; // half filling
  FillingOptions opts;
};

FillingSpec parse_filling(Node n) {
  FillingSpec f;
  f.electrons = n.integer("electrons", -1);
  f.opts.fractional = n.boolean("fractional", false);
  f.opts.degeneracy_tol = n.num("degeneracy_tol", 1e-9);
  n.finish();
  return f;
}

Mat initial_state(const TightBindingSystem &sys, const FillingSpec &f) {
  const Index ne = f.electrons >= 0 ? f.electrons : sys.size() / 2;
  require(ne <= sys.size(), "filling.electrons exceeds the number of sites");
  return ground_state_density_matrix(sys, ne, f.opts);
}

kernels::Backend parse_backend(const std::string &s) {
  if (s == "serial")
    return kernels::Backend::serial;
  if (s == "parallel")
    return kernels::Backend::parallel;
  throw ValidationError("unknown backend '" + s + "' (expected serial | parallel)");
}

PropagationOptions parse_propagation(Node n, bool strict) {
  PropagationOptions o;
  o.dt = n.num("dt", 1e-3);
  o.n_steps = n.integer("n_steps", 1000);
  require(o.dt > 0.0, n.path("dt") + ": must be positive");
  require(o.n_steps >= 0, n.path("n_steps") + ": must be non-negative");
  o.integrator = parse_integrator(n.str("integrator", "rk4"));
  o.backend = parse_backend(n.str("backend", "parallel"));
  o.record_replay = n.boolean("record_replay", false);
  o.full_stride = n.integer("full_stride", 0);
  o.diagnostic_stride = n.integer("diagnostic_stride", 100);
  require(o.full_stride >= 0, n.path("full_stride") + ": must be non-negative");
  require(o.diagnostic_stride >= 1, n.path("diagnostic_stride") + ": must be >= 1");
  o.strict = strict;
  n.finish();
  return o;
}

struct ReducedSpec {
  std::string functional = "exact-replay";
  std::string replay_file;
  std::string reference_file;
  std::string initial = "ground-state";
  double gamma = 0.5;
  double mu_L = 0.0, mu_R = 0.0;
  Index eq_refresh = 1;
};

ReducedSpec parse_reduced(Node n, const std::string &base) {
  ReducedSpec r;
  r.functional = n.str("functional", "exact-replay");
  require(r.functional == "exact-replay" || r.functional == "wide-band" ||
              r.functional == "none-isolated",
          n.path("functional") + ": expected exact-replay | wide-band | none-isolated");
  if (r.functional == "exact-replay")
    r.replay_file = existing_file(n, "replay_file", base);
  if (n.has("reference_file"))
    r.reference_file = existing_file(n, "reference_file", base);
  r.initial = n.str("initial", "ground-state");
  require(r.initial == "ground-state" || r.initial == "reference",
          n.path("initial") + ": expected ground-state | reference");
  require(r.initial != "reference" || !r.reference_file.empty(),
          n.path("initial") + ": 'reference' needs reduced.reference_file");
  r.gamma = n.num("gamma", 0.5);
  require(r.gamma >= 0.0, n.path("gamma") + ": must be non-negative");
  r.mu_L = n.num("mu_L", 0.0);
  r.mu_R = n.num("mu_R", 0.0);
  r.eq_refresh = n.integer("eq_refresh", 1);
  require(r.eq_refresh >= 1, n.path("eq_refresh") + ": must be >= 1");
  n.finish();
  return r;
}

struct LandauerSpec {
  double V = 0.1;
  double mu = 0.0;
  bool bias_in_transmission = false;
  Index points = 201;
};

LandauerSpec parse_landauer(Node n) {
  LandauerSpec l;
  l.V = n.num("V", 0.1);
  l.mu = n.num("mu", 0.0);
  l.bias_in_transmission = n.boolean("bias_in_transmission", false);
  l.points = n.integer("points", 201);
  require(l.points >= 2, n.path("points") + ": must be >= 2");
  n.finish();
  return l;
}

struct ContinueSpec {
  std::string samples;
  std::string samples_g;
  std::string reference;
  Box from_box;
  Box to_box;
  std::vector<Index> points;
  ContinuationOptions opts;
  double tol_agree = 1e-9;
  std::vector<RVec> path;
};

ContinueSpec parse_continue(Node n, const std::string &base, bool certify) {
  ContinueSpec c;
  c.samples = existing_file(n, "samples", base);
  if (certify)
    c.samples_g = existing_file(n, "samples_g", base);
  if (n.has("reference"))
    c.reference = existing_file(n, "reference", base);
  try {
    c.from_box = Box::parse(n.str("from_box"));
    c.to_box = Box::parse(n.str("to_box"));
  } catch (const ValidationError &e) {
    throw ValidationError(n.path("from_box/to_box") + ": " + e.what());
  }
  require(c.from_box.dim() == c.to_box.dim(), n.path("to_box") + ": dimension differs from from_box");
  for (double p : n.nums("points", std::vector<double>{})) {
    require(p >= 2 && p == std::floor(p), n.path("points") + ": counts must be integers >= 2");
    c.points.push_back(static_cast<Index>(p));
  }
  require(c.points.empty() || static_cast<int>(c.points.size()) == c.to_box.dim(),
          n.path("points") + ": one count per axis");
  c.opts.max_order = static_cast<int>(n.integer("order", 10));
  require(c.opts.max_order >= 0 && c.opts.max_order <= 16, n.path("order") + ": must be in [0, 16]");
  c.opts.step_fraction = n.num("step_fraction", 0.5);
  require(c.opts.step_fraction > 0.0 && c.opts.step_fraction < 1.0,
          n.path("step_fraction") + ": must lie in (0, 1)");
  c.opts.fit.method = parse_fit_method(n.str("method", "least-squares"));
  c.opts.fit.safety_fraction = n.num("safety_fraction", 0.5);
  c.opts.exclusion_radius = n.num("exclusion_radius", 0.0);
  if (const json *sp = n.raw("singular_points")) {
    require(sp->is_array(), n.path("singular_points") + ": expected an array of points");
    for (const auto &pt : *sp) {
      require(pt.is_array() && static_cast<int>(pt.size()) == c.from_box.dim(),
              n.path("singular_points") + ": each point needs one coordinate per axis");
      RVec x(c.from_box.dim());
      for (int a = 0; a < x.size(); ++a)
        x(a) = pt[static_cast<std::size_t>(a)].get<double>();
      c.opts.singular_points.push_back(x);
    }
  }
  if (const json *p = n.raw("path")) {
    require(p->is_array(), n.path("path") + ": expected an array of points");
    for (const auto &pt : *p) {
      require(pt.is_array() && static_cast<int>(pt.size()) == c.from_box.dim(),
              n.path("path") + ": each point needs one coordinate per axis");
      RVec x(c.from_box.dim());
      for (int a = 0; a < x.size(); ++a)
        x(a) = pt[static_cast<std::size_t>(a)].get<double>();
      c.path.push_back(x);
    }
  }
  c.tol_agree = n.num("tol_agree", 1e-9);
  n.finish();
  return c;
}

struct RgSpec {
  RgProblem problem;
  int levels = 3;
};

RgSpec parse_rg(Node n) {
  RgSpec r;
  RgProblem &p = r.problem;
  const auto grid = n.nums("grid", std::vector<double>{-8.0, 8.0, 1.0 / 64.0});
  require(grid.size() == 3, n.path("grid") + ": expected [xmin, xmax, dx]");
  p.xmin = grid[0];
  p.xmax = grid[1];
  p.dx = grid[2];
  p.dt = n.num("dt", 5e-4);
  require(p.dt > 0.0, n.path("dt") + ": must be positive");
  p.potential = n.str("potential", "harmonic");
  parse_perturbation(n.str("perturbation", "quadratic:0.1"), p);
  p.k = static_cast<int>(n.integer("k", 0));
  require(p.k == 0 || p.k == 1, n.path("k") + ": must be 0 or 1");
  const auto sub = n.nums("subinterval", std::vector<double>{0.5, 1.5});
  require(sub.size() == 2 && sub[0] < sub[1], n.path("subinterval") + ": expected [lo, hi]");
  p.d_lo = sub[0];
  p.d_hi = sub[1];
  const std::string sign = n.str("sign", "physical");
  require(sign == "physical" || sign == "negative", n.path("sign") + ": expected physical | negative");
  p.sign = sign == "physical" ? RgSign::physical : RgSign::negative;
  p.gauge = n.num("gauge", 0.0);
  r.levels = static_cast<int>(n.integer("levels", 3));
  require(r.levels >= 2 && r.levels <= 6, n.path("levels") + ": must be in [2, 6]");
  n.finish();
  Grid1D::make(p.xmin, p.xmax, p.dx);
  return r;
}

struct Blocks {
  std::optional<SystemSpec> system;
  BiasProfile bias;
  FillingSpec filling;
  PropagationOptions prop;
  ReducedSpec reduced;
  LandauerSpec landauer;
  ContinueSpec cont;
  RgSpec rg;
};

Blocks parse_blocks(const json &doc, const std::string &mode, const std::string &base, bool strict) {
  Node top(&doc, "");
  top.str("mode");
  top.str("output_dir", ".");
  top.boolean("strict", false);
  require(top.boolean("deterministic", true), "deterministic: runs are always deterministic");
  top.raw("sweep");

  Blocks b;
  const bool transport = mode == "transport-full" || mode == "transport-reduced";
  if (transport || mode == "landauer")
    b.system = parse_system(top.child("system"), base);
  if (transport) {
    b.bias = parse_bias(top.child("bias"));
    b.filling = parse_filling(top.child("filling"));
    b.prop = parse_propagation(top.child("propagation"), strict);
  }
  if (mode == "transport-reduced")
    b.reduced = parse_reduced(top.child("reduced"), base);
  if (mode == "landauer")
    b.landauer = parse_landauer(top.child("landauer"));
  if (mode == "continue" || mode == "certify")
    b.cont = parse_continue(top.child("continuation"), base, mode == "certify");
  if (mode == "rg-check")
    b.rg = parse_rg(top.child("rg"));
  top.finish();
  return b;
}

void validate_sweep(const json &doc) {
  if (!doc.contains("sweep") || doc["sweep"].is_null())
    return;
  Node s(&doc["sweep"], "sweep");
  const std::string param = s.str("parameter");
  require(!param.empty() && param[0] == '/', "sweep.parameter: expected a JSON pointer such as /bias/V");
  const json *values = s.raw("values");
  require(values && values->is_array() && !values->empty(), "sweep.values: expected a non-empty array");
  s.finish();
  json::json_pointer ptr;
  try {
    ptr = json::json_pointer(param);
  } catch (const std::exception &) {
    throw ValidationError("sweep.parameter: invalid JSON pointer '" + param + "'");
  }
  require(!param.starts_with("/sweep") && !param.starts_with("/mode"),
          "sweep.parameter: cannot sweep the mode or the sweep itself");
}

// ---------------------------------------------------------------------------
// Artifacts

class Artifacts {
public:
  Artifacts(const RunConfig &c, RunSummary &s) : c_(c), s_(s) {
    fs::create_directories(c.output_dir);
  }

  std::string path(const std::string &kind) const {
    return (fs::path(c_.output_dir) / (c_.mode + "-" + c_.hash + "." + kind)).string();
  }

  void text(const std::string &kind, const std::string &content) {
    io::write_text_file(path(kind), content);
    s_.artifacts.push_back(path(kind));
  }

  void meta(const json &extra) {
    json m;
    m["mode"] = c_.mode;
    m["config_hash"] = c_.hash;
    m["version"] = OPENRDM_VERSION;
    m["config"] = c_.raw;
    m["warnings"] = s_.warnings;
    std::vector<std::string> names;
    for (const auto &a : s_.artifacts)
      names.push_back(fs::path(a).filename().string());
    m["artifacts"] = names;
    for (auto it = extra.begin(); it != extra.end(); ++it)
      m[it.key()] = it.value();
    io::write_text_file(path("meta.json"), m.dump(2) + "\n");
    s_.artifacts.push_back(path("meta.json"));
  }

private:
  const RunConfig &c_;
  RunSummary &s_;
};

void row(RunSummary &s, const std::string &k, double v) { s.rows.emplace_back(k, io::fmt(v)); }
void row(RunSummary &s, const std::string &k, const std::string &v) { s.rows.emplace_back(k, v); }

double max_abs_current(const DensityMatrixTrajectory &t, bool left) {
  double m = 0.0;
  for (const auto &r : t.records)
    m = std::max(m, std::abs(left ? r.J_L : r.J_R));
  return m;
}

void trajectory_artifacts(Artifacts &art, const DensityMatrixTrajectory &traj) {
  std::ostringstream a, b, c;
  io::write_trajectory_csv(a, traj);
  art.text("trajectory.csv", a.str());
  io::write_dissipation_csv(b, traj);
  art.text("dissipation.csv", b.str());
  io::write_matrix_series(c, traj.sigma_D);
  art.text("sigma_D.bin", c.str());
}

void run_transport_full(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const TightBindingSystem &sys = b.system->system;
  const Mat sigma0 = initial_state(sys, b.filling);
  const DensityMatrixTrajectory traj = propagate_full(sys, b.bias, sigma0, b.prop);
  s.warnings.insert(s.warnings.end(), traj.warnings.begin(), traj.warnings.end());

  Artifacts art(c, s);
  trajectory_artifacts(art, traj);
  if (traj.replay) {
    std::ostringstream r;
    io::write_replay(r, *traj.replay);
    art.text("replay.bin", r.str());
  }
  const auto &last = traj.records.back();
  row(s, "steps", static_cast<double>(traj.n_steps()));
  row(s, "t_final", last.t);
  row(s, "J_L(final)", last.J_L);
  row(s, "J_R(final)", last.J_R);
  row(s, "max|J_L|", max_abs_current(traj, true));
  row(s, "max|J_R|", max_abs_current(traj, false));
  row(s, "trace drift (rel)", traj.diagnostics.max_trace_drift);
  row(s, "hermiticity drift", traj.diagnostics.max_hermiticity);
  if (traj.diagnostics.initially_idempotent)
    row(s, "idempotency drift", traj.diagnostics.max_idempotency);
  row(s, "t_rec", recurrence_time(sys));
  art.meta({{"system_fingerprint", traj.meta.system_fingerprint},
            {"integrator", traj.meta.integrator}});
}

void run_transport_reduced(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const TightBindingSystem &sys = b.system->system;
  const ReducedSpec &r = b.reduced;
  std::vector<Mat> reference;
  if (!r.reference_file.empty()) {
    std::ifstream in(r.reference_file, std::ios::binary);
    reference = io::read_matrix_series(in);
  }
  const auto nD = sys.partition().n_D;
  Mat sigma0;
  if (r.initial == "reference") {
    require(!reference.empty(), "reduced.reference_file holds no matrices");
    sigma0 = reference.front();
  } else {
    const auto D = sys.partition().range(Region::D);
    sigma0 = initial_state(sys, b.filling).block(D.offset, D.offset, nD, nD);
  }

  DissipationFunctional f = IsolatedFunctional{};
  if (r.functional == "exact-replay") {
    std::ifstream in(r.replay_file, std::ios::binary);
    f = ExactReplayFunctional{std::make_shared<const ReplayTable>(io::read_replay(in))};
  } else if (r.functional == "wide-band") {
    auto wb = WideBandFunctional::adjacent_sites(nD, r.gamma, r.mu_L, r.mu_R);
    wb.eq_refresh = r.eq_refresh;
    f = wb;
  }
  ReducedOptions ro;
  ro.dt = b.prop.dt;
  ro.n_steps = b.prop.n_steps;
  ro.integrator = b.prop.integrator;
  ro.backend = b.prop.backend;
  const DensityMatrixTrajectory traj = propagate_reduced(sigma0, sys, b.bias, f, ro);

  Artifacts art(c, s);
  trajectory_artifacts(art, traj);
  const auto &last = traj.records.back();
  row(s, "functional", functional_name(f));
  row(s, "steps", static_cast<double>(traj.n_steps()));
  row(s, "J_L(final)", last.J_L);
  row(s, "J_R(final)", last.J_R);
  row(s, "max|J_L|", max_abs_current(traj, true));
  row(s, "max|J_R|", max_abs_current(traj, false));
  row(s, "hermiticity drift", traj.diagnostics.max_hermiticity);
  json extra = {{"system_fingerprint", traj.meta.system_fingerprint},
                {"integrator", traj.meta.integrator}};
  if (!reference.empty()) {
    if (reference.size() != traj.sigma_D.size() || reference.front().rows() != nD)
      throw ValidationError("reduced.reference_file: grid mismatch with the reduced run (" +
                            std::to_string(reference.size()) + " vs " +
                            std::to_string(traj.sigma_D.size()) + " matrices)");
    double dev = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k)
      dev = std::max(dev, (reference[k] - traj.sigma_D[k]).norm());
    row(s, "max sigma_D deviation", dev);
    extra["max_sigma_D_deviation"] = dev;
  }
  art.meta(extra);
}

void run_landauer(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const TightBindingSystem &sys = b.system->system;
  const LandauerSpec &l = b.landauer;
  LandauerOptions o;
  o.bias_in_transmission = l.bias_in_transmission;
  const LandauerResult res = landauer_current(sys, l.V, l.mu, o);
  s.warnings.insert(s.warnings.end(), res.warnings.begin(), res.warnings.end());

  Artifacts art(c, s);
  std::ostringstream t;
  t << "E,T\r\n";
  const double lo = res.window_lo, hi = res.window_hi;
  for (Index i = 0; i < l.points; ++i) {
    const double E = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(l.points - 1);
    t << io::fmt(E) << ',' << io::fmt(transmission(sys, E)) << "\r\n";
  }
  art.text("transmission.csv", t.str());
  row(s, "V", l.V);
  row(s, "J_landauer", res.current);
  row(s, "V/2pi", l.V / (2.0 * std::numbers::pi));
  row(s, "window", "[" + io::fmt(res.window_lo) + ", " + io::fmt(res.window_hi) + "]");
  row(s, "clipped", res.clipped ? "yes" : "no");
  art.meta({{"current", res.current}, {"clipped", res.clipped}});
}

std::vector<Index> target_counts(const ContinueSpec &c, const SampledFunction &f) {
  if (!c.points.empty())
    return c.points;
  std::vector<Index> n;
  for (int a = 0; a < c.to_box.dim(); ++a) {
    const double cells = (c.to_box.hi(a) - c.to_box.lo(a)) / f.spacing(a);
    n.push_back(std::max<Index>(2, static_cast<Index>(std::llround(cells)) + 1));
  }
  return n;
}

SampledFunction load_samples(const std::string &file, const Box &box) {
  std::ifstream in(file);
  return io::read_samples_csv(in, box);
}

json steps_json(const ContinuationResult &r) {
  json steps = json::array();
  for (const auto &st : r.steps) {
    std::vector<double> x(st.x0.data(), st.x0.data() + st.x0.size());
    steps.push_back({{"x0", x},
                     {"radius", st.radius},
                     {"radius_infinite", st.radius_infinite},
                     {"order", st.order},
                     {"coeff_decay", st.coeff_decay},
                     {"refit", st.refit}});
  }
  return steps;
}

void run_continue(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const ContinueSpec &cs = b.cont;
  const SampledFunction f = load_samples(cs.samples, cs.from_box);
  const auto counts = target_counts(cs, f);
  const auto path = cs.path.empty() ? default_path(f.box(), cs.to_box) : cs.path;
  const ContinuationResult res = continue_along_path(f, path, cs.to_box, counts, cs.opts);

  Artifacts art(c, s);
  std::ostringstream out;
  io::write_samples_csv(out, res.values);
  art.text("continued.csv", out.str());
  double min_r = std::numeric_limits<double>::infinity();
  for (const auto &st : res.steps)
    min_r = std::min(min_r, st.radius);
  row(s, "steps", static_cast<double>(res.steps.size()));
  row(s, "min radius", min_r);
  row(s, "target nodes", static_cast<double>(res.values.size()));
  json report = {{"steps", steps_json(res)}, {"uncovered_nodes", res.uncovered_nodes}};
  if (!cs.reference.empty()) {
    const SampledFunction ref = load_samples(cs.reference, cs.to_box);
    require(ref.same_grid(res.values, 1e-9),
            "continuation.reference: grid differs from the continuation target grid");
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      err = std::max(err, std::abs(ref.value(i) - res.values.value(i)));
      scale = std::max(scale, std::abs(ref.value(i)));
    }
    row(s, "max abs error", err);
    row(s, "max rel error", scale > 0.0 ? err / scale : err);
    report["max_abs_error"] = err;
  }
  art.text("continuation.json", report.dump(2) + "\n");
  art.meta({});
}

void run_certify(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const ContinueSpec &cs = b.cont;
  const SampledFunction f = load_samples(cs.samples, cs.from_box);
  const SampledFunction g = load_samples(cs.samples_g, cs.from_box);
  const auto counts = target_counts(cs, f);
  const auto path = cs.path.empty() ? default_path(f.box(), cs.to_box) : cs.path;
  CertifyOptions o;
  o.tol_agree = cs.tol_agree;
  o.continuation = cs.opts;
  const UniquenessReport rep = certify_uniqueness(f, g, path, cs.to_box, counts, o);

  Artifacts art(c, s);
  row(s, "agree on D", rep.agree_on_D ? "yes" : "no");
  row(s, "max|f-g| on D", rep.max_diff_D);
  if (rep.continued) {
    row(s, "max|f-g| on U", rep.max_diff_U);
    row(s, "propagated bound", rep.propagated_bound);
  }
  json report = {{"agree_on_D", rep.agree_on_D},   {"max_diff_D", rep.max_diff_D},
                 {"continued", rep.continued},     {"max_diff_U", rep.max_diff_U},
                 {"propagated_bound", rep.propagated_bound}, {"message", rep.message}};
  art.text("certify.json", report.dump(2) + "\n");
  art.meta({});
}

json rg_level_json(const RgReport &r) {
  return {{"dx", r.dx},
          {"dt", r.dt},
          {"k", r.k},
          {"signal", r.signal},
          {"residual", r.residual},
          {"relative_residual", r.relative_residual},
          {"residual_D", r.residual_D},
          {"relative_residual_D", r.relative_residual_D},
          {"max_div_u_D", r.max_div_u_D},
          {"relative_residual_other_sign", r.relative_residual_other_sign},
          {"noise_floor", r.noise_floor},
          {"inconclusive", r.inconclusive},
          {"max_norm_drift", r.max_norm_drift},
          {"warnings", r.warnings}};
}

void run_rg(const RunConfig &c, const Blocks &b, RunSummary &s) {
  const RgLadder ladder = rg_refinement_ladder(b.rg.problem, b.rg.levels);
  Artifacts art(c, s);
  json levels = json::array();
  for (std::size_t l = 0; l < ladder.levels.size(); ++l) {
    const RgReport &r = ladder.levels[l];
    levels.push_back(rg_level_json(r));
    row(s, "level " + std::to_string(l) + " rel residual", r.relative_residual);
    for (const auto &w : r.warnings)
      s.warnings.push_back("level " + std::to_string(l) + ": " + w);
    if (r.max_norm_drift > 1e-10 && c.strict)
      throw InvariantBreach("norm drift " + io::fmt(r.max_norm_drift) + " exceeds 1e-10");
  }
  const RgReport &base = ladder.levels.front();
  row(s, "fitted order", ladder.fitted_order);
  row(s, "max|div u| on D", base.max_div_u_D);
  row(s, "inconclusive", base.inconclusive ? "yes" : "no");

  std::ostringstream csv;
  csv << "x,lhs,rhs\r\n";
  for (Eigen::Index i = 0; i < base.x.size(); ++i)
    csv << io::fmt(base.x(i)) << ',' << io::fmt(base.lhs(i)) << ',' << io::fmt(base.rhs(i))
        << "\r\n";
  art.text("rg.csv", csv.str());
  json report = {{"levels", levels}, {"fitted_order", ladder.fitted_order}};
  art.text("rg.json", report.dump(2) + "\n");
  art.meta({});
}

RunSummary run_single(const RunConfig &c) {
  RunSummary s;
  s.mode = c.mode;
  try {
    const Blocks b = parse_blocks(c.raw, c.mode, c.base_dir, c.strict);
    if (c.mode == "transport-full")
      run_transport_full(c, b, s);
    else if (c.mode == "transport-reduced")
      run_transport_reduced(c, b, s);
    else if (c.mode == "landauer")
      run_landauer(c, b, s);
    else if (c.mode == "continue")
      run_continue(c, b, s);
    else if (c.mode == "certify")
      run_certify(c, b, s);
    else
      run_rg(c, b, s);
    if (c.strict && !s.warnings.empty())
      throw InvariantBreach("strict mode: " + s.warnings.front());
  } catch (const ValidationError &e) {
    s.exit_code = static_cast<int>(ExitCode::validation);
    s.error = e.what();
  } catch (const InvariantBreach &e) {
    s.exit_code = static_cast<int>(ExitCode::invariant_breach);
    s.error = e.what();
  } catch (const NumericalFailure &e) {
    s.exit_code = static_cast<int>(ExitCode::numerical_failure);
    s.error = e.what();
  } catch (const fs::filesystem_error &e) {
    s.exit_code = static_cast<int>(ExitCode::validation);
    s.error = e.what();
  }
  return s;
}

} // namespace

RunConfig parse_config(const json &doc, const std::string &base_dir) {
  require(doc.is_object(), "config: top level must be an object");
  RunConfig c;
  c.raw = doc;
  c.base_dir = base_dir;
  Node top(&doc, "");
  c.mode = top.str("mode");
  const auto &modes = known_modes();
  if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) {
    std::string list;
    for (const auto &m : modes)
      list += (list.empty() ? "" : " | ") + m;
    throw ValidationError("mode: unknown mode '" + c.mode + "' (expected " + list + ")");
  }
  c.output_dir = resolve(base_dir, top.str("output_dir", "."));
  c.strict = top.boolean("strict", false);
  validate_sweep(doc);
  if (doc.contains("sweep") && !doc["sweep"].is_null()) {
    for (const auto &v : doc["sweep"]["values"]) {
      json child = doc;
      child.erase("sweep");
      try {
        child[json::json_pointer(doc["sweep"]["parameter"].get<std::string>())] = v;
      } catch (const json::exception &e) {
        throw ValidationError(std::string("sweep.parameter: ") + e.what());
      }
      parse_blocks(child, c.mode, base_dir, c.strict);
    }
  } else {
    parse_blocks(doc, c.mode, base_dir, c.strict);
  }
  c.hash = sha256_hex(doc.dump(), 12);
  return c;
}

RunConfig load_config(const std::string &path) {
  json doc;
  try {
    doc = json::parse(io::read_text_file(path));
  } catch (const json::parse_error &e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_config(doc, parent.empty() ? "." : parent.string());
}

RunSummary run(const RunConfig &config, int jobs) {
  if (!config.raw.contains("sweep") || config.raw["sweep"].is_null())
    return run_single(config);

  const json &sweep = config.raw["sweep"];
  const auto param = sweep["parameter"].get<std::string>();
  const auto &values = sweep["values"];
  std::vector<RunConfig> children;
  for (const auto &v : values) {
    RunConfig child = config;
    child.raw.erase("sweep");
    child.raw[json::json_pointer(param)] = v;
    child.hash = sha256_hex(child.raw.dump(), 12);
    children.push_back(std::move(child));
  }
  std::vector<RunSummary> results(children.size());
  const long long n = static_cast<long long>(children.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (long long i = 0; i < n; ++i)
    results[static_cast<std::size_t>(i)] = run_single(children[static_cast<std::size_t>(i)]);

  RunSummary s;
  s.mode = config.mode;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RunSummary &r = results[i];
    const std::string tag = "[" + param + "=" + values[i].dump() + "] ";
    s.exit_code = std::max(s.exit_code, r.exit_code);
    for (const auto &[k, v] : r.rows)
      s.rows.emplace_back(tag + k, v);
    if (r.exit_code != 0)
      s.rows.emplace_back(tag + "error", r.error);
    s.artifacts.insert(s.artifacts.end(), r.artifacts.begin(), r.artifacts.end());
    for (const auto &w : r.warnings)
      s.warnings.push_back(tag + w);
    if (s.error.empty() && !r.error.empty())
      s.error = tag + r.error;
  }
  return s;
}

void print_summary(std::ostream &out, const RunSummary &s) {
  std::size_t w = 4;
  for (const auto &r : s.rows)
    w = std::max(w, r.first.size());
  out << "mode: " << s.mode << "\n";
  for (const auto &[k, v] : s.rows)
    out << "  " << std::left << std::setw(static_cast<int>(w)) << k << "  " << v << "\n";
  for (const auto &wmsg : s.warnings)
    out << "warning: " << wmsg << "\n";
  for (const auto &a : s.artifacts)
    out << "wrote " << a << "\n";
  if (!s.error.empty())
    out << "error: " << s.error << "\n";
  out << "exit " << s.exit_code << "\n";
}

CompareReport compare_trajectories(const std::string &file_a, const std::string &file_b,
                                   double tolerance) {
  require(tolerance >= 0.0, "compare: tolerance must be non-negative");
  const io::CsvTable a = io::read_csv_file(file_a);
  const io::CsvTable b = io::read_csv_file(file_b);
  const int ta = a.column("t"), tb = b.column("t");
  require(ta >= 0 && tb >= 0, "compare: both files need a 't' column");

  CompareReport rep;
  rep.tolerance = tolerance;
  std::vector<std::pair<int, int>> cols;
  for (std::size_t i = 0; i < a.header.size(); ++i) {
    const std::string &name = a.header[i];
    if (name == "t" || name == "mode")
      continue;
    const int j = b.column(name);
    if (j < 0)
      throw ValidationError("compare: column '" + name + "' is missing from " + file_b);
    cols.emplace_back(static_cast<int>(i), j);
    rep.columns.push_back(name);
  }
  for (const auto &name : b.header)
    if (name != "t" && name != "mode" && a.column(name) < 0)
      throw ValidationError("compare: column '" + name + "' is missing from " + file_a);
  rep.max_deviation.assign(cols.size(), 0.0);

  auto num = [](const std::string &s) {
    if (s.empty())
      return std::numeric_limits<double>::quiet_NaN();
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size())
        throw ValidationError("compare: not a number '" + s + "'");
      return v;
    } catch (const std::logic_error &) {
      throw ValidationError("compare: not a number '" + s + "'");
    }
  };
  std::vector<std::pair<double, std::size_t>> bt;
  for (std::size_t r = 0; r < b.rows.size(); ++r)
    bt.emplace_back(num(b.rows[r][static_cast<std::size_t>(tb)]), r);
  std::sort(bt.begin(), bt.end());

  for (const auto &ra : a.rows) {
    const double t = num(ra[static_cast<std::size_t>(ta)]);
    const double tol_t = 1e-9 * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(bt.begin(), bt.end(), std::make_pair(t - tol_t, std::size_t{0}));
    if (it == bt.end() || std::abs(it->first - t) > tol_t)
      throw ValidationError("compare: time grid mismatch, t = " + io::fmt(t) + " from " +
                            file_a + " has no match in " + file_b);
    const auto &rb = b.rows[it->second];
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double va = num(ra[static_cast<std::size_t>(cols[c].first)]);
      const double vb = num(rb[static_cast<std::size_t>(cols[c].second)]);
      if (std::isnan(va) && std::isnan(vb))
        continue;
      if (std::isnan(va) != std::isnan(vb))
        throw ValidationError("compare: column '" + rep.columns[c] + "' is empty in only one file");
      rep.max_deviation[c] = std::max(rep.max_deviation[c], std::abs(va - vb));
    }
    ++rep.rows_matched;
  }
  rep.pass = std::all_of(rep.max_deviation.begin(), rep.max_deviation.end(),
                         [&](double d) { return d <= tolerance; });
  return rep;
}

void print_compare(std::ostream &out, const CompareReport &r) {
  std::size_t w = 6;
  for (const auto &c : r.columns)
    w = std::max(w, c.size());
  out << "rows matched: " << r.rows_matched << "\n";
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    out << "  " << std::left << std::setw(static_cast<int>(w)) << r.columns[i] << "  "
        << io::fmt(r.max_deviation[i]) << (r.max_deviation[i] <= r.tolerance ? "" : "  FAIL")
        << "\n";
  out << (r.pass ? "pass" : "fail") << " (tolerance " << io::fmt(r.tolerance) << ")\n";
}

} // namespace openrdm
