#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "openrdm/error.hpp"
#include "openrdm/io.hpp"
#include "openrdm/runner.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace openrdm;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("openrdm-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string value_of(const RunSummary &s, const std::string &key) {
  for (const auto &[k, v] : s.rows)
    if (k == key)
      return v;
  FAIL("summary has no row " << key);
  return {};
}

std::string artifact(const RunSummary &s, const std::string &suffix) {
  for (const auto &a : s.artifacts)
    if (a.ends_with(suffix))
      return a;
  FAIL("no artifact ending in " << suffix);
  return {};
}

json transport(const fs::path &out, double V, double dt, long long steps) {
  return {{"mode", "transport-full"},
          {"output_dir", out.string()},
          {"system", {{"n_L", 20}, {"n_D", 4}, {"n_R", 20}}},
          {"bias", {{"V", V}}},
          {"propagation", {{"dt", dt}, {"n_steps", steps}}}};
}

RunSummary run_json(const json &j, const std::string &base = ".") {
  return run(parse_config(j, base));
}

} // namespace

TEST_CASE("number formatting and csv quoting") {
  CHECK(io::fmt(0.1) == "0.1");
  CHECK(io::fmt(std::nan("")) == "");
  CHECK(std::stod(io::fmt(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(io::csv_field("plain") == "plain");
  CHECK(io::csv_field("a,b") == "\"a,b\"");
  CHECK(io::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::istringstream in("a,b\r\n\"x,1\",\"multi\nline\"\r\n3,\r\n");
  const auto t = io::read_csv(in);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "x,1");
  CHECK(t.rows[0][1] == "multi\nline");
  CHECK(t.rows[1][1] == "");
  CHECK(t.column("b") == 1);
  CHECK(t.column("c") == -1);
}

TEST_CASE("binary matrix series and replay tables round-trip exactly") {
  std::mt19937_64 rng(1);
  std::vector<Mat> ms{oracle::random_hermitian(3, rng), oracle::random_hermitian(3, rng)};
  std::stringstream ss;
  io::write_matrix_series(ss, ms);
  const auto back = io::read_matrix_series(ss);
  REQUIRE(back.size() == 2);
  CHECK((back[1] - ms[1]).norm() == 0.0);

  ReplayTable t;
  t.dt = 0.01;
  t.n_steps = 1;
  t.n_D = 3;
  for (int i = 0; i < 5; ++i) {
    t.Q_L.push_back(oracle::random_hermitian(3, rng));
    t.Q_R.push_back(oracle::random_hermitian(3, rng));
  }
  std::stringstream rs;
  io::write_replay(rs, t);
  const auto r = io::read_replay(rs);
  CHECK(r.dt == t.dt);
  CHECK((r.final_R() - t.final_R()).norm() == 0.0);
  std::stringstream junk("not a replay file");
  CHECK_THROWS_AS(io::read_replay(junk), ValidationError);
  std::stringstream truncated(rs.str().substr(0, 40));
  CHECK_THROWS_AS(io::read_replay(truncated), ValidationError);
}

TEST_CASE("samples csv round-trips and recovers the grid") {
  const auto f = SampledFunction::from_function(Box::make({0, 1, -1, 1}), {5, 3},
                                                [](const RVec &x) { return x(0) - x(1); });
  std::stringstream ss;
  io::write_samples_csv(ss, f);
  const auto g = io::read_samples_csv(ss);
  CHECK(g.same_grid(f));
  CHECK(g.values() == f.values());
  std::stringstream ss2;
  io::write_samples_csv(ss2, f);
  const auto sub = io::read_samples_csv(ss2, Box::make({0.5, 1, -1, 1}));
  CHECK(sub.count(0) == 3);
  std::stringstream bad("x,value\n0,1\n0.1,2\n0.5,3\n");
  CHECK_THROWS_AS(io::read_samples_csv(bad), ValidationError);
}

TEST_CASE("config errors carry field paths") {
  auto msg = [](const json &j) {
    try {
      parse_config(j);
    } catch (const ValidationError &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(msg({{"mode", "warp"}}).find("mode: unknown mode") != std::string::npos);
  CHECK(msg({{"mode", "transport-full"}, {"propagation", {{"dt", "big"}}}}) ==
        "propagation.dt: expected a number");
  CHECK(msg({{"mode", "transport-full"}, {"system", {{"n_X", 3}}}}) == "system.n_X: unknown field");
  CHECK(msg({{"mode", "transport-reduced"}, {"reduced", {{"functional", "exact-replay"}}}}) ==
        "reduced.replay_file: required field is missing");
  CHECK(msg({{"mode", "transport-reduced"},
             {"reduced", {{"replay_file", "/nonexistent/replay.bin"}}}})
            .find("reduced.replay_file: file") != std::string::npos);
  CHECK(msg({{"mode", "rg-check"}, {"rg", {{"grid", {0, 1}}}}}) ==
        "rg.grid: expected [xmin, xmax, dx]");
  CHECK(msg({{"mode", "rg-check"}, {"deterministic", false}}).find("deterministic") !=
        std::string::npos);
  CHECK(msg({{"mode", "landauer"}, {"sweep", {{"parameter", "/landauer/V"}, {"values", {0.1, "x"}}}}})
            .find("landauer.V: expected a number") != std::string::npos);
  CHECK(msg({{"mode", "landauer"}, {"extra", 1}}) == "extra: unknown field");
}

TEST_CASE("zero-bias transport run keeps currents at zero") {
  const auto dir = scratch("eq");
  const auto s = run_json(transport(dir, 0.0, 0.01, 2000));
  CHECK(s.exit_code == 0);
  CHECK(std::stod(value_of(s, "max|J_L|")) < 1e-10);
  CHECK(std::stod(value_of(s, "max|J_R|")) < 1e-10);
  const auto meta = json::parse(io::read_text_file(artifact(s, "meta.json")));
  CHECK(meta["config_hash"].get<std::string>().size() == 12);
  CHECK(meta.contains("version"));
  CHECK(meta["mode"] == "transport-full");
}

TEST_CASE("reduced exact-replay run reproduces a prior full run") {
  const auto dir = scratch("replay");
  json full = transport(dir, 0.5, 0.01, 500);
  full["propagation"]["record_replay"] = true;
  const auto a = run_json(full);
  REQUIRE(a.exit_code == 0);
  json red = full;
  red["mode"] = "transport-reduced";
  red["propagation"].erase("record_replay");
  red["reduced"] = {{"functional", "exact-replay"},
                    {"replay_file", fs::path(artifact(a, "replay.bin")).filename().string()},
                    {"reference_file", fs::path(artifact(a, "sigma_D.bin")).filename().string()}};
  const auto b = run_json(red, dir.string());
  REQUIRE(b.exit_code == 0);
  CHECK(std::stod(value_of(b, "max sigma_D deviation")) < 1e-8);
  CHECK(value_of(b, "functional") == "exact-replay");

  red["propagation"]["dt"] = 0.02;
  const auto c = run_json(red, dir.string());
  CHECK(c.exit_code == 2);
}

TEST_CASE("exit codes for strict warnings and numerical failure") {
  const auto dir = scratch("codes");
  json j = transport(dir, 0.0, 0.2, 10);
  CHECK(run_json(j).exit_code == 0);
  j["strict"] = true;
  const auto s = run_json(j);
  CHECK(s.exit_code == 3);
  CHECK(s.error.find("too coarse") != std::string::npos);

  // A path that stops short leaves target nodes outside every trust region.
  const auto f = SampledFunction::from_function(
      Box::make({0, 1}), {41}, [](const RVec &x) { return 1.0 / (1.0 + x(0) * x(0)); });
  {
    std::ofstream o(dir / "runge.csv");
    io::write_samples_csv(o, f);
  }
  json c = {{"mode", "continue"},
            {"output_dir", dir.string()},
            {"continuation",
             {{"samples", "runge.csv"},
              {"from_box", "0,1"},
              {"to_box", "1,3"},
              {"path", {{0.5}, {1.2}}}}}};
  CHECK(run_json(c, dir.string()).exit_code == 4);
}

TEST_CASE("continue and certify modes") {
  const auto dir = scratch("cont");
  const Box D = Box::make({0, 1}), U = Box::make({1, 2});
  auto write = [&](const std::string &name, const SampledFunction &f) {
    std::ofstream o(dir / name);
    io::write_samples_csv(o, f);
  };
  const auto sinf = [](const RVec &x) { return std::sin(x(0)); };
  write("f.csv", SampledFunction::from_function(D, {101}, sinf));
  write("ref.csv", SampledFunction::from_function(U, {101}, sinf));
  json c = {{"mode", "continue"},
            {"output_dir", dir.string()},
            {"continuation",
             {{"samples", "f.csv"}, {"reference", "ref.csv"}, {"from_box", "0,1"}, {"to_box", "1,2"}}}};
  const auto s = run_json(c, dir.string());
  REQUIRE(s.exit_code == 0);
  CHECK(std::stod(value_of(s, "max abs error")) < 1e-6);
  const auto rep = json::parse(io::read_text_file(artifact(s, "continuation.json")));
  CHECK(rep["steps"].size() >= 1);
  CHECK(rep["steps"][0].contains("radius"));

  c["mode"] = "certify";
  c["continuation"].erase("reference");
  c["continuation"]["samples_g"] = "f.csv";
  const auto cs = run_json(c, dir.string());
  REQUIRE(cs.exit_code == 0);
  CHECK(value_of(cs, "agree on D") == "yes");
  CHECK(std::stod(value_of(cs, "max|f-g| on U")) == 0.0);
}

TEST_CASE("rg-check emits a ladder with a fitted order") {
  const auto dir = scratch("rg");
  json j = {{"mode", "rg-check"},
            {"output_dir", dir.string()},
            {"rg", {{"grid", {-8, 8, 1.0 / 32}}, {"dt", 1e-3}}}};
  const auto s = run_json(j);
  REQUIRE(s.exit_code == 0);
  const auto rep = json::parse(io::read_text_file(artifact(s, "rg.json")));
  CHECK(rep["levels"].size() == 3);
  CHECK(rep["fitted_order"].get<double>() >= 1.7);
  CHECK(std::stod(value_of(s, "max|div u| on D")) > 0.0);
}

TEST_CASE("landauer mode") {
  const auto dir = scratch("landauer");
  json j = {{"mode", "landauer"},
            {"output_dir", dir.string()},
            {"system", {{"n_L", 10}, {"n_D", 4}, {"n_R", 10}}},
            {"landauer", {{"V", 0.2}, {"points", 11}}}};
  const auto s = run_json(j);
  REQUIRE(s.exit_code == 0);
  CHECK(std::stod(value_of(s, "J_landauer")) ==
        doctest::Approx(std::stod(value_of(s, "V/2pi"))).epsilon(1e-8));
  CHECK(io::read_csv_file(artifact(s, "transmission.csv")).rows.size() == 11);
}

TEST_CASE("trajectory comparison") {
  const auto dir = scratch("compare");
  auto traj = [&](double dt, long long steps, const std::string &integ) {
    json j = transport(dir, 0.5, dt, steps);
    j["propagation"]["integrator"] = integ;
    const auto s = run_json(j);
    REQUIRE(s.exit_code == 0);
    return artifact(s, "trajectory.csv");
  };
  const auto a = traj(1e-3, 2000, "rk4");
  const auto self = compare_trajectories(a, a, 0.0);
  CHECK(self.pass);
  CHECK(self.rows_matched == 2001);

  const auto cn = traj(1e-3, 2000, "crank-nicolson");
  const auto rc = compare_trajectories(a, cn, 1e-5);
  const int col = static_cast<int>(
      std::find(rc.columns.begin(), rc.columns.end(), "tr_sigma_D") - rc.columns.begin());
  REQUIRE(col < static_cast<int>(rc.columns.size()));
  CHECK(rc.max_deviation[static_cast<std::size_t>(col)] < 1e-5);

  const auto c1 = traj(0.05, 40, "crank-nicolson");
  const auto c2 = traj(0.025, 80, "crank-nicolson");
  const auto c4 = traj(0.0125, 160, "crank-nicolson");
  const auto d12 = compare_trajectories(c1, c2, 1.0);
  const auto d24 = compare_trajectories(c2, c4, 1.0);
  // tr sigma_D is pinned by particle-hole symmetry here; the lead trace moves.
  const auto k = static_cast<std::size_t>(
      std::find(d12.columns.begin(), d12.columns.end(), "tr_sigma_L") - d12.columns.begin());
  REQUIRE(k < d12.columns.size());
  CHECK(d12.max_deviation[k] > 1e-8);
  CHECK(d12.max_deviation[k] / d24.max_deviation[k] >= 3.5);

  // Different time grids that do not nest.
  const auto odd = traj(0.03, 10, "rk4");
  CHECK_THROWS_AS(compare_trajectories(c1, odd, 1.0), ValidationError);
}

TEST_CASE("identical configs produce byte-identical artifacts") {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  const auto s1 = run_json(transport(d1, 0.5, 0.01, 300));
  const auto s2 = run_json(transport(d2, 0.5, 0.01, 300));
  for (const std::string kind : {"trajectory.csv", "dissipation.csv", "sigma_D.bin"})
    CHECK(io::read_text_file(artifact(s1, kind)) == io::read_text_file(artifact(s2, kind)));
}

TEST_CASE("sweeps fan out and tag each point") {
  const auto dir = scratch("sweep");
  json j = {{"mode", "landauer"},
            {"output_dir", dir.string()},
            {"system", {{"n_L", 10}, {"n_D", 4}, {"n_R", 10}}},
            {"sweep", {{"parameter", "/landauer/V"}, {"values", {0.1, 0.2, 0.3}}}}};
  const auto s = run(parse_config(j), 3);
  CHECK(s.exit_code == 0);
  CHECK(s.artifacts.size() == 6);
  CHECK(value_of(s, "[/landauer/V=0.2] V") == "0.2");
}
