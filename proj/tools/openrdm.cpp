#include "openrdm/error.hpp"
#include "openrdm/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

using nlohmann::json;

namespace {

std::vector<double> split_numbers(const std::string &s, const char *what) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size())
        throw std::invalid_argument(tok);
    } catch (const std::logic_error &) {
      throw openrdm::ValidationError(std::string(what) + ": bad number '" + tok + "'");
    }
  }
  return v;
}

int execute(json doc, bool strict, int jobs) {
  if (strict)
    doc["strict"] = true;
  const openrdm::RunConfig cfg = openrdm::parse_config(doc, ".");
  const openrdm::RunSummary s = openrdm::run(cfg, jobs);
  openrdm::print_summary(std::cout, s);
  return s.exit_code;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Open-system density-matrix transport and verification runner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", OPENRDM_VERSION);

  bool strict = false;
  int jobs = 1;
  std::string output_dir = ".";

  auto *run = app.add_subcommand("run", "Run a JSON configuration");
  std::string config_path;
  run->add_option("--config,-c", config_path, "Configuration file")->required();
  run->add_flag("--strict", strict, "Treat invariant warnings as failures");
  run->add_option("--jobs,-j", jobs, "Sweep points evaluated concurrently")->check(CLI::PositiveNumber);

  auto *cont = app.add_subcommand("continue", "Analytically continue sampled data");
  std::string input, from_box, to_box, method = "least-squares", reference, points;
  int order = 10;
  double step_fraction = 0.5;
  cont->add_option("--input", input, "Samples CSV (coordinates then value)")->required();
  cont->add_option("--from-box", from_box, "Sampled box D as lo,hi[,lo,hi...]")->required();
  cont->add_option("--to-box", to_box, "Target box U as lo,hi[,lo,hi...]")->required();
  cont->add_option("--order", order, "Taylor order");
  cont->add_option("--step-fraction", step_fraction, "Step length as a fraction of the radius");
  cont->add_option("--method", method, "least-squares | finite-difference");
  cont->add_option("--points", points, "Target nodes per axis, comma separated");
  cont->add_option("--reference", reference, "Samples of the true function on U");
  cont->add_option("--output-dir,-o", output_dir, "Artifact directory");
  cont->add_flag("--strict", strict, "Treat warnings as failures");

  auto *rg = app.add_subcommand("rg-check", "Finite-difference check of the density response identity");
  std::string grid = "-8,8,0.015625", perturbation = "quadratic:0.1", subinterval = "0.5,1.5";
  std::string potential = "harmonic", sign = "physical";
  double dt = 5e-4;
  int levels = 3, k = 0;
  rg->add_option("--grid", grid, "xmin,xmax,dx");
  rg->add_option("--dt", dt, "Time step");
  rg->add_option("--perturbation", perturbation, "quadratic:<eps> | linear:<eps>");
  rg->add_option("--subinterval", subinterval, "lo,hi");
  rg->add_option("--potential", potential, "harmonic | well");
  rg->add_option("--levels", levels, "Refinement ladder levels");
  rg->add_option("--k", k, "Differentiating order (1 is experimental)");
  rg->add_option("--sign", sign, "physical | negative");
  rg->add_option("--output-dir,-o", output_dir, "Artifact directory");
  rg->add_flag("--strict", strict, "Treat warnings as failures");

  auto *cmp = app.add_subcommand("compare", "Compare two CSV time series");
  std::string file_a, file_b;
  double tolerance = 1e-8;
  cmp->add_option("a", file_a, "First CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("b", file_b, "Second CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--tolerance", tolerance, "Maximum allowed deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(openrdm::ExitCode::validation);
  }

  try {
    if (*run) {
      openrdm::RunConfig cfg = openrdm::load_config(config_path);
      if (strict) {
        cfg.raw["strict"] = true;
        cfg = openrdm::parse_config(cfg.raw, cfg.base_dir);
      }
      const openrdm::RunSummary s = openrdm::run(cfg, jobs);
      openrdm::print_summary(std::cout, s);
      return s.exit_code;
    }
    if (*cont) {
      json c = {{"samples", input},          {"from_box", from_box}, {"to_box", to_box},
                {"order", order},            {"step_fraction", step_fraction},
                {"method", method}};
      if (!points.empty())
        c["points"] = split_numbers(points, "--points");
      if (!reference.empty())
        c["reference"] = reference;
      return execute({{"mode", "continue"}, {"output_dir", output_dir}, {"continuation", c}},
                     strict, 1);
    }
    if (*rg) {
      json r = {{"grid", split_numbers(grid, "--grid")},
                {"dt", dt},
                {"perturbation", perturbation},
                {"subinterval", split_numbers(subinterval, "--subinterval")},
                {"potential", potential},
                {"levels", levels},
                {"k", k},
                {"sign", sign}};
      return execute({{"mode", "rg-check"}, {"output_dir", output_dir}, {"rg", r}}, strict, 1);
    }
    if (*cmp) {
      const auto rep = openrdm::compare_trajectories(file_a, file_b, tolerance);
      openrdm::print_compare(std::cout, rep);
      return rep.pass ? 0 : 1;
    }
  } catch (const openrdm::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(openrdm::ExitCode::validation);
  } catch (const openrdm::InvariantBreach &e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return static_cast<int>(openrdm::ExitCode::invariant_breach);
  } catch (const openrdm::NumericalFailure &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(openrdm::ExitCode::numerical_failure);
  }
  return 0;
}
