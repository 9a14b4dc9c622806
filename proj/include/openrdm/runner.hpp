#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace openrdm {

/// Validated run configuration. `raw` is the normalized JSON document; the
/// typed blocks are re-read from it by each mode.
struct RunConfig {
  nlohmann::json raw;
  std::string mode;
  std::string output_dir = ".";
  bool strict = false;
  /// Directory that relative file references are resolved against.
  std::string base_dir = ".";
  /// First 12 hex digits of SHA-256 over the normalized JSON.
  std::string hash;
};

const std::vector<std::string> &known_modes();

/// Checks the mode, every field path and that referenced files exist.
RunConfig parse_config(const nlohmann::json &doc, const std::string &base_dir = ".");
RunConfig load_config(const std::string &path);

struct RunSummary {
  std::string mode;
  int exit_code = 0;
  std::vector<std::pair<std::string, std::string>> rows;
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
  std::string error;
};

/// Execute the configured mode (or its sweep, `jobs` points at a time), write
/// artifacts and return the summary. Errors are mapped to exit codes rather
/// than thrown.
RunSummary run(const RunConfig &config, int jobs = 1);

void print_summary(std::ostream &out, const RunSummary &s);

struct CompareReport {
  std::vector<std::string> columns;
  std::vector<double> max_deviation;
  std::size_t rows_matched = 0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Column-wise max deviation between two CSV time series. Rows are matched
/// by t; b may be sampled more finely than a.
CompareReport compare_trajectories(const std::string &file_a, const std::string &file_b,
                                   double tolerance);

void print_compare(std::ostream &out, const CompareReport &r);

} // namespace openrdm
