#pragma once

#include "openrdm/continuation.hpp"
#include "openrdm/full_propagator.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace openrdm::io {

/// Shortest round-trip decimal form; empty for NaN.
std::string fmt(double v);

/// RFC 4180 field quoting.
std::string csv_field(const std::string &s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string &name) const; // -1 if absent
};

CsvTable read_csv(std::istream &in, bool has_header = true);
CsvTable read_csv_file(const std::string &path, bool has_header = true);

/// t, tr_sigma_L, tr_sigma_D, tr_sigma_R (and mode for reduced runs).
void write_trajectory_csv(std::ostream &out, const DensityMatrixTrajectory &traj);
/// t, J_L, J_R, tr_sigma_D, normF_Q_L, normF_Q_R.
void write_dissipation_csv(std::ostream &out, const DensityMatrixTrajectory &traj);

/// int64 n, int64 count, then count row-major n x n complex matrices
/// (little-endian doubles, real then imaginary).
void write_matrix_series(std::ostream &out, const std::vector<Mat> &ms);
std::vector<Mat> read_matrix_series(std::istream &in);

/// "ORDMRPL1", int64 n_D, int64 n_steps, double dt, int64 stages, then the
/// Q_L series and the Q_R series in matrix-series layout.
void write_replay(std::ostream &out, const ReplayTable &t);
ReplayTable read_replay(std::istream &in);

/// One row per node: d coordinates then the value. The grid is recovered
/// from the coordinates. With `within`, only nodes inside that box are kept.
SampledFunction read_samples_csv(std::istream &in, const std::optional<Box> &within = {});
void write_samples_csv(std::ostream &out, const SampledFunction &f, bool header = true);

std::string read_text_file(const std::string &path);
/// Writes atomically enough for our purposes: truncate, write, check.
void write_text_file(const std::string &path, const std::string &content);
void write_binary_file(const std::string &path, const std::string &content);

} // namespace openrdm::io
