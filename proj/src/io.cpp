#include "openrdm/io.hpp"

#include "openrdm/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace openrdm::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string fmt(double v) {
  if (std::isnan(v))
    return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos)
    return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"')
      q += '"';
    q += c;
  }
  q += '"';
  return q;
}

int CsvTable::column(const std::string &name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

namespace {

// One record, honouring quotes that may span lines.
bool read_record(std::istream &in, std::vector<std::string> &fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any)
    return false;
  if (quoted)
    throw ValidationError("CSV: unterminated quoted field");
  fields.push_back(std::move(field));
  return true;
}

double parse_double(const std::string &s, const std::string &where) {
  double v = 0.0;
  const char *b = s.data();
  const char *e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t'))
    ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t'))
    --e;
  if (b < e && *b == '+')
    ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e)
    throw ValidationError("not a number: '" + s + "' (" + where + ")");
  return v;
}

template <class T> void put(std::ostream &out, T v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <class T> T get(std::istream &in, const char *what) {
  T v;
  in.read(reinterpret_cast<char *>(&v), sizeof v);
  if (!in)
    throw ValidationError(std::string("binary file truncated while reading ") + what);
  return v;
}

void put_matrices(std::ostream &out, const std::vector<Mat> &ms) {
  for (const Mat &m : ms)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        put(out, m(i, j).real());
        put(out, m(i, j).imag());
      }
}

std::vector<Mat> get_matrices(std::istream &in, std::int64_t n, std::int64_t count) {
  std::vector<Mat> ms;
  ms.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    Mat m(n, n);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        const double re = get<double>(in, "matrix entry");
        const double im = get<double>(in, "matrix entry");
        m(i, j) = cplx(re, im);
      }
    ms.push_back(std::move(m));
  }
  return ms;
}

} // namespace

CsvTable read_csv(std::istream &in, bool has_header) {
  CsvTable t;
  std::vector<std::string> rec;
  bool first = true;
  while (read_record(in, rec)) {
    if (rec.size() == 1 && rec[0].empty())
      continue;
    if (first && has_header) {
      t.header = rec;
    } else {
      if (!t.header.empty() && rec.size() != t.header.size())
        throw ValidationError("CSV: row " + std::to_string(t.rows.size() + 1) + " has " +
                              std::to_string(rec.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
      t.rows.push_back(rec);
    }
    first = false;
  }
  return t;
}

CsvTable read_csv_file(const std::string &path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, has_header);
}

void write_trajectory_csv(std::ostream &out, const DensityMatrixTrajectory &traj) {
  const bool reduced = traj.meta.mode != "full";
  out << "t,tr_sigma_L,tr_sigma_D,tr_sigma_R" << (reduced ? ",mode" : "") << "\r\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const auto &b = traj.block_traces[k];
    out << fmt(traj.times[k]) << ',' << fmt(b[0]) << ',' << fmt(b[1]) << ',' << fmt(b[2]);
    if (reduced)
      out << ',' << csv_field(traj.meta.mode);
    out << "\r\n";
  }
}

void write_dissipation_csv(std::ostream &out, const DensityMatrixTrajectory &traj) {
  out << "t,J_L,J_R,tr_sigma_D,normF_Q_L,normF_Q_R\r\n";
  for (const DissipationRecord &r : traj.records)
    out << fmt(r.t) << ',' << fmt(r.J_L) << ',' << fmt(r.J_R) << ',' << fmt(r.tr_sigma_D) << ','
        << fmt(r.Q_L.norm()) << ',' << fmt(r.Q_R.norm()) << "\r\n";
}

void write_matrix_series(std::ostream &out, const std::vector<Mat> &ms) {
  const std::int64_t n = ms.empty() ? 0 : ms.front().rows();
  for (const Mat &m : ms)
    require(m.rows() == n && m.cols() == n, "matrix series must hold equal square matrices");
  put<std::int64_t>(out, n);
  put<std::int64_t>(out, static_cast<std::int64_t>(ms.size()));
  put_matrices(out, ms);
}

std::vector<Mat> read_matrix_series(std::istream &in) {
  const auto n = get<std::int64_t>(in, "dimension");
  const auto count = get<std::int64_t>(in, "count");
  require(n >= 0 && n < (1 << 16) && count >= 0, "matrix series header is corrupt");
  return get_matrices(in, n, count);
}

void write_replay(std::ostream &out, const ReplayTable &t) {
  out.write("ORDMRPL1", 8);
  put<std::int64_t>(out, t.n_D);
  put<std::int64_t>(out, t.n_steps);
  put<double>(out, t.dt);
  put<std::int64_t>(out, t.stages);
  put_matrices(out, t.Q_L);
  put_matrices(out, t.Q_R);
}

ReplayTable read_replay(std::istream &in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "ORDMRPL1", 8) != 0)
    throw ValidationError("not a replay file (bad magic)");
  ReplayTable t;
  t.n_D = get<std::int64_t>(in, "n_D");
  t.n_steps = get<std::int64_t>(in, "n_steps");
  t.dt = get<double>(in, "dt");
  t.stages = get<std::int64_t>(in, "stages");
  require(t.n_D > 0 && t.n_steps >= 0 && t.stages == 4 && t.dt > 0.0,
          "replay header is corrupt");
  const std::int64_t count = t.n_steps * t.stages + 1;
  t.Q_L = get_matrices(in, t.n_D, count);
  t.Q_R = get_matrices(in, t.n_D, count);
  return t;
}

SampledFunction read_samples_csv(std::istream &in, const std::optional<Box> &within) {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> rec;
  std::size_t line = 0;
  std::size_t width = 0;
  while (read_record(in, rec)) {
    ++line;
    if (rec.size() == 1 && rec[0].empty())
      continue;
    std::vector<double> r;
    try {
      for (const auto &f : rec)
        r.push_back(parse_double(f, "samples line " + std::to_string(line)));
    } catch (const ValidationError &) {
      if (rows.empty() && line == 1)
        continue; // header
      throw;
    }
    if (width == 0)
      width = r.size();
    require(r.size() == width, "samples line " + std::to_string(line) + " has the wrong width");
    rows.push_back(std::move(r));
  }
  require(width >= 2 && width <= kMaxDim + 1,
          "samples need 1 to 3 coordinates followed by a value");
  const int d = static_cast<int>(width) - 1;
  if (within) {
    require(within->dim() == d, "box dimension differs from the samples");
    std::vector<std::vector<double>> kept;
    for (auto &r : rows) {
      RVec x(d);
      for (int a = 0; a < d; ++a)
        x(a) = r[static_cast<std::size_t>(a)];
      if (within->contains(x, 1e-9))
        kept.push_back(std::move(r));
    }
    rows = std::move(kept);
  }
  require(!rows.empty(), "no samples in the requested box");

  // Recover the per-axis grid.
  Box box{RVec(d), RVec(d)};
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(d));
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    auto &ax = axes[static_cast<std::size_t>(a)];
    for (const auto &r : rows)
      ax.push_back(r[static_cast<std::size_t>(a)]);
    std::sort(ax.begin(), ax.end());
    const double span = ax.back() - ax.front();
    ax.erase(std::unique(ax.begin(), ax.end(),
                         [&](double p, double q) { return std::abs(p - q) <= 1e-9 * std::max(span, 1.0); }),
             ax.end());
    require(ax.size() >= 2, "samples need at least two distinct nodes on every axis");
    const double h = span / static_cast<double>(ax.size() - 1);
    for (std::size_t i = 0; i < ax.size(); ++i)
      require(std::abs(ax[i] - (ax.front() + static_cast<double>(i) * h)) <= 1e-6 * h,
              "samples are not on a uniform grid along axis " + std::to_string(a));
    box.lo(a) = ax.front();
    box.hi(a) = ax.back();
    counts[static_cast<std::size_t>(a)] = static_cast<Eigen::Index>(ax.size());
  }
  std::size_t total = 1;
  for (auto c : counts)
    total *= static_cast<std::size_t>(c);
  require(rows.size() == total, "samples do not fill the tensor grid (" +
                                    std::to_string(rows.size()) + " of " + std::to_string(total) +
                                    " nodes)");
  SampledFunction proto(box, counts, std::vector<double>(total, 0.0));
  std::vector<double> values(total, 0.0);
  std::vector<char> seen(total, 0);
  for (const auto &r : rows) {
    std::array<Eigen::Index, kMaxDim> idx{};
    for (int a = 0; a < d; ++a) {
      const double h = proto.spacing(a);
      idx[static_cast<std::size_t>(a)] =
          static_cast<Eigen::Index>(std::llround((r[static_cast<std::size_t>(a)] - box.lo(a)) / h));
    }
    const std::size_t f = proto.flat_index(idx);
    require(!seen[f], "duplicate sample node");
    seen[f] = 1;
    values[f] = r.back();
  }
  return proto.with_values(std::move(values));
}

void write_samples_csv(std::ostream &out, const SampledFunction &f, bool header) {
  static const char *names[] = {"x", "y", "z"};
  if (header) {
    for (int a = 0; a < f.dim(); ++a)
      out << names[a] << ',';
    out << "value\r\n";
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    const RVec x = f.node(i);
    for (int a = 0; a < f.dim(); ++a)
      out << fmt(x(a)) << ',';
    out << fmt(f.value(i)) << "\r\n";
  }
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ValidationError("cannot write '" + path + "'");
  out << content;
  if (!out)
    throw ValidationError("write failed for '" + path + "'");
}

void write_binary_file(const std::string &path, const std::string &content) {
  write_text_file(path, content);
}

} // namespace openrdm::io
