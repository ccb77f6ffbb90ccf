#include "opdyn/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "opdyn/error.hpp"

namespace opdyn {

void Metadata::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

std::optional<std::string> Metadata::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::optional<std::size_t> Trajectory::time_index(double t, double tol) const {
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (std::abs(times[j] - t) <= tol * std::max(1.0, std::abs(t))) return j;
  }
  return std::nullopt;
}

void Trajectory::validate() const {
  if (coeffs.rows() != static_cast<Eigen::Index>(times.size()) ||
      coeffs.cols() != static_cast<Eigen::Index>(basis.size())) {
    throw FormatError("trajectory shape does not match times/basis");
  }
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) {
      throw FormatError("trajectory times are not strictly increasing");
    }
  }
  for (double t : times) {
    if (!std::isfinite(t)) throw FormatError("non-finite trajectory time");
  }
  if (!coeffs.allFinite()) {
    throw FormatError("trajectory contains non-finite coefficients");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  traj.validate();
  out << kTrajectoryHeader << '\n';
  for (const auto& [k, v] : traj.meta.entries()) out << k << '=' << v << '\n';
  out << 't';
  for (const auto& label : traj.basis.labels()) out << ' ' << label;
  out << '\n';
  for (std::size_t j = 0; j < traj.times.size(); ++j) {
    out << format_double(traj.times[j]);
    for (Eigen::Index i = 0; i < traj.coeffs.cols(); ++i) {
      out << ' ' << format_double(traj.coeffs(static_cast<Eigen::Index>(j), i));
    }
    out << '\n';
  }
}

void write_trajectory(const std::filesystem::path& path,
                      const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  write_trajectory(out, traj);
  if (!out) throw FormatError("write failed for " + path.string());
}

namespace {

double parse_double(std::string_view tok, std::size_t line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": bad number '" +
                      std::string(tok) + "'");
  }
  return v;
}

}  // namespace

Trajectory read_trajectory(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw FormatError("missing '" + std::string(kTrajectoryHeader) +
                      "' header");
  }
  Trajectory traj;
  std::vector<PauliString> columns;
  bool have_columns = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!have_columns) {
      auto eq = line.find('=');
      if (eq != std::string::npos) {
        traj.meta.set(line.substr(0, eq), line.substr(eq + 1));
        continue;
      }
      std::istringstream ss(line);
      std::string tok;
      ss >> tok;
      if (tok != "t") {
        throw FormatError("line " + std::to_string(line_no) +
                          ": expected column line starting with 't'");
      }
      while (ss >> tok) {
        try {
          columns.push_back(PauliString::from_label(tok));
        } catch (const ConfigError&) {
          throw FormatError("bad column label '" + tok + "'");
        }
      }
      have_columns = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(columns.size() + 1);
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      std::size_t end = line.find(' ', pos);
      if (end == std::string::npos) end = line.size();
      row.push_back(parse_double(std::string_view(line).substr(pos, end - pos),
                                 line_no));
      pos = end;
    }
    if (row.size() != columns.size() + 1) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns.size() + 1) + " fields, got " +
                        std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (!have_columns) throw FormatError("missing column line");

  traj.basis = PauliBasis(columns);
  if (traj.basis.size() != columns.size()) {
    throw FormatError("duplicate column labels");
  }
  traj.times.resize(rows.size());
  traj.coeffs.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    traj.times[j] = rows[j][0];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      // Columns may be listed in any order; store them in basis order.
      const auto idx = *traj.basis.index_of(columns[c]);
      traj.coeffs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(idx)) =
          rows[j][c + 1];
    }
  }
  traj.validate();
  return traj;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return read_trajectory(in);
}

Trajectory select_columns(const Trajectory& traj, const PauliBasis& basis) {
  Trajectory out;
  out.times = traj.times;
  out.basis = basis;
  out.meta = traj.meta;
  out.coeffs.resize(traj.coeffs.rows(), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    auto src = traj.basis.index_of(basis[i]);
    if (!src) {
      throw ConfigError("column " + basis.labels()[i] + " not in trajectory");
    }
    out.coeffs.col(static_cast<Eigen::Index>(i)) =
        traj.coeffs.col(static_cast<Eigen::Index>(*src));
  }
  return out;
}

}  // namespace opdyn
