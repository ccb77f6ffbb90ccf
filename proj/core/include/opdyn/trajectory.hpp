#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opdyn/pauli.hpp"

namespace opdyn {

// Ordered key=value record carried through every file the pipeline writes.
class Metadata {
 public:
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Real Pauli coefficients c_i(t_j): row j is the state vector h(t_j), column
// order follows basis.labels().
struct Trajectory {
  std::vector<double> times;
  PauliBasis basis;
  Eigen::MatrixXd coeffs;
  Metadata meta;

  std::size_t num_times() const { return times.size(); }
  std::size_t dim() const { return basis.size(); }
  Eigen::VectorXd state(std::size_t j) const { return coeffs.row(static_cast<Eigen::Index>(j)).transpose(); }
  // Index of the grid point equal to t within tol.
  std::optional<std::size_t> time_index(double t, double tol = 1e-9) const;

  // Throws FormatError unless times are strictly increasing, shapes agree and
  // every entry is finite.
  void validate() const;
};

inline constexpr const char* kTrajectoryHeader = "opdyn-traj v1";

// Text format: header line, key=value metadata lines, a column line
// "t <label> <label> ...", then one row per time with 17 significant digits.
void write_trajectory(std::ostream& out, const Trajectory& traj);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(std::istream& in);
Trajectory read_trajectory(const std::filesystem::path& path);

// Rows of `traj` restricted to the columns of `basis`; missing columns are an
// error.
Trajectory select_columns(const Trajectory& traj, const PauliBasis& basis);

// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace opdyn
