#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opdyn/exact_sim.hpp"
#include "opdyn/neural_ode.hpp"
#include "opdyn/noise.hpp"
#include "opdyn/pauli.hpp"
#include "opdyn/spectroscopy.hpp"

namespace opdyn::cli {

// Flat `section.key = value` configuration. Every key has a default; keys not
// in the table are rejected.
class RunConfig {
 public:
  RunConfig();

  static RunConfig load(const std::filesystem::path& path);
  // Lines of `key = value`; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& origin);
  // A single "key=value" override.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  std::string str(const std::string& key) const { return raw(key); }
  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::optional<std::string> optional(const std::string& key) const;

  // Every key with its resolved value, sorted, as config text.
  std::string resolved() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  TfimSpec system() const;
  Observable observable() const;
  TruncationPolicy truncation() const;
  std::vector<double> data_grid() const;
  NoiseModel noise() const;
  NetworkSpec network(int state_dim) const;
  TrainConfig training() const;
  SolverConfig solver() const;
  std::vector<double> prediction_grid() const;
  Window window() const;

 private:
  std::map<std::string, std::string> values_;
};

// Uniform grid start, start + step, ... up to `end` inclusive (within 1e-9 steps).
std::vector<double> uniform_grid(double start, double end, double step);

}  // namespace opdyn::cli
