#pragma once

#include <cstdint>
#include <string>

#include "opdyn/trajectory.hpp"

namespace opdyn {

// Absolute: epsilon ~ N(0, sigma^2).
// Relative: epsilon ~ N(0, (sigma * rms_j)^2) with rms_j the root-mean-square
// of clean column j over the whole trajectory.
enum class NoiseScale { kAbsolute, kRelative };

std::string to_string(NoiseScale s);
NoiseScale parse_noise_scale(const std::string& s);

// Gamma = -ln(1 - p) / dt for a depolarizing probability p per layer of
// duration dt.
double gamma_from_p(double p, double dt);
// Inverse of gamma_from_p.
double p_from_gamma(double gamma, double dt);

class NoiseModel {
 public:
  NoiseModel() = default;
  NoiseModel(double depolarizing_p, double trotter_dt, double gaussian_sigma,
             std::uint64_t seed, NoiseScale scale = NoiseScale::kAbsolute);

  double depolarizing_p() const { return p_; }
  double trotter_dt() const { return dt_; }
  double gamma() const { return gamma_; }
  double gaussian_sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  NoiseScale scale() const { return scale_; }

 private:
  double p_ = 0.0;
  double dt_ = 0.1;
  double gamma_ = 0.0;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
  NoiseScale scale_ = NoiseScale::kAbsolute;
};

// c'_i(t_j) = e^{-Gamma t_j} c_i(t_j) + epsilon_ij. Each epsilon is drawn from
// a generator keyed by (seed, column label, time index), so results do not
// depend on column order or on which columns are present.
Trajectory apply_noise(const Trajectory& traj, const NoiseModel& model);

}  // namespace opdyn
