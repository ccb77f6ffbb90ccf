#include "opdyn/noise.hpp"

#include <cmath>
#include <random>

#include "opdyn/error.hpp"

namespace opdyn {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double keyed_normal(std::uint64_t seed, const std::string& label,
                    std::size_t time_index) {
  const std::uint64_t key =
      splitmix64(splitmix64(seed) ^ fnv1a(label)) ^ splitmix64(time_index + 1);
  std::mt19937_64 rng(key);
  std::normal_distribution<double> normal(0.0, 1.0);
  return normal(rng);
}

}  // namespace

std::string to_string(NoiseScale s) {
  return s == NoiseScale::kAbsolute ? "absolute" : "relative";
}

NoiseScale parse_noise_scale(const std::string& s) {
  if (s == "absolute") return NoiseScale::kAbsolute;
  if (s == "relative") return NoiseScale::kRelative;
  throw ConfigError("unknown noise mode '" + s + "'");
}

double gamma_from_p(double p, double dt) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("depolarizing probability must be in [0, 1)");
  }
  if (!(dt > 0.0)) throw ConfigError("Trotter step must be positive");
  return -std::log1p(-p) / dt;
}

double p_from_gamma(double gamma, double dt) {
  if (!(gamma >= 0.0)) throw ConfigError("decay rate must be nonnegative");
  if (!(dt > 0.0)) throw ConfigError("Trotter step must be positive");
  return -std::expm1(-gamma * dt);
}

NoiseModel::NoiseModel(double depolarizing_p, double trotter_dt,
                       double gaussian_sigma, std::uint64_t seed,
                       NoiseScale scale)
    : p_(depolarizing_p),
      dt_(trotter_dt),
      gamma_(gamma_from_p(depolarizing_p, trotter_dt)),
      sigma_(gaussian_sigma),
      seed_(seed),
      scale_(scale) {
  if (!(gaussian_sigma >= 0.0) || !std::isfinite(gaussian_sigma)) {
    throw ConfigError("Gaussian noise scale must be nonnegative");
  }
}

Trajectory apply_noise(const Trajectory& traj, const NoiseModel& model) {
  traj.validate();
  Trajectory out = traj;
  const auto rows = traj.coeffs.rows();
  for (Eigen::Index i = 0; i < traj.coeffs.cols(); ++i) {
    double scale = model.gaussian_sigma();
    if (model.scale() == NoiseScale::kRelative && rows > 0) {
      scale *= std::sqrt(traj.coeffs.col(i).squaredNorm() / static_cast<double>(rows));
    }
    const auto& label = traj.basis.labels()[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < rows; ++j) {
      double v = traj.coeffs(j, i);
      if (model.gamma() != 0.0) {
        v *= std::exp(-model.gamma() * traj.times[static_cast<std::size_t>(j)]);
      }
      if (scale != 0.0) {
        v += scale * keyed_normal(model.seed(), label, static_cast<std::size_t>(j));
      }
      out.coeffs(j, i) = v;
    }
  }
  out.meta.set("noise.p", format_double(model.depolarizing_p()));
  out.meta.set("noise.dt", format_double(model.trotter_dt()));
  out.meta.set("noise.gamma", format_double(model.gamma()));
  out.meta.set("noise.sigma", format_double(model.gaussian_sigma()));
  out.meta.set("noise.mode", to_string(model.scale()));
  out.meta.set("noise.seed", std::to_string(model.seed()));
  out.meta.set("noise.draws", "independent per (column, time)");
  return out;
}

}  // namespace opdyn
