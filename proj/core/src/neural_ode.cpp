#include "opdyn/neural_ode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "opdyn/error.hpp"
#include "opdyn/parallel.hpp"

namespace opdyn {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct ChunkOutput {
  double loss = 0.0;
  VectorXd gradient;
  std::vector<StepRecord> steps;
};

// One chunk of windows: adaptive (or fixed) solve, then an exact reverse
// sweep over a cached replay of the accepted steps.
ChunkOutput run_chunk(const VectorField& field, const WindowBatch& batch, Eigen::Index c0,
                      Eigen::Index count, double scale, const SolverConfig& solver,
                      const std::vector<StepRecord>* fixed, bool want_gradient) {
  using DP = DormandPrince;
  const int n_stops = static_cast<int>(batch.targets.size());
  std::vector<double> stops(static_cast<std::size_t>(n_stops));
  for (int m = 0; m < n_stops; ++m) stops[static_cast<std::size_t>(m)] = (m + 1) * batch.dt;

  std::vector<double> times(static_cast<std::size_t>(count));
  auto times_at = [&](double s) -> std::span<const double> {
    for (Eigen::Index b = 0; b < count; ++b) {
      times[static_cast<std::size_t>(b)] = batch.t0[static_cast<std::size_t>(c0 + b)] + s;
    }
    return times;
  };
  BatchField f = [&](double s, const MatrixXd& y, MatrixXd& dy) { field.forward(times_at(s), y, dy); };

  const MatrixXd h0 = batch.h0.middleCols(c0, count);
  ChunkOutput out;
  std::vector<MatrixXd> states;
  if (fixed) {
    out.steps = *fixed;
    if (!want_gradient) states = replay_steps(f, h0, out.steps, stops);
  } else {
    auto r = integrate_to_stops(f, h0, 0.0, stops, solver);
    out.steps = std::move(r.steps);
    states = std::move(r.states);
  }
  auto residual = [&](int m, const MatrixXd& y) -> MatrixXd {
    return y - batch.targets[static_cast<std::size_t>(m)].middleCols(c0, count);
  };
  if (!want_gradient) {
    for (int m = 0; m < n_stops; ++m) out.loss += residual(m, states[static_cast<std::size_t>(m)]).squaredNorm();
    out.loss *= scale;
    return out;
  }

  // Replay with caches. stops_after[n] lists the stops reached by step n.
  const std::size_t n_steps = out.steps.size();
  std::vector<std::array<ForwardCache, 6>> caches(n_steps);
  std::vector<std::vector<int>> stops_after(n_steps);
  std::vector<MatrixXd> stop_residual(static_cast<std::size_t>(n_stops));
  std::array<MatrixXd, 6> k;
  MatrixXd y = h0;
  MatrixXd z;
  int next = 0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto& st = out.steps[n];
    const double hs = st.h;
    for (int i = 0; i < 6; ++i) {
      z = y;
      for (int j = 0; j < i; ++j) {
        if (DP::a[i][j] != 0.0) z.noalias() += (hs * DP::a[i][j]) * k[j];
      }
      field.forward(times_at(st.t + DP::c[i] * hs), z, k[i], &caches[n][i]);
    }
    for (int i = 0; i < 6; ++i) {
      if (DP::b[i] != 0.0) y.noalias() += (hs * DP::b[i]) * k[i];
    }
    while (next < n_stops && stops[static_cast<std::size_t>(next)] == st.t_next) {
      stop_residual[static_cast<std::size_t>(next)] = residual(next, y);
      stops_after[n].push_back(next);
      ++next;
    }
  }
  if (next != n_stops) throw NumericalError("solver schedule does not reach every window point");
  for (const auto& r : stop_residual) out.loss += r.squaredNorm();
  out.loss *= scale;

  out.gradient = VectorXd::Zero(field.params().values.size());
  MatrixXd ybar = MatrixXd::Zero(h0.rows(), count);
  std::array<MatrixXd, 6> kbar;
  MatrixXd zbar;
  for (std::size_t n = n_steps; n-- > 0;) {
    for (int m : stops_after[n]) ybar += (2.0 * scale) * stop_residual[static_cast<std::size_t>(m)];
    const double hs = out.steps[n].h;
    for (int i = 0; i < 6; ++i) kbar[i] = (hs * DP::b[i]) * ybar;
    for (int i = 5; i >= 0; --i) {
      field.backward(caches[n][i], kbar[i], zbar, out.gradient);
      ybar += zbar;
      for (int j = 0; j < i; ++j) {
        if (DP::a[i][j] != 0.0) kbar[j].noalias() += (hs * DP::a[i][j]) * zbar;
      }
    }
  }
  if (!out.gradient.allFinite()) throw NumericalError("non-finite gradient");
  return out;
}

double lr_at(const TrainConfig& c, int epoch) {
  if (c.final_lr_fraction >= 1.0 || c.max_epochs <= 1) return c.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(epoch) / (c.max_epochs - 1));
  const double lo = c.learning_rate * c.final_lr_fraction;
  return lo + 0.5 * (c.learning_rate - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (window_steps < 1) throw ConfigError("window_steps must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(final_lr_fraction > 0.0) || final_lr_fraction > 1.0) {
    throw ConfigError("final_lr_fraction must lie in (0, 1]");
  }
  if (max_epochs < 0) throw ConfigError("max_epochs must be nonnegative");
  if (patience < 0) throw ConfigError("patience must be nonnegative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be nonnegative");
  if (chunk_size < 1) throw ConfigError("chunk_size must be positive");
}

double loss(const Trajectory& pred, const Trajectory& target) {
  if (pred.times.size() != target.times.size()) throw ConfigError("trajectories have different grids");
  for (std::size_t j = 0; j < pred.times.size(); ++j) {
    if (!same_time(pred.times[j], target.times[j])) throw ConfigError("trajectories have different grids");
  }
  if (pred.basis.labels() != target.basis.labels()) throw ConfigError("trajectories have different bases");
  if (pred.coeffs.rows() != target.coeffs.rows() || pred.coeffs.cols() != target.coeffs.cols()) {
    throw ConfigError("trajectory shapes differ");
  }
  return (pred.coeffs - target.coeffs).squaredNorm();
}

WindowBatch make_batch(const Trajectory& traj, std::span<const std::size_t> starts, int window_steps) {
  if (starts.empty()) throw ConfigError("empty window batch");
  if (window_steps < 1) throw ConfigError("window_steps must be at least 1");
  if (traj.times.size() < 2) throw ConfigError("trajectory too short for a window");
  WindowBatch batch;
  batch.dt = traj.times[1] - traj.times[0];
  const auto dim = static_cast<Eigen::Index>(traj.dim());
  const auto count = static_cast<Eigen::Index>(starts.size());
  batch.h0.resize(dim, count);
  batch.targets.assign(static_cast<std::size_t>(window_steps), MatrixXd(dim, count));
  for (Eigen::Index b = 0; b < count; ++b) {
    const std::size_t j = starts[static_cast<std::size_t>(b)];
    if (j + static_cast<std::size_t>(window_steps) >= traj.times.size()) {
      throw ConfigError("window starting at row " + std::to_string(j) + " runs past the trajectory");
    }
    for (int m = 0; m <= window_steps; ++m) {
      const double expect = traj.times[j] + m * batch.dt;
      if (!same_time(traj.times[j + static_cast<std::size_t>(m)], expect)) {
        throw ConfigError("training requires a uniform time grid");
      }
    }
    batch.t0.push_back(traj.times[j]);
    batch.h0.col(b) = traj.coeffs.row(static_cast<Eigen::Index>(j)).transpose();
    for (int m = 0; m < window_steps; ++m) {
      batch.targets[static_cast<std::size_t>(m)].col(b) =
          traj.coeffs.row(static_cast<Eigen::Index>(j) + m + 1).transpose();
    }
  }
  return batch;
}

BatchResult evaluate_batch(const NetworkSpec& spec, const Parameters& params, const WindowBatch& batch,
                           const SolverConfig& solver, const BatchOptions& options, bool want_gradient) {
  if (batch.size() == 0) throw ConfigError("empty window batch");
  if (options.chunk_size < 1) throw ConfigError("chunk_size must be positive");
  if (batch.h0.rows() != spec.state_dim) throw ConfigError("batch state size does not match network");
  solver.validate();
  VectorField field(spec, params);
  const Eigen::Index chunk = options.chunk_size;
  const std::size_t n_chunks = static_cast<std::size_t>((batch.size() + chunk - 1) / chunk);
  if (options.fixed_schedule && options.fixed_schedule->size() != n_chunks) {
    throw ConfigError("fixed schedule has the wrong number of chunks");
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<ChunkOutput> parts(n_chunks);
  parallel_for(n_chunks, options.threads, [&](std::size_t c) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(c) * chunk;
    const Eigen::Index count = std::min(chunk, batch.size() - c0);
    const std::vector<StepRecord>* fixed = options.fixed_schedule ? &(*options.fixed_schedule)[c] : nullptr;
    parts[c] = run_chunk(field, batch, c0, count, scale, solver, fixed, want_gradient);
  });
  BatchResult out;
  if (want_gradient) out.gradient = VectorXd::Zero(params.values.size());
  for (auto& p : parts) {
    out.loss += p.loss;
    if (want_gradient) out.gradient += p.gradient;
    out.schedule.push_back(std::move(p.steps));
  }
  return out;
}

TrainResult train(const Trajectory& traj, const NetworkSpec& spec, const TrainConfig& config,
                  const SolverConfig& solver, const TrainResult* start, std::ostream* log) {
  config.validate();
  solver.validate();
  traj.validate();
  if (static_cast<int>(traj.dim()) != spec.state_dim) {
    throw ConfigError("network state_dim " + std::to_string(spec.state_dim) + " does not match " +
                      std::to_string(traj.dim()) + " trajectory columns");
  }
  std::size_t n_used = 0;
  while (n_used < traj.times.size() && traj.times[n_used] <= config.t_max + 1e-9) ++n_used;
  if (n_used <= static_cast<std::size_t>(config.window_steps)) {
    throw ConfigError("trajectory has " + std::to_string(n_used) + " usable points, need more than window_steps = " +
                      std::to_string(config.window_steps));
  }
  const std::size_t n_windows = n_used - static_cast<std::size_t>(config.window_steps);
  std::vector<std::size_t> order(n_windows);
  for (std::size_t j = 0; j < n_windows; ++j) order[j] = j;
  std::mt19937_64 split_rng(mix(config.seed));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = 0;
  if (config.validation_fraction > 0.0 && n_windows >= 2) {
    n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n_windows))), 1,
        n_windows - 1);
  }
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), fit.size());

  BatchOptions options;
  options.chunk_size = config.chunk_size;
  options.threads = resolve_threads(config.threads);

  TrainResult result;
  Parameters params = start ? start->params : init_parameters(spec, config.seed);
  VectorField check(spec, params);
  (void)check;
  if (start) {
    result.history = start->history;
    result.best_epoch = start->best_epoch;
    result.best_validation = start->best_validation;
  }
  result.params = params;
  const int first_epoch = static_cast<int>(result.history.size());

  std::optional<WindowBatch> val_batch;
  if (!val.empty()) val_batch = make_batch(traj, val, config.window_steps);

  const auto n_params = params.values.size();
  VectorXd m1 = VectorXd::Zero(n_params);
  VectorXd m2 = VectorXd::Zero(n_params);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  long adam_step = 0;

  for (int epoch = first_epoch; epoch < config.max_epochs; ++epoch) {
    std::mt19937_64 rng(mix(config.seed ^ mix(static_cast<std::uint64_t>(epoch) + 1)));
    std::vector<std::size_t> shuffled = fit;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const double lr = lr_at(config, epoch);
    double train_sum = 0.0;
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (std::size_t b0 = 0; b0 < shuffled.size(); b0 += batch_size) {
        const std::size_t b1 = std::min(shuffled.size(), b0 + batch_size);
        std::vector<std::size_t> starts(shuffled.begin() + static_cast<std::ptrdiff_t>(b0),
                                        shuffled.begin() + static_cast<std::ptrdiff_t>(b1));
        const WindowBatch batch = make_batch(traj, starts, config.window_steps);
        BatchResult r = evaluate_batch(spec, params, batch, solver, options);
        if (!std::isfinite(r.loss)) throw NumericalError("non-finite training loss");
        train_sum += r.loss * static_cast<double>(b1 - b0);
        if (config.grad_clip > 0.0) {
          const double norm = r.gradient.norm();
          if (norm > config.grad_clip) r.gradient *= config.grad_clip / norm;
        }
        ++adam_step;
        m1 = kBeta1 * m1 + (1.0 - kBeta1) * r.gradient;
        m2 = kBeta2 * m2 + (1.0 - kBeta2) * r.gradient.cwiseAbs2();
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step));
        params.values.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kEps);
      }
      rec.train_loss = train_sum / static_cast<double>(shuffled.size());
      rec.validation_loss =
          val_batch ? evaluate_batch(spec, params, *val_batch, solver, options, false).loss : rec.train_loss;
      if (!std::isfinite(rec.validation_loss)) throw NumericalError("non-finite validation loss");
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
      if (log) *log << "training aborted: " << result.message << '\n';
      break;
    }
    result.history.push_back(rec);
    if (rec.validation_loss < result.best_validation) {
      result.best_validation = rec.validation_loss;
      result.best_epoch = epoch;
      result.params = params;
    }
    if (log && config.log_every > 0 && (epoch % config.log_every == 0 || epoch + 1 == config.max_epochs)) {
      *log << "epoch " << epoch << " train " << rec.train_loss << " val " << rec.validation_loss << " lr " << lr
           << '\n';
    }
    if (config.patience > 0 && epoch - result.best_epoch >= config.patience) {
      if (log) *log << "early stop at epoch " << epoch << ", best " << result.best_epoch << '\n';
      break;
    }
  }
  return result;
}

Trajectory predict(const NetworkSpec& spec, const Parameters& params, const PauliBasis& basis,
                   const VectorXd& h0, double t0, std::span<const double> grid, const SolverConfig& solver) {
  if (grid.empty()) throw ConfigError("empty prediction grid");
  if (h0.size() != spec.state_dim || static_cast<int>(basis.size()) != spec.state_dim) {
    throw ConfigError("initial state, basis and network dimensions disagree");
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid[j] < t0 - 1e-12) throw ConfigError("prediction grid starts before t0");
    if (j > 0 && !(grid[j] > grid[j - 1])) throw ConfigError("prediction grid must be increasing");
  }
  VectorField field(spec, params);
  Field f = [&](double t, const VectorXd& y) {
    MatrixXd out;
    const double ts[1] = {t};
    field.forward(ts, y, out);
    return VectorXd(out.col(0));
  };
  const double t1 = std::max(t0, grid.back());
  const DenseSolution sol = integrate(f, h0, t0, t1, solver);
  Trajectory traj;
  traj.basis = basis;
  traj.times.assign(grid.begin(), grid.end());
  traj.coeffs.resize(static_cast<Eigen::Index>(grid.size()), spec.state_dim);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    traj.coeffs.row(static_cast<Eigen::Index>(j)) = sol(std::max(t0, grid[j])).transpose();
  }
  traj.meta.set("source", "predict");
  traj.meta.set("t0", format_double(t0));
  traj.meta.set("variant", to_string(spec.variant));
  traj.meta.set("solver.steps", std::to_string(sol.stats().accepted));
  return traj;
}

}  // namespace opdyn
