#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "opdyn/network.hpp"
#include "opdyn/ode_solver.hpp"
#include "opdyn/trajectory.hpp"

namespace opdyn {

struct TrainConfig {
  int batch_size = 64;
  // Observed states fitted after each window start.
  int window_steps = 10;
  double learning_rate = 1e-3;
  // Cosine decay to this fraction of learning_rate at max_epochs; 1 keeps it constant.
  double final_lr_fraction = 1.0;
  int max_epochs = 1000;
  // Epochs without validation improvement before stopping; 0 disables.
  int patience = 100;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  // Only grid points with t <= t_max are used.
  double t_max = std::numeric_limits<double>::infinity();
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  // Windows integrated together. Fixed so results do not depend on threads.
  int chunk_size = 16;
  // 0 resolves through OPDYN_THREADS / hardware concurrency.
  int threads = 0;
  // Progress line every this many epochs on the log stream; 0 silences.
  int log_every = 0;

  void validate() const;
};

// Sum over times and coefficients of squared differences. Grids and bases
// must agree.
double loss(const Trajectory& pred, const Trajectory& target);

// Windows sharing a uniform step: column b starts at (t0[b], h0.col(b)) and
// is compared with targets[m].col(b) at t0[b] + (m + 1) * dt.
struct WindowBatch {
  double dt = 0.0;
  std::vector<double> t0;
  Eigen::MatrixXd h0;
  std::vector<Eigen::MatrixXd> targets;

  Eigen::Index size() const { return h0.cols(); }
};

// Window batch from the grid points listed in `starts`.
WindowBatch make_batch(const Trajectory& traj, std::span<const std::size_t> starts, int window_steps);

// Accepted steps per chunk; feeding them back in reproduces a solve exactly.
using Schedule = std::vector<std::vector<StepRecord>>;

struct BatchOptions {
  int chunk_size = 16;
  int threads = 1;
  // When set, steps are replayed from this schedule instead of chosen adaptively.
  const Schedule* fixed_schedule = nullptr;
};

struct BatchResult {
  // Mean over windows of the window loss.
  double loss = 0.0;
  Eigen::VectorXd gradient;
  Schedule schedule;
};

// Loss and (if want_gradient) its exact derivative through the discrete
// solver steps, step sizes held fixed.
BatchResult evaluate_batch(const NetworkSpec& spec, const Parameters& params, const WindowBatch& batch,
                           const SolverConfig& solver, const BatchOptions& options,
                           bool want_gradient = true);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_validation = std::numeric_limits<double>::infinity();
  bool diverged = false;
  std::string message;
};

// Mini-batch training with early stopping. `start` continues a previous run:
// its parameters and history are the starting point. The returned parameters
// are those with the best validation loss.
TrainResult train(const Trajectory& traj, const NetworkSpec& spec, const TrainConfig& config,
                  const SolverConfig& solver, const TrainResult* start = nullptr,
                  std::ostream* log = nullptr);

// Integrates the learned field from (t0, h0) and samples it on `grid`, which
// must lie in [t0, inf).
Trajectory predict(const NetworkSpec& spec, const Parameters& params, const PauliBasis& basis,
                   const Eigen::VectorXd& h0, double t0, std::span<const double> grid,
                   const SolverConfig& solver);

}  // namespace opdyn
