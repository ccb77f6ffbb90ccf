#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace opdyn {

struct SolverConfig {
  double rtol = 1e-6;
  double atol = 1e-8;
  double initial_step = 0.01;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 100000;

  void validate() const;
};

// Dormand-Prince 5(4) coefficients. Stage 7 is evaluated at the new point and
// reused as stage 1 of the next step.
struct DormandPrince {
  static constexpr int kStages = 7;
  static const std::array<double, kStages> c;
  static const std::array<std::array<double, kStages>, kStages> a;
  static const std::array<double, kStages> b;
  // b - b_hat of the embedded fourth-order solution.
  static const std::array<double, kStages> e;
  // Dense-output polynomial coefficients: y(t + x h) = y + h sum_i k_i (P_i . [x, x^2, x^3, x^4]).
  static const std::array<std::array<double, 4>, kStages> p;
};

// Batched right-hand side: columns of y are independent states sharing t.
using BatchField = std::function<void(double t, const Eigen::MatrixXd& y, Eigen::MatrixXd& dy)>;
using Field = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& y)>;

struct StepRecord {
  double t = 0.0;
  double h = 0.0;
  double t_next = 0.0;
};

struct SolverStats {
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

struct StopsResult {
  // State at each requested stop, in order.
  std::vector<Eigen::MatrixXd> states;
  // Accepted steps; replaying them reproduces `states` bit for bit.
  std::vector<StepRecord> steps;
  SolverStats stats;
};

// Integrates from t0 through every time in `stops` (monotone in one
// direction), landing exactly on each. Throws NumericalError on non-finite
// derivatives, step-size underflow or exhaustion of max_steps.
StopsResult integrate_to_stops(const BatchField& f, const Eigen::MatrixXd& y0, double t0,
                               std::span<const double> stops, const SolverConfig& config);

// Takes the given steps without error control. Used to re-run a recorded
// schedule, e.g. for finite-difference checks of a differentiated solve.
std::vector<Eigen::MatrixXd> replay_steps(const BatchField& f, const Eigen::MatrixXd& y0,
                                          std::span<const StepRecord> steps,
                                          std::span<const double> stops);

// Piecewise quartic interpolant over the accepted steps.
class DenseSolution {
 public:
  struct Segment {
    double t = 0.0;
    double h = 0.0;
    Eigen::VectorXd y;
    // Column j multiplies x^(j+1).
    Eigen::MatrixXd q;
  };

  DenseSolution(double t0, Eigen::VectorXd y0) : t0_(t0), t1_(t0), y0_(std::move(y0)) {}

  double t_begin() const { return t0_; }
  double t_end() const { return t1_; }
  const SolverStats& stats() const { return stats_; }
  const std::vector<Segment>& segments() const { return segments_; }
  // Value at t; throws ConfigError outside [t_begin, t_end] (in either order).
  Eigen::VectorXd operator()(double t) const;

 private:
  friend DenseSolution integrate(const Field&, const Eigen::VectorXd&, double, double,
                                 const SolverConfig&);
  double t0_;
  double t1_;
  Eigen::VectorXd y0_;
  std::vector<Segment> segments_;
  SolverStats stats_;
};

// t1 < t0 integrates backwards.
DenseSolution integrate(const Field& f, const Eigen::VectorXd& h0, double t0, double t1,
                        const SolverConfig& config);

}  // namespace opdyn
