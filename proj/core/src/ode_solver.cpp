#include "opdyn/ode_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "opdyn/error.hpp"

namespace opdyn {

const std::array<double, 7> DormandPrince::c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};

const std::array<std::array<double, 7>, 7> DormandPrince::a = {{
    {0, 0, 0, 0, 0, 0, 0},
    {1.0 / 5, 0, 0, 0, 0, 0, 0},
    {3.0 / 40, 9.0 / 40, 0, 0, 0, 0, 0},
    {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0, 0},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0, 0},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0, 0},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0},
}};

const std::array<double, 7> DormandPrince::b = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192,
                                                -2187.0 / 6784, 11.0 / 84, 0};

const std::array<double, 7> DormandPrince::e = {-71.0 / 57600, 0,          71.0 / 16695, -71.0 / 1920,
                                                17253.0 / 339200, -22.0 / 525, 1.0 / 40};

const std::array<std::array<double, 4>, 7> DormandPrince::p = {{
    {1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432},
    {0, 0, 0, 0},
    {0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799},
    {0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072},
    {0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408, 701980252875.0 / 199316789632},
    {0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844},
    {0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423},
}};

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("rtol and atol must be positive");
  if (!(initial_step > 0.0)) throw ConfigError("initial_step must be positive");
  if (!(max_step > 0.0)) throw ConfigError("max_step must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
}

namespace {

using Eigen::MatrixXd;
using Stages = std::array<MatrixXd, 7>;

void evaluate(const BatchField& f, double t, const MatrixXd& y, MatrixXd& dy, SolverStats& stats) {
  f(t, y, dy);
  ++stats.evaluations;
  if (dy.rows() != y.rows() || dy.cols() != y.cols()) {
    throw ConfigError("right-hand side returned the wrong shape");
  }
  if (!dy.allFinite()) {
    throw NumericalError("non-finite derivative at t = " + std::to_string(t));
  }
}

// Stages 2..6 and the fifth-order update, given k[0] = f(t, y).
void take_step(const BatchField& f, double t, double hs, const MatrixXd& y, Stages& k,
               MatrixXd& y_new, SolverStats& stats) {
  using DP = DormandPrince;
  MatrixXd z;
  for (int i = 1; i < 6; ++i) {
    z = y;
    for (int j = 0; j < i; ++j) {
      if (DP::a[i][j] != 0.0) z.noalias() += (hs * DP::a[i][j]) * k[j];
    }
    evaluate(f, t + DP::c[i] * hs, z, k[i], stats);
  }
  y_new = y;
  for (int i = 0; i < 6; ++i) {
    if (DP::b[i] != 0.0) y_new.noalias() += (hs * DP::b[i]) * k[i];
  }
}

struct Accepted {
  double t;
  double hs;
  double t_next;
  const MatrixXd& y;
  const Stages& k;
};

template <typename OnAccept, typename OnStop>
SolverStats run(const BatchField& f, const MatrixXd& y0, double t0, std::span<const double> stops,
                const SolverConfig& config, OnAccept&& on_accept, OnStop&& on_stop) {
  using DP = DormandPrince;
  config.validate();
  SolverStats stats;
  if (stops.empty()) return stats;
  const double dir = stops.back() >= t0 ? 1.0 : -1.0;
  for (std::size_t s = 0; s < stops.size(); ++s) {
    const double prev = s == 0 ? t0 : stops[s - 1];
    if (!std::isfinite(stops[s]) || (stops[s] - prev) * dir < 0.0) {
      throw ConfigError("stop times must be finite and monotone from t0");
    }
  }
  if (!y0.allFinite()) throw NumericalError("non-finite initial state");

  Stages k;
  MatrixXd y = y0;
  MatrixXd y_new;
  double t = t0;
  double h = std::min(config.initial_step, config.max_step);
  double facold = 1e-4;
  bool last_rejected = false;
  bool have_k0 = false;
  constexpr double kExpo = 0.17;
  constexpr double kBeta = 0.04;
  constexpr double kSafe = 0.9;

  std::size_t next = 0;
  while (next < stops.size()) {
    const double target = stops[next];
    if ((target - t) * dir <= 0.0) {
      on_stop(next, y);
      ++next;
      continue;
    }
    if (!have_k0) {
      evaluate(f, t, y, k[0], stats);
      have_k0 = true;
    }
    if (stats.accepted + stats.rejected >= config.max_steps) {
      throw NumericalError("step limit of " + std::to_string(config.max_steps) +
                           " reached at t = " + std::to_string(t));
    }
    const double remaining = std::abs(target - t);
    const bool hits = h >= remaining * (1.0 - 1e-12);
    const double h_step = hits ? remaining : h;
    const double hs = dir * h_step;
    const double t_next = hits ? target : t + hs;

    take_step(f, t, hs, y, k, y_new, stats);
    evaluate(f, t_next, y_new, k[6], stats);

    double sum = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        double err = 0.0;
        for (int i = 0; i < 7; ++i) {
          if (DP::e[i] != 0.0) err += DP::e[i] * k[i](r, c);
        }
        err *= hs;
        const double sc = config.atol + config.rtol * std::max(std::abs(y(r, c)), std::abs(y_new(r, c)));
        sum += (err / sc) * (err / sc);
      }
    }
    const double err = std::sqrt(sum / static_cast<double>(std::max<Eigen::Index>(1, y.size())));
    const double fac11 = std::pow(err, kExpo);

    if (err <= 1.0) {
      ++stats.accepted;
      on_accept(Accepted{t, hs, t_next, y, k});
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::clamp(fac / kSafe, 0.1, 5.0);
      double h_new = h_step / fac;
      if (last_rejected) h_new = std::min(h_new, h_step);
      facold = std::max(err, 1e-4);
      last_rejected = false;
      y.swap(y_new);
      k[0].swap(k[6]);
      t = t_next;
      h = std::min(h_new, config.max_step);
    } else {
      ++stats.rejected;
      last_rejected = true;
      h = h_step / std::min(5.0, fac11 / kSafe);
    }
    if (!std::isfinite(h) || h <= 1e-14 * std::max(1.0, std::abs(t))) {
      throw NumericalError("step size underflow at t = " + std::to_string(t));
    }
  }
  return stats;
}

}  // namespace

StopsResult integrate_to_stops(const BatchField& f, const MatrixXd& y0, double t0,
                               std::span<const double> stops, const SolverConfig& config) {
  StopsResult out;
  out.states.resize(stops.size());
  out.stats = run(
      f, y0, t0, stops, config,
      [&](const Accepted& s) { out.steps.push_back({s.t, s.hs, s.t_next}); },
      [&](std::size_t j, const MatrixXd& y) { out.states[j] = y; });
  return out;
}

std::vector<MatrixXd> replay_steps(const BatchField& f, const MatrixXd& y0,
                                   std::span<const StepRecord> steps,
                                   std::span<const double> stops) {
  std::vector<MatrixXd> states(stops.size());
  SolverStats stats;
  Stages k;
  MatrixXd y = y0;
  MatrixXd y_new;
  std::size_t next = 0;
  double t = steps.empty() ? (stops.empty() ? 0.0 : stops.front()) : steps.front().t;
  auto flush = [&] {
    while (next < stops.size() && stops[next] == t) states[next++] = y;
  };
  flush();
  for (const auto& s : steps) {
    evaluate(f, s.t, y, k[0], stats);
    take_step(f, s.t, s.h, y, k, y_new, stats);
    y.swap(y_new);
    t = s.t_next;
    flush();
  }
  if (next != stops.size()) throw ConfigError("replayed steps do not reach every stop");
  return states;
}

Eigen::VectorXd DenseSolution::operator()(double t) const {
  const double lo = std::min(t0_, t1_);
  const double hi = std::max(t0_, t1_);
  if (!(t >= lo && t <= hi)) {
    throw ConfigError("query time " + std::to_string(t) + " outside integrated span [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (segments_.empty() || t == t0_) return y0_;
  const double dir = t1_ >= t0_ ? 1.0 : -1.0;
  // First segment whose end is at or beyond t.
  auto it = std::lower_bound(segments_.begin(), segments_.end(), t,
                             [dir](const Segment& s, double v) { return (s.t + s.h - v) * dir < 0.0; });
  if (it == segments_.end()) it = std::prev(segments_.end());
  const double x = (t - it->t) / it->h;
  Eigen::Vector4d powers(x, x * x, x * x * x, x * x * x * x);
  return it->y + it->h * (it->q * powers);
}

DenseSolution integrate(const Field& f, const Eigen::VectorXd& h0, double t0, double t1,
                        const SolverConfig& config) {
  DenseSolution sol(t0, h0);
  BatchField batch = [&](double t, const MatrixXd& y, MatrixXd& dy) { dy = f(t, y.col(0)); };
  const double stop[1] = {t1};
  sol.stats_ = run(
      batch, MatrixXd(h0), t0, stop, config,
      [&](const Accepted& s) {
        DenseSolution::Segment seg;
        seg.t = s.t;
        seg.h = s.hs;
        seg.y = s.y.col(0);
        seg.q = MatrixXd::Zero(h0.size(), 4);
        for (int i = 0; i < 7; ++i) {
          for (int j = 0; j < 4; ++j) {
            if (DormandPrince::p[i][j] != 0.0) seg.q.col(j) += DormandPrince::p[i][j] * s.k[i].col(0);
          }
        }
        sol.segments_.push_back(std::move(seg));
        sol.t1_ = s.t_next;
      },
      [](std::size_t, const MatrixXd&) {});
  sol.t1_ = t1;
  return sol;
}

}  // namespace opdyn
