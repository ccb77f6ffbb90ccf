#include <benchmark/benchmark.h>

#include <cmath>

#include "opdyn/neural_ode.hpp"
#include "opdyn/ode_solver.hpp"

using namespace opdyn;

namespace {

NetworkSpec spec_for(Variant v, int dim) {
  NetworkSpec s;
  s.variant = v;
  s.state_dim = dim;
  return s;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto spec = spec_for(static_cast<Variant>(state.range(0)), 63);
  const auto params = init_parameters(spec, 1);
  VectorField f(spec, params);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Random(63, state.range(1));
  const std::vector<double> t(static_cast<std::size_t>(state.range(1)), 0.5);
  Eigen::MatrixXd out;
  for (auto _ : state) {
    f.forward(t, h, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1, 2}, {1, 16}});

static void BM_ForwardBackward(benchmark::State& state) {
  const auto spec = spec_for(static_cast<Variant>(state.range(0)), 63);
  const auto params = init_parameters(spec, 1);
  VectorField f(spec, params);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Random(63, 16);
  const std::vector<double> t(16, 0.5);
  Eigen::MatrixXd out, gh;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.values.size());
  ForwardCache cache;
  for (auto _ : state) {
    f.forward(t, h, out, &cache);
    f.backward(cache, out, gh, g);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_ForwardBackward)->DenseRange(0, 2);

static void BM_SolverRotation(benchmark::State& state) {
  SolverConfig c;
  c.rtol = std::pow(10.0, -static_cast<double>(state.range(0)));
  c.atol = c.rtol * 1e-2;
  const Field f = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return Eigen::Vector2d(y(1), -y(0)); };
  for (auto _ : state) {
    auto sol = integrate(f, Eigen::Vector2d(1, 0), 0.0, 2 * M_PI, c);
    benchmark::DoNotOptimize(sol.stats().accepted);
  }
}
BENCHMARK(BM_SolverRotation)->Arg(6)->Arg(10);

static void BM_EvaluateBatch(benchmark::State& state) {
  const int dim = 63;
  Trajectory traj;
  for (int j = 0; j <= 50; ++j) traj.times.push_back(0.1 * j);
  std::vector<PauliString> labels;
  const auto full = enumerate_full_basis(3);
  for (std::size_t i = 1; i < full.size(); ++i) labels.push_back(full[i]);
  traj.basis = PauliBasis(labels);
  traj.coeffs = Eigen::MatrixXd::Zero(51, dim);
  for (int j = 0; j <= 50; ++j) traj.coeffs.row(j).setConstant(std::cos(0.1 * j));
  const auto spec = spec_for(Variant::kFan, dim);
  const auto params = init_parameters(spec, 3);
  std::vector<std::size_t> starts;
  for (std::size_t j = 0; j < 32; ++j) starts.push_back(j);
  const auto batch = make_batch(traj, starts, 10);
  BatchOptions opt;
  for (auto _ : state) {
    auto r = evaluate_batch(spec, params, batch, SolverConfig{}, opt, state.range(0) != 0);
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_EvaluateBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
