// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "opdyn/checkpoint.hpp"
#include "opdyn/exact_sim.hpp"
#include "opdyn/neural_ode.hpp"
#include "opdyn/spectroscopy.hpp"

namespace fs = std::filesystem;
using namespace opdyn;
using namespace opdyn::cli;

namespace {

// Pinned tolerances.
constexpr double kA1Tol = 1e-10;
constexpr double kA1Seconds = 10.0;
constexpr double kA2SectorTol = 1e-12;
constexpr double kA2NormTol = 1e-9;
constexpr double kA3MaxError = 0.20;
constexpr double kA3Seconds = 30 * 60.0;
constexpr double kLineWeightFraction = 0.05;
constexpr double kA4MaxDifference = 0.10;
constexpr double kA5MinFrequency = 0.2;
constexpr double kA5Seconds = 2 * 3600.0;
constexpr double kA6Tol = 1e-4;
constexpr double kA7Factor = 100.0;
constexpr double kA8Tol = 1e-10;
const double kBin = 2 * M_PI / 200.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
  if (!pass) ++failures;
}

void note(const std::string& s) { std::cout << "  " << s << std::endl; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Runs a CLI command in-process; the command log goes to <dir>/<tag>.log.
void run(const std::string& command, RunConfig config, const std::vector<std::string>& overrides,
         const fs::path& dir, const std::string& tag, std::optional<fs::path> in, std::optional<fs::path> out) {
  for (const auto& o : overrides) config.set_override(o);
  std::ofstream log(dir / (tag + ".log"));
  CommandArgs args{config, std::move(in), std::move(out)};
  const int status = run_command(command, args, log);
  if (status != 0) throw std::runtime_error(command + " (" + tag + ") exited with " + std::to_string(status));
}

RunConfig load_config(const std::string& name) { return RunConfig::load(fs::path(OPDYN_SOURCE_DIR) / "configs" / name); }

double relative_error(const Trajectory& pred, const Trajectory& ref, double from, double to) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < pred.times.size(); ++j) {
    const double t = pred.times[j];
    if (t < from - 1e-9 || t > to + 1e-9) continue;
    const auto r = ref.time_index(t);
    if (!r) throw std::runtime_error("reference lacks t = " + fmt(t));
    num += (pred.state(j) - ref.state(*r)).squaredNorm();
    den += ref.state(*r).squaredNorm();
  }
  return std::sqrt(num / den);
}

// Lines of weight >= fraction * C(0) that have no peak within one bin. A
// spectrum whose own resolution is coarser than that bin resolves none of them.
std::vector<double> missed_lines(const std::vector<SpectralLine>& lines, const Spectrum& spectrum,
                                 const PeakList& peaks) {
  const bool resolved = !is_low_resolution(spectrum, kBin * (1 + 1e-9));
  double c0 = 0.0;
  for (const auto& l : lines) c0 += l.weight;
  std::vector<double> missed;
  for (const auto& l : lines) {
    if (l.weight < kLineWeightFraction * c0) continue;
    bool hit = false;
    for (const auto& p : peaks.peaks) hit = hit || (resolved && std::abs(p.omega - l.frequency) <= kBin);
    if (!hit) missed.push_back(l.frequency);
  }
  return missed;
}

std::string list(const std::vector<double>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "}";
}

// ---------------------------------------------------------------------------

void a1() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int n : {2, 3}) {
    TfimSpec spec;
    spec.n_sites = n;
    const TfimSystem sys(spec);
    const auto o = Observable::sum_x(n);
    const auto basis = enumerate_full_basis(n);
    std::uniform_int_distribution<std::size_t> pick(1, basis.size() - 1);
    std::uniform_real_distribution<double> time(0.0, 10.0);
    for (int k = 0; k < 20; ++k) {
      const auto& sigma = basis[pick(rng)];
      const double t = time(rng);
      const double via_state = measure_coefficient_via_state(sys, o, sigma, t);
      const PauliBasis one({sigma});
      const double direct = pauli_coefficients(heisenberg_evolve(sys, o, t), one)[0];
      worst = std::max(worst, std::abs(via_state - direct));
    }
  }
  const double secs = seconds_since(start);
  report("A1", worst <= kA1Tol && secs < kA1Seconds,
         "max |state protocol - trace coefficient| = " + fmt(worst) + " over 40 pairs, " + fmt(secs) + " s");
}

void a2() {
  TfimSpec spec;
  TruncationPolicy policy;
  std::vector<double> grid;
  for (int j = 0; j <= 2000; ++j) grid.push_back(0.1 * j);
  const auto traj = generate_trajectory(spec, Observable::sum_x(3), policy, grid);
  const auto s = SymmetryOperator::bit_flip(3).generator;
  double sector = 0.0;
  for (std::size_t i = 0; i < traj.dim(); ++i) {
    if (commutes(traj.basis[i], s)) continue;
    sector = std::max(sector, traj.coeffs.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff());
  }
  const double n0 = traj.coeffs.row(0).squaredNorm();
  double drift = 0.0;
  for (Eigen::Index j = 0; j < traj.coeffs.rows(); ++j) drift = std::max(drift, std::abs(traj.coeffs.row(j).squaredNorm() - n0));
  report("A2", sector < kA2SectorTol && drift <= kA2NormTol,
         "max anticommuting coefficient " + fmt(sector) + ", max |sum c^2 - sum c0^2| " + fmt(drift) + " over t in [0,200]");
}

void a6() {
  TfimSpec spec;
  TruncationPolicy policy;
  std::vector<double> grid;
  for (int j = 0; j <= 50; ++j) grid.push_back(0.1 * j);
  const auto traj = generate_trajectory(spec, Observable::sum_x(3), policy, grid);
  std::vector<std::size_t> starts{0, 9, 17, 28, 35};
  const auto batch = make_batch(traj, starts, 10);
  SolverConfig sc;
  double worst = 0.0;
  std::string detail;
  for (auto v : {Variant::kFcn, Variant::kFan, Variant::kFanTime}) {
    NetworkSpec ns;
    ns.variant = v;
    ns.state_dim = static_cast<int>(traj.dim());
    ns.hidden_width = 32;
    ns.partition = {8, 8, 16};
    ns.trainable_frequencies = v != Variant::kFcn;
    const auto params = init_parameters(ns, 7);
    BatchOptions opt;
    const auto r = evaluate_batch(ns, params, batch, sc, opt, true);
    BatchOptions fixed = opt;
    fixed.fixed_schedule = &r.schedule;
    std::mt19937_64 rng(static_cast<std::uint64_t>(v) + 11);
    std::uniform_int_distribution<Eigen::Index> pick(0, params.values.size() - 1);
    double var_worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const auto i = pick(rng);
      const double eps = 1e-6;
      auto plus = params, minus = params;
      plus.values(i) += eps;
      minus.values(i) -= eps;
      const double fd = (evaluate_batch(ns, plus, batch, sc, fixed, false).loss -
                         evaluate_batch(ns, minus, batch, sc, fixed, false).loss) /
                        (2 * eps);
      // Relative error, floored for coordinates whose derivative nearly vanishes.
      const double err = std::abs(r.gradient(i) - fd) / std::max(std::abs(fd), 1e-3);
      var_worst = std::max(var_worst, err);
    }
    worst = std::max(worst, var_worst);
    detail += to_string(v) + " " + fmt(var_worst) + " ";
  }
  report("A6", worst < kA6Tol, "max relative error over 50 coordinates: " + detail);
}

void a7() {
  const Field rot = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return Eigen::Vector2d(y(1), -y(0)); };
  SolverConfig c;
  c.rtol = 1e-8;
  c.atol = 1e-10;
  const double period = 2 * M_PI;
  const double err = (integrate(rot, Eigen::Vector2d(1, 0), 0.0, period, c)(period) - Eigen::Vector2d(1, 0)).norm();
  std::vector<double> errs;
  for (double tol : {1e-5, 1e-6, 1e-7, 1e-8}) {
    SolverConfig d;
    d.rtol = tol;
    d.atol = tol * 1e-2;
    errs.push_back((integrate(rot, Eigen::Vector2d(1, 0), 0.0, period, d)(period) - Eigen::Vector2d(1, 0)).norm());
  }
  bool monotone = true;
  for (std::size_t k = 1; k < errs.size(); ++k) monotone = monotone && errs[k] < errs[k - 1];
  report("A7", err <= kA7Factor * c.rtol && monotone,
         "one-period error " + fmt(err) + " at rtol 1e-8; errors at rtol 1e-5..1e-8 " + list(errs));
}

void a8() {
  TfimSpec spec;
  spec.n_sites = 2;
  const TfimSystem sys(spec);
  const auto o = Observable::sum_x(2);
  PauliBasis basis = enumerate_full_basis(2);
  std::vector<PauliString> non_identity(basis.elements().begin() + 1, basis.elements().end());
  basis = PauliBasis(non_identity);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> time(0.0, 10.0);
  const double gamma = 0.05;
  double clean = 0.0, noisy = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double t = time(rng);
    const auto row = process_matrix_row(sys, o, basis, t);
    const auto coeffs = pauli_coefficients(heisenberg_evolve(sys, o, t), basis);
    const auto damped = process_matrix_row(sys, o, basis, t, gamma);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      clean = std::max(clean, std::abs(row[i] - coeffs[i]));
      noisy = std::max(noisy, std::abs(damped[i] - std::exp(-gamma * t) * row[i]));
    }
  }
  report("A8", clean <= kA8Tol && noisy <= kA8Tol,
         "max |chi row - coefficients| " + fmt(clean) + ", max |depolarized - e^{-gamma t} row| " + fmt(noisy));
}

// ---------------------------------------------------------------------------
// N = 3 pipeline shared by A3, A4, A9 and A10.

struct Pipeline {
  fs::path dir;
  double seconds = 0.0;
  std::vector<std::string> files{"data.traj", "model.ckp", "model.ckp.history", "pred.traj", "spectrum.spec",
                                 "spectrum.peaks"};
};

Pipeline run_n3_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const auto cfg = load_config("tfim_n3.cfg");
  const auto start = Clock::now();
  run("generate", cfg, {}, dir, "generate", std::nullopt, dir / "data.traj");
  run("train", cfg, {}, dir, "train", dir / "data.traj", dir / "model.ckp");
  run("predict", cfg, {"predict.data=" + (dir / "data.traj").string()}, dir, "predict", dir / "model.ckp",
      dir / "pred.traj");
  run("spectrum", cfg, {"spectrum.prefix=" + (dir / "data.traj").string()}, dir, "spectrum", dir / "pred.traj",
      dir / "spectrum");
  return Pipeline{dir, seconds_since(start)};
}

void a3_a4(const Pipeline& p, bool& a3_passed) {
  const auto cfg = load_config("tfim_n3.cfg");
  const TfimSystem sys(cfg.system());
  const auto o = cfg.observable();
  TruncationPolicy policy = cfg.truncation();
  std::vector<double> grid;
  for (int j = 0; j <= 2000; ++j) grid.push_back(0.1 * j);
  const auto exact = generate_trajectory(cfg.system(), o, policy, grid);
  const auto pred = read_trajectory(p.dir / "pred.traj");
  const double err = relative_error(pred, exact, 5.0, 20.0);

  const auto lines = exact_spectral_lines(sys, o);
  const auto spectrum = read_spectrum(p.dir / "spectrum.spec");
  const auto peaks = find_peaks(spectrum, cfg.real("spectrum.threshold"));
  const auto missed = missed_lines(lines, spectrum, peaks);

  // Training window alone: exact C(t) on [0, 5].
  std::vector<double> window(grid.begin(), grid.begin() + 51);
  const auto short_spec = fft_spectrum(window, two_point_function(sys, o, window), cfg.window());
  const auto short_missed = missed_lines(lines, short_spec, find_peaks(short_spec, cfg.real("spectrum.threshold")));

  std::vector<double> strong;
  double c0 = 0.0;
  for (const auto& l : lines) c0 += l.weight;
  for (const auto& l : lines) {
    if (l.weight >= kLineWeightFraction * c0) strong.push_back(l.frequency);
  }
  note("exact lines with weight >= 5% of C(0): " + list(strong));
  std::vector<double> found;
  for (const auto& pk : peaks.peaks) found.push_back(pk.omega);
  note("predicted-spectrum peaks: " + list(found));
  note("training-window spectrum misses " + list(short_missed));
  a3_passed = err <= kA3MaxError && missed.empty() && !short_missed.empty() && p.seconds <= kA3Seconds;
  report("A3", a3_passed,
         "relative L2 error on [5,20] " + fmt(err) + "; unmatched lines " + list(missed) +
             "; training-window-only spectrum unmatched " + std::to_string(short_missed.size()) + "; pipeline " +
             fmt(p.seconds) + " s");

  // A4: the same model started from exact states at t0 = 3, 5, 7.
  const auto ckp = read_checkpoint(p.dir / "model.ckp");
  std::vector<Trajectory> runs;
  for (double t0 : {3.0, 5.0, 7.0}) {
    std::vector<double> g;
    for (int j = 0; t0 + 0.1 * j <= 20.0 + 1e-9; ++j) g.push_back(t0 + 0.1 * j);
    const auto row = exact.time_index(t0);
    runs.push_back(predict(ckp.spec, ckp.params, ckp.basis, exact.state(*row), t0, g, cfg.solver()));
  }
  const char* names[] = {"3", "5", "7"};
  double worst = 0.0;
  std::string detail;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < runs[a].times.size(); ++j) {
        const double t = runs[a].times[j];
        if (t < 7.0 - 1e-9) continue;
        const auto jb = runs[b].time_index(t);
        const auto je = exact.time_index(t);
        num += (runs[a].state(j) - runs[b].state(*jb)).squaredNorm();
        den += exact.state(*je).squaredNorm();
      }
      const double d = std::sqrt(num / den);
      worst = std::max(worst, d);
      detail += std::string(names[a]) + "-" + names[b] + " " + fmt(d) + " ";
    }
  }
  report("A4", worst <= kA4MaxDifference, "pairwise relative L2 difference on [7,20]: " + detail);
}

bool same_files(const Pipeline& a, const Pipeline& b, std::string& detail) {
  bool same = true;
  for (const auto& f : a.files) {
    const auto ha = fnv1a(slurp(a.dir / f));
    const auto hb = fnv1a(slurp(b.dir / f));
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %016llx%s", f.c_str(), static_cast<unsigned long long>(ha),
                  ha == hb ? "" : " (differs)");
    note(buf);
    same = same && ha == hb && slurp(a.dir / f) == slurp(b.dir / f);
  }
  detail = same ? "all pipeline files identical" : "pipeline files differ";
  return same;
}

void a9(const fs::path& root, const Pipeline& p, bool a3_passed) {
  const auto cfg = load_config("tfim_n3.cfg");
  std::vector<std::string> reports;
  for (const char* name : {"compare1", "compare2"}) {
    const auto dir = root / name;
    fs::create_directories(dir);
    run("compare", cfg, {"predict.t_end=20"}, dir, "compare", p.dir / "data.traj", dir / "drift.txt");
    reports.push_back(slurp(dir / "drift.txt") + slurp(dir / "drift.txt.spectra"));
  }
  std::istringstream in(reports[0]);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("rms_drift.", 0) == 0) note(line);
  }
  const bool deterministic = reports[0] == reports[1];
  report("A9", deterministic && a3_passed,
         std::string("comparison report ") + (deterministic ? "reproduced exactly" : "differs between runs") +
             ", FAN model " + (a3_passed ? "passes" : "fails") + " A3");
}

// ---------------------------------------------------------------------------

void a5(const fs::path& root) {
  const auto dir = root / "n5";
  fs::create_directories(dir);
  const auto cfg = load_config("tfim_n5_noisy.cfg");
  const auto start = Clock::now();
  run("generate", cfg, {"basis.sweep=true"}, dir, "generate", std::nullopt, dir / "clean.traj");
  {
    std::ifstream log(dir / "generate.log");
    std::string line;
    while (std::getline(log, line)) {
      if (line.rfind("radius", 0) == 0 || line.rfind("basis size", 0) == 0) note(line);
    }
  }
  run("noise", cfg, {}, dir, "noise", dir / "clean.traj", dir / "noisy.traj");
  run("train", cfg, {}, dir, "train", dir / "noisy.traj", dir / "model.ckp");
  run("predict", cfg, {"predict.data=" + (dir / "noisy.traj").string()}, dir, "predict", dir / "model.ckp",
      dir / "pred.traj");
  run("spectrum", cfg, {"spectrum.prefix=" + (dir / "noisy.traj").string()}, dir, "spectrum", dir / "pred.traj",
      dir / "pred");
  const double secs = seconds_since(start);
  // Reference: noiseless coefficients of the same basis over [0, 200].
  run("generate", cfg, {"grid.t_end=200"}, dir, "reference", std::nullopt, dir / "reference.traj");
  run("spectrum", cfg, {}, dir, "reference_spectrum", dir / "reference.traj", dir / "reference");

  const double threshold = cfg.real("spectrum.threshold");
  auto high = [&](const Spectrum& s) {
    PeakList all = find_peaks(s, threshold);
    PeakList out = all;
    out.peaks.clear();
    for (const auto& pk : all.peaks) {
      if (pk.frequency() > kA5MinFrequency) out.peaks.push_back(pk);
    }
    return out;
  };
  const auto pred = read_spectrum(dir / "pred.spec");
  const auto ref = read_spectrum(dir / "reference.spec");
  const auto cmp = compare_peaks(high(pred), kBin, high(ref), kBin);
  std::vector<double> matched;
  for (const auto& m : cmp.matched) matched.push_back(m.omega_b / (2 * M_PI));
  std::vector<double> ua, ub;
  for (double w : cmp.unmatched_a) ua.push_back(w / (2 * M_PI));
  for (double w : cmp.unmatched_b) ub.push_back(w / (2 * M_PI));
  note("matched reference peaks (f): " + list(matched));
  report("A5", cmp.all_matched() && !cmp.matched.empty() && secs <= kA5Seconds,
         "peaks above f = 0.2: matched " + std::to_string(cmp.matched.size()) + ", predicted-only " + list(ua) +
             ", reference-only " + list(ub) + " (ordinary frequency); pipeline " + fmt(secs) + " s");
}

}  // namespace

// Usage: acceptance [work_dir [criterion...]]. Without criteria every one runs.
int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "opdyn_acceptance";
  const std::vector<std::string> only(argv + std::min(argc, 2), argv + argc);
  fs::remove_all(root);
  fs::create_directories(root);
  auto guard = [&](const char* id, const std::function<void()>& f) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("error: ") + e.what());
    }
  };
  guard("A1", a1);
  guard("A2", a2);
  guard("A6", a6);
  guard("A7", a7);
  guard("A8", a8);

  bool a3_passed = false;
  std::optional<Pipeline> first;
  // A4 reuses the A3 model and is reported alongside it.
  guard("A3", [&] {
    try {
      first = run_n3_pipeline(root / "run1");
    } catch (const std::exception& e) {
      report("A4", false, "no model: " + std::string(e.what()));
      throw;
    }
    a3_a4(*first, a3_passed);
  });
  guard("A10", [&] {
    if (!first) throw std::runtime_error("A3 pipeline did not run");
    const auto second = run_n3_pipeline(root / "run2");
    std::string detail;
    const bool same = same_files(*first, second, detail);
    report("A10", same, detail);
  });
  guard("A9", [&] {
    if (!first) throw std::runtime_error("A3 pipeline did not run");
    a9(root, *first, a3_passed);
  });
  guard("A5", [&] { a5(root); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
