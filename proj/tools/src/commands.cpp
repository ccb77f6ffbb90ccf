#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "opdyn/checkpoint.hpp"
#include "opdyn/error.hpp"
#include "opdyn/parallel.hpp"

namespace opdyn::cli {
namespace {

const std::filesystem::path& need(const std::optional<std::filesystem::path>& p, const char* flag) {
  if (!p) throw ConfigError(std::string("missing ") + flag);
  return *p;
}

// Path-valued keys are left out of stored provenance so output files do not
// depend on where inputs live.
bool is_path_key(const std::string& key) {
  return key == "predict.data" || key == "train.resume" || key == "spectrum.prefix";
}

void echo_config(const RunConfig& c, std::ostream& log) {
  log << "# resolved config\n" << c.resolved() << "# end config\n";
}

void stamp(Metadata& meta, const RunConfig& c) {
  for (const auto& key : {"system.n_sites", "system.coupling", "system.field", "system.sign", "system.boundary",
                          "observable.expr"}) {
    if (!meta.get(key)) meta.set(key, c.raw(key));
  }
}

Trajectory read_nonempty(const std::filesystem::path& path) {
  Trajectory t = read_trajectory(path);
  if (t.times.empty()) throw FormatError(path.string() + " has no data rows");
  return t;
}

std::vector<std::string> variants_of(const RunConfig& c) {
  std::vector<std::string> out;
  std::stringstream in(c.raw("compare.variants"));
  std::string v;
  while (std::getline(in, v, ',')) {
    if (!v.empty()) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("compare.variants is empty");
  return out;
}

Checkpoint to_checkpoint(const NetworkSpec& spec, const TrainResult& r, const PauliBasis& basis,
                         const RunConfig& c) {
  Checkpoint ckp;
  ckp.spec = spec;
  ckp.params = r.params;
  ckp.basis = basis;
  ckp.history = r.history;
  ckp.best_epoch = r.best_epoch;
  ckp.best_validation = r.best_validation;
  ckp.seed = static_cast<std::uint64_t>(c.integer("train.seed"));
  for (const auto& [k, v] : c.values()) {
    if (!is_path_key(k)) ckp.meta.set("config." + k, v);
  }
  return ckp;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "epoch train_loss validation_loss\n";
  for (const auto& r : history) {
    out << r.epoch << ' ' << format_double(r.train_loss) << ' ' << format_double(r.validation_loss) << '\n';
  }
}

TrainResult fit(const Trajectory& data, const NetworkSpec& spec, const RunConfig& c, std::ostream& log,
                const TrainResult* start) {
  TrainResult r = train(data, spec, c.training(), c.solver(), start, &log);
  log << "trained " << r.history.size() << " epochs, best validation " << r.best_validation << " at epoch "
      << r.best_epoch << '\n';
  return r;
}

Trajectory predict_from(const NetworkSpec& spec, const Parameters& params, const Trajectory& data,
                        const RunConfig& c) {
  const double t0 = c.real("predict.t0");
  const auto row = data.time_index(t0);
  if (!row) {
    throw ConfigError("predict.t0 = " + format_double(t0) + " is not a grid point of the data (span " +
                      format_double(data.times.front()) + " .. " + format_double(data.times.back()) + ")");
  }
  const auto grid = c.prediction_grid();
  Trajectory pred = predict(spec, params, data.basis, data.state(*row), t0, grid, c.solver());
  stamp(pred.meta, c);
  return pred;
}

// Exact data up to (not including) the first prediction time, then the
// prediction.
Trajectory splice(const Trajectory& prefix, const Trajectory& pred) {
  const Trajectory head = select_columns(prefix, pred.basis);
  Trajectory out;
  out.basis = pred.basis;
  out.meta = pred.meta;
  std::vector<Eigen::Index> rows;
  for (std::size_t j = 0; j < head.times.size(); ++j) {
    if (head.times[j] < pred.times.front() - 1e-9) rows.push_back(static_cast<Eigen::Index>(j));
  }
  out.coeffs.resize(static_cast<Eigen::Index>(rows.size() + pred.times.size()), pred.coeffs.cols());
  Eigen::Index r = 0;
  for (auto j : rows) {
    out.times.push_back(head.times[static_cast<std::size_t>(j)]);
    out.coeffs.row(r++) = head.coeffs.row(j);
  }
  for (std::size_t j = 0; j < pred.times.size(); ++j) {
    out.times.push_back(pred.times[j]);
    out.coeffs.row(r++) = pred.coeffs.row(static_cast<Eigen::Index>(j));
  }
  out.meta.set("spliced_at", format_double(pred.times.front()));
  return out;
}

std::vector<double> relative_drift(const Trajectory& pred, const Trajectory& exact) {
  std::vector<double> d;
  for (std::size_t j = 0; j < pred.times.size(); ++j) {
    const auto e = exact.coeffs.row(static_cast<Eigen::Index>(j));
    const double den = e.norm();
    const double num = (pred.coeffs.row(static_cast<Eigen::Index>(j)) - e).norm();
    d.push_back(den > 0.0 ? num / den : num);
  }
  return d;
}

// Quick invariant checks; each returns an empty string on success.
std::vector<std::pair<std::string, std::function<std::string()>>> validation_suite() {
  std::vector<std::pair<std::string, std::function<std::string()>>> suite;
  suite.emplace_back("pauli_product_dense", [] {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 3);
      const std::uint64_t mask = (1ULL << n) - 1;
      PauliString a(n, rng() & mask, rng() & mask);
      PauliString b(n, rng() & mask, rng() & mask);
      const auto p = pauli_product(a, b);
      const ComplexMatrix lhs = to_matrix(a) * to_matrix(b);
      const ComplexMatrix rhs = p.phase.value() * to_matrix(p.string);
      if ((lhs - rhs).norm() > 1e-12) return a.label() + "*" + b.label() + " disagrees with matrices";
    }
    return std::string();
  });
  suite.emplace_back("symmetry_half", [] {
    const auto full = enumerate_full_basis(4);
    const auto kept = symmetry_filter(full, SymmetryOperator::bit_flip(4));
    return kept.size() * 2 == full.size() ? std::string() : "retained " + std::to_string(kept.size());
  });
  suite.emplace_back("measurement_protocol", [] {
    TfimSpec spec;
    spec.n_sites = 2;
    const TfimSystem sys(spec);
    const auto o = Observable::sum_x(2);
    const auto basis = enumerate_full_basis(2);
    for (double t : {0.3, 1.7}) {
      const auto c = pauli_coefficients(heisenberg_evolve(sys, o, t), basis);
      for (std::size_t i = 1; i < basis.size(); ++i) {
        const double m = measure_coefficient_via_state(sys, o, basis[i], t);
        if (std::abs(m - c[i]) > 1e-10) return basis.labels()[i] + " differs";
      }
    }
    return std::string();
  });
  suite.emplace_back("process_row", [] {
    TfimSpec spec;
    spec.n_sites = 2;
    const TfimSystem sys(spec);
    const auto o = Observable::sum_x(2);
    const auto basis = enumerate_full_basis(2);
    const double t = 0.9;
    const auto row = process_matrix_row(sys, o, basis, t);
    const auto c = pauli_coefficients(heisenberg_evolve(sys, o, t), basis);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::abs(row[i] - c[i]) > 1e-10) return basis.labels()[i] + " differs";
    }
    return std::string();
  });
  suite.emplace_back("solver_rotation", [] {
    SolverConfig s;
    s.rtol = 1e-8;
    s.atol = 1e-10;
    Field f = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(Eigen::Vector2d(-y(1), y(0))); };
    const auto sol = integrate(f, Eigen::Vector2d(1.0, 0.0), 0.0, 2.0 * std::acos(-1.0), s);
    const double err = (sol(sol.t_end()) - Eigen::Vector2d(1.0, 0.0)).norm();
    return err < 100 * s.rtol ? std::string() : "endpoint error " + format_double(err);
  });
  suite.emplace_back("gradient_fd", [] {
    NetworkSpec spec;
    spec.variant = Variant::kFanTime;
    spec.state_dim = 3;
    spec.hidden_width = 8;
    spec.partition = {2, 2, 4};
    spec.frequencies = {0.5, 1.5};
    const Parameters p = init_parameters(spec, 3);
    WindowBatch batch;
    batch.dt = 0.1;
    batch.t0 = {0.0, 0.4};
    batch.h0 = Eigen::MatrixXd::Random(3, 2);
    batch.targets = {Eigen::MatrixXd::Random(3, 2), Eigen::MatrixXd::Random(3, 2)};
    SolverConfig s;
    const auto r = evaluate_batch(spec, p, batch, s, {});
    BatchOptions fixed;
    fixed.fixed_schedule = &r.schedule;
    for (Eigen::Index k = 0; k < p.values.size(); k += 7) {
      Parameters q = p;
      const double h = 1e-5;
      q.values(k) += h;
      const double up = evaluate_batch(spec, q, batch, s, fixed, false).loss;
      q.values(k) -= 2 * h;
      const double down = evaluate_batch(spec, q, batch, s, fixed, false).loss;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - r.gradient(k)) / std::max(1e-6, std::abs(fd) + std::abs(r.gradient(k)));
      if (rel > 1e-4) return "coordinate " + std::to_string(k) + " relative error " + format_double(rel);
    }
    return std::string();
  });
  suite.emplace_back("parseval", [] {
    std::vector<double> t;
    ComplexSeries c;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int j = 0; j < 257; ++j) {
      t.push_back(0.05 * j);
      c.emplace_back(g(rng), g(rng));
    }
    const auto s = fft_spectrum(t, c);
    double lhs = 0.0, rhs = 0.0;
    for (const auto& v : c) lhs += std::norm(v) * 0.05;
    for (const auto& a : s.amplitude) rhs += std::norm(a) * s.resolution / (2.0 * std::acos(-1.0));
    return std::abs(lhs - rhs) <= 1e-9 * lhs ? std::string() : "mismatch " + format_double(lhs - rhs);
  });
  suite.emplace_back("peak_recall", [] {
    TfimSpec spec;
    const TfimSystem sys(spec);
    const auto o = Observable::sum_x(spec.n_sites);
    std::vector<double> grid;
    for (int j = 0; j < 2000; ++j) grid.push_back(0.1 * j);
    const auto peaks = find_peaks(fft_spectrum(grid, two_point_function(sys, o, grid)));
    const auto lines = exact_spectral_lines(sys, o);
    double total = 0.0;
    for (const auto& l : lines) total += l.weight;
    for (const auto& l : lines) {
      if (l.weight < 0.01 * total) continue;
      bool hit = false;
      for (const auto& p : peaks.peaks) hit = hit || std::abs(p.omega - l.frequency) <= 2.0 * std::acos(-1.0) / 200.0;
      if (!hit) return "line at " + format_double(l.frequency) + " not found";
    }
    return std::string();
  });
  return suite;
}

}  // namespace

int cmd_generate(const CommandArgs& args, std::ostream& log) {
  const auto& c = args.config;
  echo_config(c, log);
  const auto out = need(args.out, "--out");
  const TfimSpec spec = c.system();
  const Observable o = c.observable();
  const TruncationPolicy policy = c.truncation();
  const auto strings = o.strings();
  if (c.flag("basis.sweep")) {
    for (int r = 0; r <= spec.n_sites / 2; ++r) {
      TruncationPolicy p = policy;
      p.mode = TruncationMode::kWindow;
      p.window_radius = r;
      log << "radius " << r << ": " << truncated_basis(p, strings).size() << " strings (reference "
          << c.raw("basis.reference_count") << ")\n";
    }
  }
  const auto grid = c.data_grid();
  Trajectory traj = generate_trajectory(spec, o, policy, grid, resolve_threads(0));
  const std::size_t full = (std::size_t{1} << (2 * spec.n_sites)) - 1;
  log << "basis size " << traj.dim() << " of " << full << " non-identity strings, " << traj.num_times()
      << " time points\n";
  write_trajectory(out, traj);
  return 0;
}

int cmd_noise(const CommandArgs& args, std::ostream& log) {
  const auto& c = args.config;
  echo_config(c, log);
  const Trajectory traj = read_nonempty(need(args.in, "--in"));
  const NoiseModel model = c.noise();
  log << "noise gamma " << model.gamma() << " p " << model.depolarizing_p() << " sigma " << model.gaussian_sigma()
      << '\n';
  write_trajectory(need(args.out, "--out"), apply_noise(traj, model));
  return 0;
}

int cmd_train(const CommandArgs& args, std::ostream& log) {
  const auto& c = args.config;
  echo_config(c, log);
  const auto out = need(args.out, "--out");
  const Trajectory data = read_nonempty(need(args.in, "--in"));
  NetworkSpec spec = c.network(static_cast<int>(data.dim()));
  std::optional<TrainResult> start;
  if (const auto resume = c.optional("train.resume")) {
    const Checkpoint prev = read_checkpoint(std::filesystem::path(*resume));
    if (prev.basis.labels() != data.basis.labels()) throw ConfigError("resumed checkpoint has a different basis");
    spec = prev.spec;
    start = TrainResult{prev.params, prev.history, prev.best_epoch, prev.best_validation, false, ""};
    log << "resuming after epoch " << prev.history.size() << '\n';
  }
  const TrainResult r = fit(data, spec, c, log, start ? &*start : nullptr);
  write_checkpoint(out, to_checkpoint(spec, r, data.basis, c));
  write_history(std::filesystem::path(out.string() + ".history"), r.history);
  if (r.diverged) throw NumericalError("training diverged: " + r.message);
  return 0;
}

int cmd_predict(const CommandArgs& args, std::ostream& log) {
  const auto& c = args.config;
  echo_config(c, log);
  const Checkpoint ckp = read_checkpoint(need(args.in, "--in"));
  const auto data_path = c.optional("predict.data");
  if (!data_path) throw ConfigError("predict.data must name the trajectory supplying h(t0)");
  const Trajectory data = select_columns(read_nonempty(*data_path), ckp.basis);
  Trajectory pred = predict_from(ckp.spec, ckp.params, data, c);
  pred.meta.set("checkpoint.seed", std::to_string(ckp.seed));
  log << "predicted " << pred.num_times() << " points from t0 = " << c.raw("predict.t0") << '\n';
  write_trajectory(need(args.out, "--out"), pred);
  return 0;
}

int cmd_spectrum(const CommandArgs& args, std::ostream& log) {
  const auto& c = args.config;
  echo_config(c, log);
  const auto out = need(args.out, "--out");
  Trajectory traj = read_nonempty(need(args.in, "--in"));
  if (const auto prefix = c.optional("spectrum.prefix")) traj = splice(read_nonempty(*prefix), traj);
  const TfimSystem sys(c.system());
  const ComplexSeries series = assemble_two_point(traj, sys, c.observable());
  Spectrum s = fft_spectrum(traj.times, series, c.window());
  const double threshold = c.real("spectrum.threshold");
  const PeakList peaks = find_peaks(s, threshold);
  const bool low = is_low_resolution(s, c.real("spectrum.max_resolution"));
  s.meta.set("threshold_fraction", format_double(threshold));
  s.meta.set("low_resolution", low ? "1" : "0");
  write_spectrum(std::filesystem::path(out.string() + ".spec"), s);
  std::ofstream pk(out.string() + ".peaks");
  if (!pk) throw FormatError("cannot open " + out.string() + ".peaks");
  write_peaks(pk, peaks, s, low);
  log << peaks.peaks.size() << " peaks, resolution " << s.resolution << (low ? " (low resolution)" : "") << '\n';
  if (peaks.gap_estimate) log << "gap estimate omega = " << *peaks.gap_estimate << '\n';
  return 0;
}

int cmd_compare(const CommandArgs& args, std::ostream& log) {
  const auto& base = args.config;
  echo_config(base, log);
  const auto out = need(args.out, "--out");
  const Trajectory data = read_nonempty(need(args.in, "--in"));
  const auto variants = variants_of(base);
  const auto grid = base.prediction_grid();
  const TfimSystem sys(base.system());
  const Observable o = base.observable();
  // Exact reference on the data spacing from the data origin, so every
  // prediction time is one of its grid points.
  const auto exact_grid = uniform_grid(base.real("grid.t_start"), grid.back(), base.real("grid.dt"));
  const Trajectory exact =
      select_columns(generate_trajectory(base.system(), o, base.truncation(), exact_grid, resolve_threads(0)),
                     data.basis);

  std::vector<std::vector<double>> drift;
  std::vector<Spectrum> spectra;
  for (const auto& v : variants) {
    RunConfig c = base;
    c.set("network.variant", v);
    log << "== variant " << v << '\n';
    const NetworkSpec spec = c.network(static_cast<int>(data.dim()));
    const TrainResult r = fit(data, spec, c, log, nullptr);
    if (r.diverged) throw NumericalError("variant " + v + " diverged: " + r.message);
    const Trajectory pred = predict_from(spec, r.params, data, c);
    Trajectory ref;
    ref.basis = pred.basis;
    ref.times = pred.times;
    ref.coeffs.resize(pred.coeffs.rows(), pred.coeffs.cols());
    for (std::size_t j = 0; j < pred.times.size(); ++j) {
      const auto row = exact.time_index(pred.times[j]);
      if (!row) throw ConfigError("exact reference lacks t = " + format_double(pred.times[j]));
      ref.coeffs.row(static_cast<Eigen::Index>(j)) = exact.coeffs.row(static_cast<Eigen::Index>(*row));
    }
    drift.push_back(relative_drift(pred, ref));
    spectra.push_back(fft_spectrum(pred.times, assemble_two_point(pred, sys, o), base.window()));
    if (spectra.size() == 1) {
      spectra.insert(spectra.begin(), fft_spectrum(ref.times, assemble_two_point(ref, sys, o), base.window()));
    }
  }

  std::ofstream table(out);
  if (!table) throw FormatError("cannot open " + out.string() + " for writing");
  table << "opdyn-compare v1\n";
  table << "t0=" << base.raw("predict.t0") << "\nt_end=" << base.raw("predict.t_end") << '\n';
  for (std::size_t v = 0; v < variants.size(); ++v) {
    double acc = 0.0;
    for (double d : drift[v]) acc += d * d;
    table << "rms_drift." << variants[v] << '=' << format_double(std::sqrt(acc / static_cast<double>(drift[v].size())))
          << '\n';
  }
  table << 't';
  for (const auto& v : variants) table << ' ' << v;
  table << '\n';
  for (std::size_t j = 0; j < grid.size(); ++j) {
    table << format_double(grid[j]);
    for (const auto& d : drift) table << ' ' << format_double(d[j]);
    table << '\n';
  }

  std::ofstream spec_out(out.string() + ".spectra");
  if (!spec_out) throw FormatError("cannot open " + out.string() + ".spectra");
  spec_out << "opdyn-compare-spectra v1\n";
  const double threshold = base.real("spectrum.threshold");
  for (std::size_t v = 0; v < variants.size(); ++v) {
    spec_out << "[exact vs " << variants[v] << "]\n";
    write_comparison(spec_out, compare_spectra(spectra[0], spectra[v + 1], threshold));
  }
  log << "wrote drift table for " << variants.size() << " variants\n";
  return 0;
}

int cmd_validate(const CommandArgs& args, std::ostream& log) {
  echo_config(args.config, log);
  int failures = 0;
  if (args.in) {
    try {
      const Trajectory t = read_nonempty(*args.in);
      log << "PASS schema " << args.in->string() << " (" << t.num_times() << " rows, " << t.dim() << " columns)\n";
    } catch (const std::exception& e) {
      log << "FAIL schema " << args.in->string() << ": " << e.what() << '\n';
      return 1;
    }
  }
  for (const auto& [name, check] : validation_suite()) {
    std::string msg;
    try {
      msg = check();
    } catch (const std::exception& e) {
      msg = e.what();
    }
    if (msg.empty()) {
      log << "PASS " << name << '\n';
    } else {
      log << "FAIL " << name << ": " << msg << '\n';
      ++failures;
    }
  }
  return failures == 0 ? 0 : 2;
}

int run_command(const std::string& command, const CommandArgs& args, std::ostream& log) {
  static const std::map<std::string, int (*)(const CommandArgs&, std::ostream&)> table = {
      {"generate", cmd_generate}, {"noise", cmd_noise},     {"train", cmd_train},       {"predict", cmd_predict},
      {"spectrum", cmd_spectrum}, {"compare", cmd_compare}, {"validate", cmd_validate},
  };
  const auto it = table.find(command);
  try {
    if (it == table.end()) throw ConfigError("unknown command '" + command + "'");
    return it->second(args, log);
  } catch (const NumericalError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace opdyn::cli
