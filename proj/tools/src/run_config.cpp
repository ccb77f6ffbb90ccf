#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "opdyn/error.hpp"

namespace opdyn::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"system.n_sites", "3"},
      {"system.coupling", "1"},
      {"system.field", "1"},
      {"system.sign", "main_text"},
      {"system.boundary", "periodic"},
      {"observable.expr", "sum_x"},
      {"basis.mode", "full"},
      {"basis.radius", "1"},
      {"basis.symmetry", "false"},
      {"basis.velocity", ""},
      {"basis.sweep", "false"},
      {"basis.reference_count", "52"},
      {"grid.t_start", "0"},
      {"grid.t_end", "5"},
      {"grid.dt", "0.1"},
      {"noise.p", "0"},
      {"noise.gamma", "0"},
      {"noise.dt", "0.1"},
      {"noise.sigma", "0"},
      {"noise.scale", "absolute"},
      {"noise.seed", "1"},
      {"network.variant", "fan"},
      {"network.depth", "3"},
      {"network.width", "128"},
      {"network.partition", "32,32,64"},
      {"network.freq_min", "0.1"},
      {"network.freq_max", "1000"},
      {"network.freq_count", "16"},
      {"network.trainable_frequencies", "false"},
      {"network.append_time", "false"},
      {"train.batch_size", "64"},
      {"train.window_steps", "10"},
      {"train.learning_rate", "1e-3"},
      {"train.final_lr_fraction", "1"},
      {"train.max_epochs", "1000"},
      {"train.patience", "100"},
      {"train.validation_fraction", "0.2"},
      {"train.seed", "0"},
      {"train.t_max", "5"},
      {"train.grad_clip", "0"},
      {"train.chunk_size", "16"},
      {"train.log_every", "100"},
      {"train.resume", ""},
      {"solver.rtol", "1e-6"},
      {"solver.atol", "1e-8"},
      {"solver.initial_step", "0.01"},
      {"solver.max_step", "inf"},
      {"solver.max_steps", "100000"},
      {"predict.data", ""},
      {"predict.t0", "5"},
      {"predict.t_end", "20"},
      {"predict.dt", "0.1"},
      {"spectrum.window", "rectangular"},
      {"spectrum.threshold", "0.05"},
      {"spectrum.max_resolution", "0.1"},
      {"spectrum.prefix", ""},
      {"compare.variants", "fcn,fan"},
  };
  return table;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c;
  c.merge_text(buf.str(), path.string());
  return c;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const auto& v = raw(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " = '" + v + "' is not a number");
}

long RunConfig::integer(const std::string& key) const {
  const auto& v = raw(key);
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " = '" + v + "' is not an integer");
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = raw(key);
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(key + " = '" + v + "' is not a boolean");
}

std::optional<std::string> RunConfig::optional(const std::string& key) const {
  const auto& v = raw(key);
  if (v.empty()) return std::nullopt;
  return v;
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

TfimSpec RunConfig::system() const {
  TfimSpec s;
  s.n_sites = static_cast<int>(integer("system.n_sites"));
  s.coupling = real("system.coupling");
  s.field = real("system.field");
  s.sign_convention = parse_sign_convention(str("system.sign"));
  s.boundary = parse_boundary(str("system.boundary"));
  if (s.n_sites < 1) throw ConfigError("system.n_sites must be positive");
  return s;
}

Observable RunConfig::observable() const {
  return Observable::parse(str("observable.expr"), static_cast<int>(integer("system.n_sites")));
}

TruncationPolicy RunConfig::truncation() const {
  TruncationPolicy p;
  const auto mode = str("basis.mode");
  if (mode == "full") {
    p.mode = TruncationMode::kFull;
  } else if (mode == "window") {
    p.mode = TruncationMode::kWindow;
  } else {
    throw ConfigError("basis.mode must be full or window, got '" + mode + "'");
  }
  p.window_radius = static_cast<int>(integer("basis.radius"));
  if (p.window_radius < 0) throw ConfigError("basis.radius must be nonnegative");
  if (optional("basis.velocity")) p.velocity = real("basis.velocity");
  p.symmetry_filter = flag("basis.symmetry");
  p.periodic = system().boundary == Boundary::kPeriodic;
  return p;
}

std::vector<double> uniform_grid(double start, double end, double step) {
  if (!(step > 0.0)) throw ConfigError("grid step must be positive");
  if (end < start) throw ConfigError("grid end precedes start");
  const auto n = static_cast<long>(std::floor((end - start) / step + 1e-9));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(n + 1));
  for (long j = 0; j <= n; ++j) g.push_back(start + static_cast<double>(j) * step);
  return g;
}

std::vector<double> RunConfig::data_grid() const {
  return uniform_grid(real("grid.t_start"), real("grid.t_end"), real("grid.dt"));
}

NoiseModel RunConfig::noise() const {
  const double p = real("noise.p");
  const double gamma = real("noise.gamma");
  if (p != 0.0 && gamma != 0.0) throw ConfigError("set noise.p or noise.gamma, not both");
  const double layer_dt = real("noise.dt");
  const double prob = gamma != 0.0 ? p_from_gamma(gamma, layer_dt) : p;
  return NoiseModel(prob, layer_dt, real("noise.sigma"), static_cast<std::uint64_t>(integer("noise.seed")),
                    parse_noise_scale(str("noise.scale")));
}

NetworkSpec RunConfig::network(int state_dim) const {
  NetworkSpec s;
  s.variant = parse_variant(str("network.variant"));
  s.state_dim = state_dim;
  s.depth = static_cast<int>(integer("network.depth"));
  s.hidden_width = static_cast<int>(integer("network.width"));
  const auto part = split_list(str("network.partition"));
  if (part.size() != 3) throw ConfigError("network.partition needs three comma-separated sizes");
  try {
    s.partition = {std::stoi(part[0]), std::stoi(part[1]), std::stoi(part[2])};
  } catch (const std::exception&) {
    throw ConfigError("network.partition entries must be integers");
  }
  s.frequencies = NetworkSpec::log_spaced(real("network.freq_min"), real("network.freq_max"),
                                          static_cast<int>(integer("network.freq_count")));
  s.trainable_frequencies = flag("network.trainable_frequencies");
  s.append_time = flag("network.append_time");
  s.validate();
  return s;
}

TrainConfig RunConfig::training() const {
  TrainConfig t;
  t.batch_size = static_cast<int>(integer("train.batch_size"));
  t.window_steps = static_cast<int>(integer("train.window_steps"));
  t.learning_rate = real("train.learning_rate");
  t.final_lr_fraction = real("train.final_lr_fraction");
  t.max_epochs = static_cast<int>(integer("train.max_epochs"));
  t.patience = static_cast<int>(integer("train.patience"));
  t.validation_fraction = real("train.validation_fraction");
  t.seed = static_cast<std::uint64_t>(integer("train.seed"));
  t.t_max = real("train.t_max");
  t.grad_clip = real("train.grad_clip");
  t.chunk_size = static_cast<int>(integer("train.chunk_size"));
  t.log_every = static_cast<int>(integer("train.log_every"));
  t.validate();
  return t;
}

SolverConfig RunConfig::solver() const {
  SolverConfig s;
  s.rtol = real("solver.rtol");
  s.atol = real("solver.atol");
  s.initial_step = real("solver.initial_step");
  s.max_step = real("solver.max_step");
  s.max_steps = integer("solver.max_steps");
  s.validate();
  return s;
}

std::vector<double> RunConfig::prediction_grid() const {
  return uniform_grid(real("predict.t0"), real("predict.t_end"), real("predict.dt"));
}

Window RunConfig::window() const { return parse_window(str("spectrum.window")); }

}  // namespace opdyn::cli
