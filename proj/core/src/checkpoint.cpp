#include "opdyn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "opdyn/error.hpp"

namespace opdyn {
namespace {

constexpr char kMagic[8] = {'O', 'P', 'D', 'Y', 'N', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("checkpoint field " + key + " is not a number: '" + s + "'");
  }
}

int to_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw FormatError("checkpoint field " + key + " is not an integer: '" + s + "'");
  }
}

std::string header_text(const Checkpoint& c) {
  std::ostringstream h;
  const auto& s = c.spec;
  h << "spec.variant=" << to_string(s.variant) << '\n'
    << "spec.state_dim=" << s.state_dim << '\n'
    << "spec.append_time=" << (s.append_time ? 1 : 0) << '\n'
    << "spec.depth=" << s.depth << '\n'
    << "spec.hidden_width=" << s.hidden_width << '\n'
    << "spec.partition=" << s.partition.n_sin << ',' << s.partition.n_cos << ',' << s.partition.n_linear << '\n'
    << "spec.frequencies=" << join_doubles(s.frequencies) << '\n'
    << "spec.trainable_frequencies=" << (s.trainable_frequencies ? 1 : 0) << '\n';
  for (const auto& l : c.params.layout) {
    h << "layout." << l.name << '=' << l.rows << ',' << l.cols << ',' << l.offset << '\n';
  }
  h << "basis=";
  for (std::size_t i = 0; i < c.basis.size(); ++i) h << (i ? " " : "") << c.basis.labels()[i];
  h << '\n'
    << "train.seed=" << c.seed << '\n'
    << "train.epochs=" << c.history.size() << '\n'
    << "train.best_epoch=" << c.best_epoch << '\n'
    << "train.best_validation=" << format_double(c.best_validation) << '\n';
  for (const auto& [k, v] : c.meta.entries()) {
    if (v.find('\n') != std::string::npos) throw FormatError("metadata value for " + k + " contains a newline");
    h << "meta." << k << '=' << v << '\n';
  }
  return h.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckp) {
  ckp.params.validate();
  const std::string header = header_text(ckp);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(ckp.params.values.size()));
  for (Eigen::Index i = 0; i < ckp.params.values.size(); ++i) put<double>(out, ckp.params.values(i));
  put<std::uint64_t>(out, ckp.history.size());
  for (const auto& r : ckp.history) {
    put<std::int64_t>(out, r.epoch);
    put<double>(out, r.train_loss);
    put<double>(out, r.validation_loss);
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckp);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not an opdyn checkpoint");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(in, "header length");
  if (header_len > (1ULL << 30)) throw FormatError("implausible checkpoint header length");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("checkpoint truncated in header");

  Checkpoint c;
  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, std::array<int, 3>>> layout;
  for (const auto& line : split(header, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad checkpoint header line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.rfind("meta.", 0) == 0) {
      c.meta.set(key.substr(5), value);
    } else if (key.rfind("layout.", 0) == 0) {
      const auto parts = split(value, ',');
      if (parts.size() != 3) throw FormatError("bad layout entry " + key);
      layout.push_back({key.substr(7), {to_int(parts[0], key), to_int(parts[1], key), to_int(parts[2], key)}});
    } else {
      fields[key] = value;
    }
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("checkpoint header lacks " + key);
    return it->second;
  };
  auto& s = c.spec;
  s.variant = parse_variant(need("spec.variant"));
  s.state_dim = to_int(need("spec.state_dim"), "spec.state_dim");
  s.append_time = to_int(need("spec.append_time"), "spec.append_time") != 0;
  s.depth = to_int(need("spec.depth"), "spec.depth");
  s.hidden_width = to_int(need("spec.hidden_width"), "spec.hidden_width");
  const auto part = split(need("spec.partition"), ',');
  if (part.size() != 3) throw FormatError("bad spec.partition");
  s.partition = {to_int(part[0], "partition"), to_int(part[1], "partition"), to_int(part[2], "partition")};
  s.frequencies.clear();
  for (const auto& f : split(need("spec.frequencies"), ',')) {
    if (!f.empty()) s.frequencies.push_back(to_double(f, "spec.frequencies"));
  }
  s.trainable_frequencies = to_int(need("spec.trainable_frequencies"), "spec.trainable_frequencies") != 0;
  std::vector<PauliString> strings;
  for (const auto& label : split(need("basis"), ' ')) {
    if (!label.empty()) strings.push_back(PauliString::from_label(label));
  }
  c.basis = PauliBasis(std::move(strings));
  c.seed = std::stoull(need("train.seed"));
  c.best_epoch = to_int(need("train.best_epoch"), "train.best_epoch");
  c.best_validation = to_double(need("train.best_validation"), "train.best_validation");

  c.params = make_parameters(s);
  if (layout.size() != c.params.layout.size()) throw FormatError("checkpoint layout does not match its spec");
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& want = c.params.layout[k];
    const auto& [name, dims] = layout[k];
    if (name != want.name || dims[0] != want.rows || dims[1] != want.cols ||
        static_cast<std::size_t>(dims[2]) != want.offset) {
      throw FormatError("checkpoint layout entry " + name + " does not match its spec");
    }
  }
  const auto n = get<std::uint64_t>(in, "parameter count");
  if (n != static_cast<std::uint64_t>(c.params.values.size())) {
    throw FormatError("checkpoint has " + std::to_string(n) + " parameters, layout needs " +
                      std::to_string(c.params.values.size()));
  }
  for (Eigen::Index i = 0; i < c.params.values.size(); ++i) c.params.values(i) = get<double>(in, "parameters");
  const auto n_hist = get<std::uint64_t>(in, "history length");
  if (n_hist > (1ULL << 32)) throw FormatError("implausible history length");
  for (std::uint64_t i = 0; i < n_hist; ++i) {
    EpochRecord r;
    r.epoch = static_cast<int>(get<std::int64_t>(in, "history"));
    r.train_loss = get<double>(in, "history");
    r.validation_loss = get<double>(in, "history");
    c.history.push_back(r);
  }
  if (static_cast<std::uint64_t>(to_int(need("train.epochs"), "train.epochs")) != n_hist) {
    throw FormatError("checkpoint history length disagrees with header");
  }
  if (static_cast<int>(c.basis.size()) != s.state_dim) throw FormatError("checkpoint basis size disagrees with spec");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  c.params.validate();
  return c;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace opdyn
