#include "opdyn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "opdyn/error.hpp"

namespace opdyn {
namespace {

using Eigen::MatrixXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using GradMap = Eigen::Map<MatrixXd>;

std::string idx_name(const char* prefix, int l) {
  return prefix + std::to_string(l);
}

// Builds the layout in a single place so make/init/forward agree.
std::vector<LayerSlice> build_layout(const NetworkSpec& spec) {
  std::vector<LayerSlice> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    layout.push_back({std::move(name), rows, cols, offset});
    offset += layout.back().size();
  };
  const int w = spec.hidden_width;
  const int lin = spec.partition.n_linear;
  add("W0", w, spec.input_dim());
  add("b0", w, 1);
  if (spec.variant == Variant::kFcn) {
    for (int l = 1; l < spec.depth; ++l) {
      add(idx_name("W", l), w, w);
      add(idx_name("b", l), w, 1);
    }
  } else {
    const int last = spec.depth - 1;
    for (int l = 1; l < last; ++l) {
      if (spec.variant == Variant::kFan) {
        add(idx_name("W", l), lin, lin);
        add(idx_name("b", l), lin, 1);
      } else {
        add(idx_name("B", l), lin, lin);
        add(idx_name("c", l), lin, 1);
        add(idx_name("A", l), w, w);
        add(idx_name("a", l), w, 1);
      }
    }
    add(idx_name("W", last), w, w);
    add(idx_name("b", last), w, 1);
  }
  add("Wout", spec.state_dim, w);
  add("bout", spec.state_dim, 1);
  if (spec.variant != Variant::kFcn && spec.trainable_frequencies) {
    add("omega", static_cast<int>(spec.frequencies.size()), 1);
  }
  return layout;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFcn: return "fcn";
    case Variant::kFan: return "fan";
    default: return "fan_time";
  }
}

Variant parse_variant(const std::string& s) {
  if (s == "fcn") return Variant::kFcn;
  if (s == "fan") return Variant::kFan;
  if (s == "fan_time") return Variant::kFanTime;
  throw ConfigError("unknown network variant '" + s + "'");
}

int NetworkSpec::num_periodic_layers() const {
  return variant == Variant::kFcn ? 0 : std::max(0, depth - 2);
}

void NetworkSpec::validate() const {
  if (state_dim < 1) throw ConfigError("state dimension must be positive");
  if (depth < 1) throw ConfigError("network depth must be positive");
  if (hidden_width < 1) throw ConfigError("hidden width must be positive");
  if (variant == Variant::kFcn) return;
  if (depth < 2) throw ConfigError("periodic variants need depth >= 2");
  const auto& p = partition;
  if (p.n_sin < 0 || p.n_cos < 0 || p.n_linear < 0) {
    throw ConfigError("negative block size in fan partition");
  }
  if (p.n_sin + p.n_cos + p.n_linear != hidden_width) {
    throw ConfigError("fan partition " + std::to_string(p.n_sin) + "+" +
                      std::to_string(p.n_cos) + "+" + std::to_string(p.n_linear) +
                      " does not match hidden width " + std::to_string(hidden_width));
  }
  if ((p.n_sin + p.n_cos) > 0 && frequencies.empty()) {
    throw ConfigError("periodic blocks need at least one frequency");
  }
  if (variant == Variant::kFanTime && frequencies.empty()) {
    throw ConfigError("fan_time requires frequencies");
  }
  for (double w : frequencies) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ConfigError("frequencies must be positive");
    }
  }
}

std::vector<double> NetworkSpec::log_spaced(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) {
    throw ConfigError("bad log-spaced frequency range");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int k = 0; k < count; ++k) {
    out[static_cast<std::size_t>(k)] = std::pow(10.0, a + (b - a) * k / (count - 1));
  }
  return out;
}

const LayerSlice& Parameters::slice(const std::string& name) const {
  for (const auto& s : layout) {
    if (s.name == name) return s;
  }
  throw ConfigError("no parameter block named " + name);
}

std::optional<std::size_t> Parameters::find(const std::string& name) const {
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (layout[k].name == name) return k;
  }
  return std::nullopt;
}

void Parameters::validate() const {
  std::size_t expect = 0;
  for (const auto& s : layout) {
    if (s.offset != expect) throw FormatError("parameter layout has a gap at " + s.name);
    expect += s.size();
  }
  if (expect != static_cast<std::size_t>(values.size())) {
    throw FormatError("parameter layout does not cover the vector");
  }
  if (!values.allFinite()) throw NumericalError("non-finite parameter");
}

Parameters make_parameters(const NetworkSpec& spec) {
  spec.validate();
  Parameters p;
  p.layout = build_layout(spec);
  std::size_t total = 0;
  for (const auto& s : p.layout) total += s.size();
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  if (auto k = p.find("omega")) {
    const auto& s = p.layout[*k];
    for (std::size_t j = 0; j < spec.frequencies.size(); ++j) {
      p.values(static_cast<Eigen::Index>(s.offset + j)) = spec.frequencies[j];
    }
  }
  return p;
}

Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  Parameters p = make_parameters(spec);
  std::mt19937_64 rng(seed);
  auto block = [&](const std::string& name) {
    const auto& s = p.slice(name);
    return Eigen::Map<MatrixXd>(p.values.data() + s.offset, s.rows, s.cols);
  };
  for (const auto& s : p.layout) {
    if (s.name == "omega") continue;
    // Biases share the bound of their weight matrix.
    std::string weight = s.name;
    if (s.name == "bout") {
      weight = "Wout";
    } else if (s.name[0] == 'b') {
      weight = "W" + s.name.substr(1);
    } else if (s.name[0] == 'c') {
      weight = "B" + s.name.substr(1);
    } else if (s.name[0] == 'a') {
      weight = "A" + s.name.substr(1);
    }
    const int fan_in = p.slice(weight).cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < s.size(); ++k) {
      p.values(static_cast<Eigen::Index>(s.offset + k)) = u(rng);
    }
  }
  if (spec.variant == Variant::kFan && spec.num_periodic_layers() > 0) {
    const int ns = spec.partition.n_sin;
    const int nc = spec.partition.n_cos;
    const auto& freq = spec.frequencies;
    auto w0 = block("W0");
    auto b0 = block("b0");
    for (int j = 0; j < ns + nc; ++j) {
      const int unit = j < ns ? j : j - ns;
      const double omega = freq[static_cast<std::size_t>(unit) % freq.size()];
      w0.row(j) /= omega;
      b0(j, 0) /= omega;
    }
    auto next = block(idx_name("W", spec.depth - 1));
    next.leftCols(ns + nc) *= 0.1;
  }
  return p;
}

VectorField::VectorField(const NetworkSpec& spec, const Parameters& params)
    : spec_(spec), params_(params) {
  spec_.validate();
  const auto expected = build_layout(spec_);
  if (expected.size() != params_.layout.size()) {
    throw ConfigError("parameter layout does not match network spec");
  }
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const auto& a = expected[k];
    const auto& b = params_.layout[k];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset) {
      throw ConfigError("parameter layout does not match network spec at " + a.name);
    }
  }
}

namespace {

struct Blocks {
  const Parameters& p;
  ConstMap mat(const std::string& name) const {
    const auto& s = p.slice(name);
    return ConstMap(p.values.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Eigen::VectorXd> vec(const std::string& name) const {
    const auto& s = p.slice(name);
    return Eigen::Map<const Eigen::VectorXd>(p.values.data() + s.offset, s.rows);
  }
};

struct GradBlocks {
  const Parameters& p;
  Eigen::Ref<Eigen::VectorXd> g;
  GradMap mat(const std::string& name) {
    const auto& s = p.slice(name);
    return GradMap(g.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<Eigen::VectorXd> vec(const std::string& name) {
    const auto& s = p.slice(name);
    return Eigen::Map<Eigen::VectorXd>(g.data() + s.offset, s.rows);
  }
};

double unit_frequency(const NetworkSpec& spec, const Parameters& p, int unit) {
  const std::size_t k = static_cast<std::size_t>(unit) % spec.frequencies.size();
  if (auto idx = p.find("omega")) {
    return p.values(static_cast<Eigen::Index>(p.layout[*idx].offset + k));
  }
  return spec.frequencies[k];
}

void affine_tanh(const ConstMap& w, const Eigen::Map<const Eigen::VectorXd>& b,
                 const MatrixXd& in, MatrixXd& out) {
  out.noalias() = w * in;
  out.colwise() += b;
  out = out.array().tanh();
}

}  // namespace

void VectorField::forward(std::span<const double> t, const MatrixXd& h, MatrixXd& out,
                          ForwardCache* cache) const {
  const auto batch = h.cols();
  if (h.rows() != spec_.state_dim) {
    throw ConfigError("state has " + std::to_string(h.rows()) + " entries, network expects " +
                      std::to_string(spec_.state_dim));
  }
  if (static_cast<Eigen::Index>(t.size()) != batch) {
    throw ConfigError("need one time per batch column");
  }
  Blocks blk{params_};
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.values.clear();
  c.times.assign(t.begin(), t.end());

  MatrixXd x(spec_.input_dim(), batch);
  x.topRows(spec_.state_dim) = h;
  if (spec_.append_time) {
    for (Eigen::Index b = 0; b < batch; ++b) x(spec_.state_dim, b) = t[static_cast<std::size_t>(b)];
  }
  c.values.push_back(std::move(x));

  MatrixXd a;
  affine_tanh(blk.mat("W0"), blk.vec("b0"), c.values.back(), a);
  c.values.push_back(std::move(a));

  const int ns = spec_.partition.n_sin;
  const int nc = spec_.partition.n_cos;
  const int nl = spec_.partition.n_linear;
  const int w = spec_.hidden_width;

  auto probe = [&](double v) {
    if (!probe_) return;
    probe_->lo = std::min(probe_->lo, v);
    probe_->hi = std::max(probe_->hi, v);
  };

  if (spec_.variant == Variant::kFcn) {
    for (int l = 1; l < spec_.depth; ++l) {
      MatrixXd next;
      affine_tanh(blk.mat(idx_name("W", l)), blk.vec(idx_name("b", l)), c.values.back(), next);
      c.values.push_back(std::move(next));
    }
  } else {
    const int last = spec_.depth - 1;
    for (int l = 1; l < last; ++l) {
      const MatrixXd& u = c.values.back();
      MatrixXd mixed(w, batch);
      if (spec_.variant == Variant::kFan) {
        for (int j = 0; j < ns; ++j) {
          const double om = unit_frequency(spec_, params_, j);
          mixed.row(j) = (om * u.row(j)).array().sin();
        }
        for (int j = 0; j < nc; ++j) {
          const double om = unit_frequency(spec_, params_, j);
          mixed.row(ns + j) = (om * u.row(ns + j)).array().cos();
        }
      } else {
        for (Eigen::Index b = 0; b < batch; ++b) {
          const double tb = t[static_cast<std::size_t>(b)];
          for (int j = 0; j < ns; ++j) {
            mixed(j, b) = u(j, b) * std::sin(unit_frequency(spec_, params_, j) * tb);
          }
          for (int j = 0; j < nc; ++j) {
            mixed(ns + j, b) = u(ns + j, b) * std::cos(unit_frequency(spec_, params_, j) * tb);
          }
        }
      }
      if (probe_) {
        if (spec_.variant == Variant::kFan) {
          for (Eigen::Index b = 0; b < batch; ++b) {
            for (int j = 0; j < ns + nc; ++j) probe(mixed(j, b));
          }
        } else {
          for (Eigen::Index b = 0; b < batch; ++b) {
            for (int j = 0; j < ns; ++j) probe(std::sin(unit_frequency(spec_, params_, j) * t[static_cast<std::size_t>(b)]));
            for (int j = 0; j < nc; ++j) probe(std::cos(unit_frequency(spec_, params_, j) * t[static_cast<std::size_t>(b)]));
          }
        }
      }
      const std::string lin_w = spec_.variant == Variant::kFan ? idx_name("W", l) : idx_name("B", l);
      const std::string lin_b = spec_.variant == Variant::kFan ? idx_name("b", l) : idx_name("c", l);
      if (nl > 0) {
        mixed.bottomRows(nl).noalias() = blk.mat(lin_w) * u.bottomRows(nl);
        mixed.bottomRows(nl).colwise() += blk.vec(lin_b);
      }
      if (spec_.variant == Variant::kFanTime) {
        MatrixXd p;
        affine_tanh(blk.mat(idx_name("A", l)), blk.vec(idx_name("a", l)), mixed, p);
        c.values.push_back(std::move(mixed));
        c.values.push_back(std::move(p));
      } else {
        c.values.push_back(std::move(mixed));
      }
    }
    MatrixXd top;
    affine_tanh(blk.mat(idx_name("W", last)), blk.vec(idx_name("b", last)), c.values.back(), top);
    c.values.push_back(std::move(top));
  }

  out.noalias() = blk.mat("Wout") * c.values.back();
  out.colwise() += blk.vec("bout");
  if (!out.allFinite()) throw NumericalError("network produced a non-finite derivative");
}

void VectorField::backward(const ForwardCache& cache, const MatrixXd& grad_out, MatrixXd& grad_h,
                           Eigen::Ref<Eigen::VectorXd> grad_params) const {
  Blocks blk{params_};
  GradBlocks gb{params_, grad_params};
  const auto& v = cache.values;
  const auto batch = grad_out.cols();
  const int ns = spec_.partition.n_sin;
  const int nc = spec_.partition.n_cos;
  const int nl = spec_.partition.n_linear;

  std::size_t pos = v.size() - 1;
  gb.mat("Wout").noalias() += grad_out * v[pos].transpose();
  gb.vec("bout") += grad_out.rowwise().sum();
  MatrixXd g = blk.mat("Wout").transpose() * grad_out;

  // Backprop through tanh(W in + b) whose output is v[pos] and input v[pos-1].
  auto tanh_layer = [&](const std::string& wn, const std::string& bn) {
    MatrixXd gz = g.array() * (1.0 - v[pos].array().square());
    gb.mat(wn).noalias() += gz * v[pos - 1].transpose();
    gb.vec(bn) += gz.rowwise().sum();
    g.noalias() = blk.mat(wn).transpose() * gz;
    --pos;
  };

  if (spec_.variant == Variant::kFcn) {
    for (int l = spec_.depth - 1; l >= 1; --l) tanh_layer(idx_name("W", l), idx_name("b", l));
  } else {
    const int last = spec_.depth - 1;
    tanh_layer(idx_name("W", last), idx_name("b", last));
    std::optional<Eigen::Map<Eigen::VectorXd>> gomega;
    if (auto idx = params_.find("omega")) {
      const auto& s = params_.layout[*idx];
      gomega.emplace(grad_params.data() + s.offset, s.rows);
    }
    for (int l = last - 1; l >= 1; --l) {
      if (spec_.variant == Variant::kFanTime) {
        // v[pos] = tanh(A mixed + a), v[pos-1] = mixed.
        tanh_layer(idx_name("A", l), idx_name("a", l));
      }
      // g is now dL/d(mixed); v[pos] = mixed, v[pos-1] = u.
      const MatrixXd& u = v[pos - 1];
      MatrixXd gu(u.rows(), batch);
      if (spec_.variant == Variant::kFan) {
        for (int j = 0; j < ns; ++j) {
          const double om = unit_frequency(spec_, params_, j);
          auto arg = (om * u.row(j)).array();
          gu.row(j) = g.row(j).array() * om * arg.cos();
          if (gomega) (*gomega)(j % gomega->size()) += (g.row(j).array() * u.row(j).array() * arg.cos()).sum();
        }
        for (int j = 0; j < nc; ++j) {
          const double om = unit_frequency(spec_, params_, j);
          auto arg = (om * u.row(ns + j)).array();
          gu.row(ns + j) = -g.row(ns + j).array() * om * arg.sin();
          if (gomega) (*gomega)(j % gomega->size()) -= (g.row(ns + j).array() * u.row(ns + j).array() * arg.sin()).sum();
        }
      } else {
        const auto& t = cache.times;
        for (Eigen::Index b = 0; b < batch; ++b) {
          const double tb = t[static_cast<std::size_t>(b)];
          for (int j = 0; j < ns; ++j) {
            const double om = unit_frequency(spec_, params_, j);
            gu(j, b) = g(j, b) * std::sin(om * tb);
            if (gomega) (*gomega)(j % gomega->size()) += g(j, b) * u(j, b) * tb * std::cos(om * tb);
          }
          for (int j = 0; j < nc; ++j) {
            const double om = unit_frequency(spec_, params_, j);
            gu(ns + j, b) = g(ns + j, b) * std::cos(om * tb);
            if (gomega) (*gomega)(j % gomega->size()) -= g(ns + j, b) * u(ns + j, b) * tb * std::sin(om * tb);
          }
        }
      }
      if (nl > 0) {
        const std::string lin_w = spec_.variant == Variant::kFan ? idx_name("W", l) : idx_name("B", l);
        const std::string lin_b = spec_.variant == Variant::kFan ? idx_name("b", l) : idx_name("c", l);
        gb.mat(lin_w).noalias() += g.bottomRows(nl) * u.bottomRows(nl).transpose();
        gb.vec(lin_b) += g.bottomRows(nl).rowwise().sum();
        gu.bottomRows(nl).noalias() = blk.mat(lin_w).transpose() * g.bottomRows(nl);
      }
      g = std::move(gu);
      --pos;
    }
  }
  // First layer: v[1] = tanh(W0 x + b0), v[0] = x.
  tanh_layer("W0", "b0");
  grad_h = g.topRows(spec_.state_dim);
}

namespace {

Eigen::VectorXd single_forward(const NetworkSpec& spec, const Parameters& params,
                               const Eigen::VectorXd& h, double t) {
  VectorField f(spec, params);
  MatrixXd out;
  const double times[1] = {t};
  f.forward(times, h, out);
  return out.col(0);
}

void check_input(const NetworkSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.input_dim()) {
    throw ConfigError("input has " + std::to_string(x.size()) + " entries, network expects " +
                      std::to_string(spec.input_dim()));
  }
}

}  // namespace

Eigen::VectorXd forward_fcn(const NetworkSpec& spec, const Parameters& params,
                            const Eigen::VectorXd& x) {
  if (spec.variant != Variant::kFcn) throw ConfigError("forward_fcn needs an fcn spec");
  check_input(spec, x);
  const double t = spec.append_time ? x(spec.state_dim) : 0.0;
  return single_forward(spec, params, x.head(spec.state_dim), t);
}

Eigen::VectorXd forward_fan(const NetworkSpec& spec, const Parameters& params,
                            const Eigen::VectorXd& x) {
  if (spec.variant != Variant::kFan) throw ConfigError("forward_fan needs a fan spec");
  check_input(spec, x);
  const double t = spec.append_time ? x(spec.state_dim) : 0.0;
  return single_forward(spec, params, x.head(spec.state_dim), t);
}

Eigen::VectorXd forward_fan_time(const NetworkSpec& spec, const Parameters& params,
                                 const Eigen::VectorXd& h, double t) {
  if (spec.variant != Variant::kFanTime) {
    throw ConfigError("forward_fan_time needs a fan_time spec");
  }
  if (!std::isfinite(t)) throw ConfigError("time must be finite");
  if (h.size() != spec.state_dim) throw ConfigError("state size mismatch");
  return single_forward(spec, params, h, t);
}

}  // namespace opdyn
