#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opdyn {

// fcn:      W_out tanh(... tanh(W_0 x + b_0) ...) + b_out
// fan:      periodic layers [sin(w u_s); cos(w u_c); W u_lin + b] between a
//           leading and a trailing tanh layer
// fan_time: periodic layers tanh(A [u_s sin(w t); u_c cos(w t); B u_lin + c] + a)
enum class Variant { kFcn, kFan, kFanTime };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct FanPartition {
  int n_sin = 32;
  int n_cos = 32;
  int n_linear = 64;
};

struct NetworkSpec {
  Variant variant = Variant::kFan;
  int state_dim = 1;
  // Feed t as an extra input coordinate (x = (h, t)).
  bool append_time = false;
  // Number of hidden layers. Periodic variants use depth - 2 periodic layers.
  int depth = 3;
  int hidden_width = 128;
  FanPartition partition;
  // Sin unit j and cos unit j both use frequencies[j % size].
  std::vector<double> frequencies = log_spaced(0.1, 1000.0, 16);
  bool trainable_frequencies = false;

  int input_dim() const { return state_dim + (append_time ? 1 : 0); }
  int num_periodic_layers() const;
  // Throws ConfigError on inconsistent fields.
  void validate() const;

  static std::vector<double> log_spaced(double lo, double hi, int count);
};

// Location of one weight matrix or bias vector inside the flat vector.
// Matrices are stored column-major.
struct LayerSlice {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct Parameters {
  Eigen::VectorXd values;
  std::vector<LayerSlice> layout;

  const LayerSlice& slice(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  // Layout covers the vector exactly once and all entries are finite.
  void validate() const;
};

// Zero-valued parameters with the layout required by `spec`.
Parameters make_parameters(const NetworkSpec& spec);
// Uniform(+-1/sqrt(fan_in)) weights and biases from a seeded generator. For
// the fan variant the rows feeding sin/cos units are divided by their
// frequency and the weights reading periodic outputs are shrunk, so the
// initial field varies on the scale of the data rather than of 1/omega.
Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed);

// Activations kept by a forward pass for the matching backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> values;
  std::vector<double> times;
};

// Batched evaluator of f_theta. Columns of `h` are independent states; `t`
// holds one time per column.
class VectorField {
 public:
  VectorField(const NetworkSpec& spec, const Parameters& params);

  const NetworkSpec& spec() const { return spec_; }
  const Parameters& params() const { return params_; }

  void forward(std::span<const double> t, const Eigen::MatrixXd& h,
               Eigen::MatrixXd& out, ForwardCache* cache = nullptr) const;
  // Given dL/d(out), adds dL/d(theta) into grad_params and writes dL/dh.
  void backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                Eigen::MatrixXd& grad_h, Eigen::Ref<Eigen::VectorXd> grad_params) const;

  // Records min/max of every sin/cos feature seen by forward() when set.
  struct FeatureRange {
    double lo = 0.0;
    double hi = 0.0;
  };
  void set_feature_probe(FeatureRange* probe) { probe_ = probe; }

 private:
  const NetworkSpec& spec_;
  const Parameters& params_;
  FeatureRange* probe_ = nullptr;
};

// Single-state conveniences; each checks the variant and input size.
Eigen::VectorXd forward_fcn(const NetworkSpec& spec, const Parameters& params,
                            const Eigen::VectorXd& x);
Eigen::VectorXd forward_fan(const NetworkSpec& spec, const Parameters& params,
                            const Eigen::VectorXd& x);
Eigen::VectorXd forward_fan_time(const NetworkSpec& spec, const Parameters& params,
                                 const Eigen::VectorXd& h, double t);

}  // namespace opdyn
