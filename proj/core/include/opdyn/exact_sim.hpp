#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opdyn/pauli.hpp"
#include "opdyn/trajectory.hpp"

namespace opdyn {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexSeries = std::vector<std::complex<double>>;

inline constexpr int kDefaultOracleLimit = 8;

// main_text: H = -x sum Z_i Z_{i+1} - h sum X_i
// appendix:  H = +x sum Z_i Z_{i+1} + h sum X_i
enum class SignConvention { kMainText, kAppendix };
enum class Boundary { kPeriodic, kOpen };

struct TfimSpec {
  int n_sites = 3;
  double coupling = 1.0;
  double field = 1.0;
  SignConvention sign_convention = SignConvention::kMainText;
  Boundary boundary = Boundary::kPeriodic;
};

std::string to_string(SignConvention c);
std::string to_string(Boundary b);
SignConvention parse_sign_convention(const std::string& s);
Boundary parse_boundary(const std::string& s);

// Real linear combination of non-identity Pauli strings.
class Observable {
 public:
  struct Term {
    double weight;
    PauliString string;
  };

  Observable() = default;
  explicit Observable(std::vector<Term> terms);

  // sum_i X_i, the observable used throughout the TFIM experiments.
  static Observable sum_x(int n_sites);
  // Accepts "sum_x", "sum_y", "sum_z" or "w*LABEL + w*LABEL - ...".
  static Observable parse(const std::string& text, int n_sites);

  const std::vector<Term>& terms() const { return terms_; }
  std::vector<PauliString> strings() const;
  int n_sites() const;
  std::string to_string() const;

 private:
  std::vector<Term> terms_;
};

// Ascending eigenvalues and matching unitary eigenvector columns.
struct EigenSystem {
  Eigen::VectorXd energies;
  ComplexMatrix vectors;
  bool degenerate_ground = false;

  Eigen::VectorXcd ground_state() const { return vectors.col(0); }
};

// Dense 2^N matrix of a Pauli string; site 0 is the leftmost Kronecker factor.
ComplexMatrix to_matrix(const PauliString& p, int oracle_limit = kDefaultOracleLimit);
ComplexMatrix to_matrix(const Observable& o, int oracle_limit = kDefaultOracleLimit);
// Tr[a * p] in O(2^N) without forming p.
std::complex<double> pauli_trace(const ComplexMatrix& a, const PauliString& p);

ComplexMatrix build_hamiltonian(const TfimSpec& spec,
                                int oracle_limit = kDefaultOracleLimit);
// Warns on stderr and keeps column 0 when the lowest gap is below 1e-10.
EigenSystem diagonalize(const ComplexMatrix& h);

// Hamiltonian plus its eigendecomposition, built once and reused for every
// time point.
class TfimSystem {
 public:
  explicit TfimSystem(const TfimSpec& spec, int oracle_limit = kDefaultOracleLimit);

  const TfimSpec& spec() const { return spec_; }
  const ComplexMatrix& hamiltonian() const { return h_; }
  const EigenSystem& eigen() const { return eig_; }
  std::size_t dim() const { return static_cast<std::size_t>(h_.rows()); }

  // e^{iHt} o e^{-iHt}
  ComplexMatrix heisenberg(const ComplexMatrix& o, double t) const;
  // e^{-iHt} rho e^{iHt}
  ComplexMatrix schrodinger(const ComplexMatrix& rho, double t) const;

 private:
  TfimSpec spec_;
  ComplexMatrix h_;
  EigenSystem eig_;
};

ComplexMatrix heisenberg_evolve(const TfimSystem& sys, const Observable& o, double t);

// c_i = Tr[o_t sigma_i] / 2^N. Imaginary parts above 1e-10 indicate a
// non-Hermitian input and raise NumericalError.
std::vector<double> pauli_coefficients(const ComplexMatrix& o_t,
                                       const PauliBasis& basis);

// Coefficient trajectory on truncated_basis(policy, O) sampled at `grid`.
// Grid points are distributed over `threads` workers; output order is fixed.
Trajectory generate_trajectory(const TfimSpec& spec, const Observable& o,
                               const TruncationPolicy& policy,
                               std::span<const double> grid, int threads = 1);

// Tr[O(t_j) init] = 2^N c_init(t_j). Strings removed by the symmetry filter
// yield zeros; anything else outside the basis is an error.
std::vector<double> one_point_function(const Trajectory& traj,
                                       const PauliString& init);

// Tr[O rho_i(t)] with rho_i = (sigma + I)/2^N. With `shots`, each term of O
// is estimated from binomial +/-1 outcomes drawn from a generator seeded by
// `seed`.
double measure_coefficient_via_state(const TfimSystem& sys, const Observable& o,
                                     const PauliString& sigma, double t,
                                     std::optional<std::int64_t> shots = std::nullopt,
                                     std::uint64_t seed = 0);
double measure_coefficient_via_state(const TfimSpec& spec, const Observable& o,
                                     const PauliString& sigma, double t,
                                     std::optional<std::int64_t> shots = std::nullopt,
                                     std::uint64_t seed = 0);
// Standard error of the shot estimator for the given state.
double measurement_standard_error(const TfimSystem& sys, const Observable& o,
                                  const PauliString& sigma, double t,
                                  std::int64_t shots);

// C(t) = <Omega| O(t) O |Omega>.
ComplexSeries two_point_function(const TfimSystem& sys, const Observable& o,
                                 std::span<const double> grid);
ComplexSeries two_point_function(const TfimSpec& spec, const Observable& o,
                                 std::span<const double> grid);

struct SpectralLine {
  double frequency;  // E_n - E_0
  double weight;     // |<n|O|Omega>|^2, summed over degenerate levels
};

// Lines ordered by frequency; degenerate levels merged, zero weights dropped.
std::vector<SpectralLine> exact_spectral_lines(const TfimSystem& sys,
                                               const Observable& o);
std::vector<SpectralLine> exact_spectral_lines(const TfimSpec& spec,
                                               const Observable& o);

// [chi_t]_{O,i} = Tr[O E_t(sigma_i)] / 2^N for the unitary channel, optionally
// followed by a depolarizing channel that contracts traceless operators by
// e^{-gamma t}.
std::vector<double> process_matrix_row(const TfimSystem& sys, const Observable& o,
                                       const PauliBasis& basis, double t,
                                       double depolarizing_gamma = 0.0);

// <Omega| sigma_i O |Omega> for every basis element.
std::vector<std::complex<double>> ground_state_weights(const TfimSystem& sys,
                                                       const Observable& o,
                                                       const PauliBasis& basis);

}  // namespace opdyn
