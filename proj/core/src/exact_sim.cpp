#include "opdyn/exact_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "opdyn/error.hpp"
#include "opdyn/parallel.hpp"

namespace opdyn {
namespace {

// Mask over basis-state bits: site k is bit (n-1-k) of the state index.
std::uint64_t index_mask(std::uint64_t site_mask, int n) {
  std::uint64_t m = 0;
  for (int k = 0; k < n; ++k) {
    if ((site_mask >> k) & 1) m |= std::uint64_t{1} << (n - 1 - k);
  }
  return m;
}

void check_oracle_size(int n, int limit) {
  if (n < 1 || n > limit) {
    throw ConfigError("dense oracle limited to " + std::to_string(limit) +
                      " sites, got " + std::to_string(n));
  }
}

// Adds w * p to m.
void accumulate_pauli(ComplexMatrix& m, const PauliString& p,
                      std::complex<double> w) {
  const int n = p.n_sites();
  const std::uint64_t x = index_mask(p.x_mask(), n);
  const std::uint64_t z = index_mask(p.z_mask(), n);
  const std::complex<double> base =
      w * Phase{static_cast<std::uint8_t>(std::popcount(x & z) & 3)}.value();
  const std::uint64_t dim = std::uint64_t{1} << n;
  for (std::uint64_t c = 0; c < dim; ++c) {
    const double sign = (std::popcount(z & c) & 1) ? -1.0 : 1.0;
    m(static_cast<Eigen::Index>(c ^ x), static_cast<Eigen::Index>(c)) += sign * base;
  }
}

}  // namespace

std::string to_string(SignConvention c) {
  return c == SignConvention::kMainText ? "main_text" : "appendix";
}

std::string to_string(Boundary b) {
  return b == Boundary::kPeriodic ? "periodic" : "open";
}

SignConvention parse_sign_convention(const std::string& s) {
  if (s == "main_text") return SignConvention::kMainText;
  if (s == "appendix") return SignConvention::kAppendix;
  throw ConfigError("unknown sign convention '" + s + "'");
}

Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::kPeriodic;
  if (s == "open") return Boundary::kOpen;
  throw ConfigError("unknown boundary '" + s + "'");
}

Observable::Observable(std::vector<Term> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw ConfigError("observable has no terms");
  const int n = terms_.front().string.n_sites();
  for (const auto& t : terms_) {
    if (t.string.n_sites() != n) {
      throw ConfigError("observable terms differ in size");
    }
    if (t.string.is_identity()) {
      throw ConfigError("observable must be traceless (identity term given)");
    }
    if (!std::isfinite(t.weight)) {
      throw ConfigError("observable weight is not finite");
    }
  }
}

Observable Observable::sum_x(int n_sites) {
  std::vector<Term> terms;
  for (int i = 0; i < n_sites; ++i) {
    terms.push_back({1.0, PauliString::single(n_sites, i, 'X')});
  }
  return Observable(std::move(terms));
}

Observable Observable::parse(const std::string& text, int n_sites) {
  std::string s;
  for (char ch : text) {
    if (ch != ' ' && ch != '\t') s += ch;
  }
  if (s == "sum_x" || s == "sum_y" || s == "sum_z") {
    const char letter = static_cast<char>(std::toupper(s.back()));
    std::vector<Term> terms;
    for (int i = 0; i < n_sites; ++i) {
      terms.push_back({1.0, PauliString::single(n_sites, i, letter)});
    }
    return Observable(std::move(terms));
  }
  std::vector<Term> terms;
  std::size_t pos = 0;
  while (pos < s.size()) {
    double sign = 1.0;
    if (s[pos] == '+' || s[pos] == '-') {
      sign = s[pos] == '-' ? -1.0 : 1.0;
      ++pos;
    }
    std::size_t end = pos;
    while (end < s.size() && s[end] != '+' && s[end] != '-') {
      // Allow exponents such as 1e-3 inside the weight.
      if ((s[end] == 'e' || s[end] == 'E') && end + 1 < s.size() &&
          (s[end + 1] == '+' || s[end + 1] == '-') && end > pos &&
          std::isdigit(static_cast<unsigned char>(s[end - 1]))) {
        end += 2;
        continue;
      }
      ++end;
    }
    const std::string term = s.substr(pos, end - pos);
    const auto star = term.find('*');
    double w = 1.0;
    std::string label = term;
    if (star != std::string::npos) {
      try {
        w = std::stod(term.substr(0, star));
      } catch (const std::exception&) {
        throw ConfigError("bad observable weight in '" + term + "'");
      }
      label = term.substr(star + 1);
    }
    auto p = PauliString::from_label(label);
    if (p.n_sites() != n_sites) {
      throw ConfigError("observable term " + label + " does not have " +
                        std::to_string(n_sites) + " sites");
    }
    terms.push_back({sign * w, p});
    pos = end;
  }
  return Observable(std::move(terms));
}

std::vector<PauliString> Observable::strings() const {
  std::vector<PauliString> out;
  for (const auto& t : terms_) out.push_back(t.string);
  return out;
}

int Observable::n_sites() const {
  return terms_.empty() ? 0 : terms_.front().string.n_sites();
}

std::string Observable::to_string() const {
  std::ostringstream ss;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) ss << " + ";
    ss << format_double(terms_[k].weight) << '*' << terms_[k].string.label();
  }
  return ss.str();
}

ComplexMatrix to_matrix(const PauliString& p, int oracle_limit) {
  check_oracle_size(p.n_sites(), oracle_limit);
  const auto dim = Eigen::Index{1} << p.n_sites();
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  accumulate_pauli(m, p, 1.0);
  return m;
}

ComplexMatrix to_matrix(const Observable& o, int oracle_limit) {
  check_oracle_size(o.n_sites(), oracle_limit);
  const auto dim = Eigen::Index{1} << o.n_sites();
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  for (const auto& t : o.terms()) accumulate_pauli(m, t.string, t.weight);
  return m;
}

std::complex<double> pauli_trace(const ComplexMatrix& a, const PauliString& p) {
  const int n = p.n_sites();
  const std::uint64_t dim = std::uint64_t{1} << n;
  if (static_cast<std::uint64_t>(a.rows()) != dim || a.rows() != a.cols()) {
    throw ConfigError("matrix dimension does not match Pauli string size");
  }
  const std::uint64_t x = index_mask(p.x_mask(), n);
  const std::uint64_t z = index_mask(p.z_mask(), n);
  std::complex<double> acc = 0;
  for (std::uint64_t c = 0; c < dim; ++c) {
    const auto v = a(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c ^ x));
    acc += (std::popcount(z & c) & 1) ? -v : v;
  }
  return acc * Phase{static_cast<std::uint8_t>(std::popcount(x & z) & 3)}.value();
}

ComplexMatrix build_hamiltonian(const TfimSpec& spec, int oracle_limit) {
  const int n = spec.n_sites;
  check_oracle_size(n, oracle_limit);
  const double sign = spec.sign_convention == SignConvention::kMainText ? -1.0 : 1.0;
  const auto dim = Eigen::Index{1} << n;
  ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
  const int bonds = spec.boundary == Boundary::kPeriodic ? n : n - 1;
  for (int i = 0; i < bonds; ++i) {
    const int j = (i + 1) % n;
    std::uint64_t z = (std::uint64_t{1} << i) ^ (std::uint64_t{1} << j);
    // On a single site the periodic bond Z_0 Z_0 is the identity.
    accumulate_pauli(h, PauliString(n, 0, z), sign * spec.coupling);
  }
  for (int i = 0; i < n; ++i) {
    accumulate_pauli(h, PauliString::single(n, i, 'X'), sign * spec.field);
  }
  return h;
}

EigenSystem diagonalize(const ComplexMatrix& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed");
  }
  EigenSystem eig;
  eig.energies = solver.eigenvalues();
  eig.vectors = solver.eigenvectors();
  if (eig.energies.size() > 1 && eig.energies(1) - eig.energies(0) < 1e-10) {
    eig.degenerate_ground = true;
    std::clog << "warning: degenerate ground state (gap "
              << eig.energies(1) - eig.energies(0)
              << "); using the lowest-index eigenvector\n";
  }
  return eig;
}

TfimSystem::TfimSystem(const TfimSpec& spec, int oracle_limit)
    : spec_(spec), h_(build_hamiltonian(spec, oracle_limit)), eig_(diagonalize(h_)) {}

ComplexMatrix TfimSystem::heisenberg(const ComplexMatrix& o, double t) const {
  const auto& v = eig_.vectors;
  ComplexMatrix oe = v.adjoint() * o * v;
  const Eigen::VectorXcd ph =
      (std::complex<double>(0, 1) * t * eig_.energies.cast<std::complex<double>>())
          .array()
          .exp();
  oe = ph.asDiagonal() * oe * ph.conjugate().asDiagonal();
  return v * oe * v.adjoint();
}

ComplexMatrix TfimSystem::schrodinger(const ComplexMatrix& rho, double t) const {
  return heisenberg(rho, -t);
}

ComplexMatrix heisenberg_evolve(const TfimSystem& sys, const Observable& o, double t) {
  if (!std::isfinite(t)) throw ConfigError("evolution time is not finite");
  return sys.heisenberg(to_matrix(o), t);
}

std::vector<double> pauli_coefficients(const ComplexMatrix& o_t,
                                       const PauliBasis& basis) {
  const double d = static_cast<double>(o_t.rows());
  std::vector<double> out;
  out.reserve(basis.size());
  for (const auto& p : basis.elements()) {
    const auto c = pauli_trace(o_t, p) / d;
    if (std::abs(c.imag()) > 1e-10) {
      throw NumericalError("coefficient of " + p.label() +
                           " has imaginary part " + format_double(c.imag()));
    }
    out.push_back(c.real());
  }
  return out;
}

namespace {

std::string policy_string(const TruncationPolicy& p) {
  std::ostringstream ss;
  ss << (p.mode == TruncationMode::kFull ? "full" : "window");
  if (p.mode == TruncationMode::kWindow) ss << ",radius=" << p.window_radius;
  ss << ",symmetry=" << (p.symmetry_filter ? "on" : "off");
  if (!p.periodic) ss << ",open";
  return ss.str();
}

}  // namespace

Trajectory generate_trajectory(const TfimSpec& spec, const Observable& o,
                               const TruncationPolicy& policy,
                               std::span<const double> grid, int threads) {
  if (grid.empty()) throw ConfigError("empty time grid");
  if (grid.front() != 0.0) throw ConfigError("time grid must start at 0");
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] > grid[j - 1])) {
      throw ConfigError("time grid must be strictly increasing");
    }
  }
  if (o.n_sites() != spec.n_sites) {
    throw ConfigError("observable size does not match the model");
  }
  TfimSystem sys(spec);
  const auto strings = o.strings();
  Trajectory traj;
  traj.basis = truncated_basis(policy, strings);
  traj.times.assign(grid.begin(), grid.end());
  traj.coeffs.resize(static_cast<Eigen::Index>(grid.size()),
                     static_cast<Eigen::Index>(traj.basis.size()));
  const ComplexMatrix om = to_matrix(o);
  parallel_for(grid.size(), threads, [&](std::size_t j) {
    const auto c = pauli_coefficients(sys.heisenberg(om, grid[j]), traj.basis);
    for (std::size_t i = 0; i < c.size(); ++i) {
      traj.coeffs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c[i];
    }
  });
  traj.meta.set("n_sites", std::to_string(spec.n_sites));
  traj.meta.set("coupling", format_double(spec.coupling));
  traj.meta.set("field", format_double(spec.field));
  traj.meta.set("sign_convention", to_string(spec.sign_convention));
  traj.meta.set("boundary", to_string(spec.boundary));
  traj.meta.set("observable", o.to_string());
  traj.meta.set("policy", policy_string(policy));
  if (policy.symmetry_filter) {
    traj.meta.set("symmetry_generator",
                  policy.symmetry_generator
                      ? policy.symmetry_generator->label()
                      : SymmetryOperator::bit_flip(spec.n_sites).generator.label());
  }
  traj.meta.set("seed", "none");
  return traj;
}

std::vector<double> one_point_function(const Trajectory& traj,
                                       const PauliString& init) {
  if (init.is_identity()) {
    throw ConfigError("one-point function against the identity is undefined");
  }
  const double d = std::ldexp(1.0, init.n_sites());
  std::vector<double> out(traj.times.size(), 0.0);
  if (auto idx = traj.basis.index_of(init)) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] = d * traj.coeffs(static_cast<Eigen::Index>(j),
                               static_cast<Eigen::Index>(*idx));
    }
    return out;
  }
  if (auto gen = traj.meta.get("symmetry_generator")) {
    if (!commutes(init, PauliString::from_label(*gen))) return out;
  }
  throw ConfigError(init.label() + " is not in the trajectory basis");
}

namespace {

ComplexMatrix perturbed_state(const PauliString& sigma) {
  const auto dim = Eigen::Index{1} << sigma.n_sites();
  ComplexMatrix rho = to_matrix(sigma) + ComplexMatrix::Identity(dim, dim);
  return rho / static_cast<double>(dim);
}

}  // namespace

double measure_coefficient_via_state(const TfimSystem& sys, const Observable& o,
                                     const PauliString& sigma, double t,
                                     std::optional<std::int64_t> shots,
                                     std::uint64_t seed) {
  if (sigma.n_sites() != sys.spec().n_sites || o.n_sites() != sys.spec().n_sites) {
    throw ConfigError("state and observable sizes must match the model");
  }
  const ComplexMatrix rho_t = sys.schrodinger(perturbed_state(sigma), t);
  if (!shots) {
    return (to_matrix(o) * rho_t).trace().real();
  }
  if (*shots <= 0) throw ConfigError("shots must be positive");
  std::mt19937_64 rng(seed);
  double estimate = 0.0;
  for (const auto& term : o.terms()) {
    const double expectation = pauli_trace(rho_t, term.string).real();
    const double p_plus = std::clamp(0.5 * (1.0 + expectation), 0.0, 1.0);
    std::binomial_distribution<std::int64_t> draw(*shots, p_plus);
    const double n_plus = static_cast<double>(draw(rng));
    estimate += term.weight * (2.0 * n_plus / static_cast<double>(*shots) - 1.0);
  }
  return estimate;
}

double measure_coefficient_via_state(const TfimSpec& spec, const Observable& o,
                                     const PauliString& sigma, double t,
                                     std::optional<std::int64_t> shots,
                                     std::uint64_t seed) {
  return measure_coefficient_via_state(TfimSystem(spec), o, sigma, t, shots, seed);
}

double measurement_standard_error(const TfimSystem& sys, const Observable& o,
                                  const PauliString& sigma, double t,
                                  std::int64_t shots) {
  const ComplexMatrix rho_t = sys.schrodinger(perturbed_state(sigma), t);
  double var = 0.0;
  for (const auto& term : o.terms()) {
    const double e = std::clamp(pauli_trace(rho_t, term.string).real(), -1.0, 1.0);
    var += term.weight * term.weight * (1.0 - e * e);
  }
  return std::sqrt(var / static_cast<double>(shots));
}

ComplexSeries two_point_function(const TfimSystem& sys, const Observable& o,
                                 std::span<const double> grid) {
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] > grid[j - 1])) throw ConfigError("grid must be increasing");
  }
  const ComplexMatrix om = to_matrix(o);
  const Eigen::VectorXcd omega = sys.eigen().ground_state();
  const Eigen::VectorXcd o_omega = om * omega;
  ComplexSeries out;
  out.reserve(grid.size());
  for (double t : grid) {
    out.push_back(omega.dot(sys.heisenberg(om, t) * o_omega));
  }
  return out;
}

ComplexSeries two_point_function(const TfimSpec& spec, const Observable& o,
                                 std::span<const double> grid) {
  return two_point_function(TfimSystem(spec), o, grid);
}

std::vector<SpectralLine> exact_spectral_lines(const TfimSystem& sys,
                                               const Observable& o) {
  const auto& eig = sys.eigen();
  const Eigen::VectorXcd amps =
      eig.vectors.adjoint() * (to_matrix(o) * eig.ground_state());
  double total = amps.squaredNorm();
  std::vector<SpectralLine> lines;
  for (Eigen::Index n = 0; n < amps.size(); ++n) {
    const double f = eig.energies(n) - eig.energies(0);
    const double w = std::norm(amps(n));
    if (!lines.empty() && std::abs(lines.back().frequency - f) <
                              1e-8 * std::max(1.0, std::abs(f))) {
      lines.back().weight += w;
    } else {
      lines.push_back({f, w});
    }
  }
  std::erase_if(lines, [&](const SpectralLine& l) {
    return l.weight <= 1e-14 * std::max(1.0, total);
  });
  return lines;
}

std::vector<SpectralLine> exact_spectral_lines(const TfimSpec& spec,
                                               const Observable& o) {
  return exact_spectral_lines(TfimSystem(spec), o);
}

std::vector<double> process_matrix_row(const TfimSystem& sys, const Observable& o,
                                       const PauliBasis& basis, double t,
                                       double depolarizing_gamma) {
  const ComplexMatrix om = to_matrix(o);
  const auto dim = static_cast<Eigen::Index>(sys.dim());
  const double d = static_cast<double>(dim);
  const double keep = std::exp(-depolarizing_gamma * t);
  std::vector<double> row;
  row.reserve(basis.size());
  for (const auto& sigma : basis.elements()) {
    ComplexMatrix e = sys.schrodinger(to_matrix(sigma), t);
    if (depolarizing_gamma != 0.0) {
      const std::complex<double> tr = e.trace();
      e = keep * e + ((1.0 - keep) * tr / d) * ComplexMatrix::Identity(dim, dim);
    }
    const std::complex<double> v = (om * e).trace() / d;
    if (std::abs(v.imag()) > 1e-10) {
      throw NumericalError("process matrix entry is not real");
    }
    row.push_back(v.real());
  }
  return row;
}

std::vector<std::complex<double>> ground_state_weights(const TfimSystem& sys,
                                                       const Observable& o,
                                                       const PauliBasis& basis) {
  const Eigen::VectorXcd omega = sys.eigen().ground_state();
  const Eigen::VectorXcd o_omega = to_matrix(o) * omega;
  std::vector<std::complex<double>> out;
  out.reserve(basis.size());
  for (const auto& p : basis.elements()) {
    ComplexMatrix m = ComplexMatrix::Zero(o_omega.size(), o_omega.size());
    accumulate_pauli(m, p, 1.0);
    out.push_back(omega.dot(m * o_omega));
  }
  return out;
}

}  // namespace opdyn
