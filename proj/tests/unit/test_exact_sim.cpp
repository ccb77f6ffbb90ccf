#include <gtest/gtest.h>

#include <random>

#include "opdyn/error.hpp"
#include "opdyn/exact_sim.hpp"
#include "oracles.hpp"

using namespace opdyn;

namespace {

TfimSpec chain(int n) {
  TfimSpec s;
  s.n_sites = n;
  return s;
}

std::vector<double> grid(double end, double dt) {
  std::vector<double> g;
  for (int j = 0; j * dt <= end + 1e-9; ++j) g.push_back(j * dt);
  return g;
}

}  // namespace

TEST(Hamiltonian, TwoSitePeriodicDoublesBond) {
  const auto h = build_hamiltonian(chain(2));
  const oracle::Mat expect = -2.0 * oracle::pauli("ZZ") - oracle::pauli("XI") - oracle::pauli("IX");
  EXPECT_LT((h - expect).norm(), 1e-14);
}

TEST(Hamiltonian, MatchesKroneckerOracleAllConventions) {
  for (int n : {2, 3, 4}) {
    for (auto sign : {SignConvention::kMainText, SignConvention::kAppendix}) {
      for (auto bc : {Boundary::kPeriodic, Boundary::kOpen}) {
        TfimSpec s{n, 0.7, 1.3, sign, bc};
        const double sg = sign == SignConvention::kMainText ? -1.0 : 1.0;
        const auto expect = oracle::tfim(n, 0.7, 1.3, sg, bc == Boundary::kPeriodic);
        EXPECT_LT((build_hamiltonian(s) - expect).norm(), 1e-13) << n;
      }
    }
  }
}

TEST(Hamiltonian, CommutesWithBitFlip) {
  const auto h = build_hamiltonian(chain(3));
  const auto s = to_matrix(SymmetryOperator::bit_flip(3).generator);
  EXPECT_EQ((h * s - s * h).norm(), 0.0);
}

TEST(Hamiltonian, SizeLimit) { EXPECT_THROW(build_hamiltonian(chain(9)), ConfigError); }

TEST(Diagonalize, GroundEnergyAndReconstruction) {
  const TfimSystem sys(chain(3));
  const auto& e = sys.eigen();
  Eigen::SelfAdjointEigenSolver<oracle::Mat> ref(oracle::tfim(3, 1, 1, -1));
  EXPECT_NEAR(e.energies(0), ref.eigenvalues()(0), 1e-12);
  const oracle::Mat rebuilt = e.vectors * e.energies.asDiagonal() * e.vectors.adjoint();
  EXPECT_LT((rebuilt - sys.hamiltonian()).cwiseAbs().maxCoeff(), 10 * 2.2e-16 * 8 * 8);
  for (Eigen::Index k = 1; k < e.energies.size(); ++k) EXPECT_LE(e.energies(k - 1), e.energies(k));
}

TEST(Heisenberg, TimeZeroAndInvariants) {
  const TfimSystem sys(chain(3));
  const auto o = Observable::sum_x(3);
  const auto o0 = to_matrix(o);
  EXPECT_LT((heisenberg_evolve(sys, o, 0.0) - o0).norm(), 1e-13);
  Eigen::SelfAdjointEigenSolver<oracle::Mat> before(o0);
  for (double t : {0.4, 3.0, 17.5}) {
    const auto ot = heisenberg_evolve(sys, o, t);
    EXPECT_LT((ot - ot.adjoint()).norm(), 1e-12);
    EXPECT_LT(std::abs(ot.trace()), 1e-12);
    EXPECT_NEAR(ot.norm(), o0.norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<oracle::Mat> after(ot);
    EXPECT_LT((after.eigenvalues() - before.eigenvalues()).norm(), 1e-11);
  }
}

TEST(Heisenberg, MatchesPadeExponentialOracle) {
  const TfimSystem sys(chain(3));
  const auto H = oracle::tfim(3, 1, 1, -1);
  const auto O = oracle::sum_x(3);
  for (double t : {0.3, 2.2, 9.1}) {
    EXPECT_LT((heisenberg_evolve(sys, Observable::sum_x(3), t) - oracle::heisenberg(H, O, t)).norm(), 1e-10);
  }
}

TEST(Heisenberg, FirstOrderCommutatorSeries) {
  const TfimSystem sys(chain(2));
  const auto H = oracle::tfim(2, 1, 1, -1);
  const oracle::Mat O = oracle::sum_x(2) + 0.5 * oracle::pauli("ZY");
  const auto obs = Observable::parse("1*XI + 1*IX + 0.5*ZY", 2);
  const double t = 0.01;
  const oracle::Mat first = O + oracle::cd(0, t) * (H * O - O * H);
  const oracle::Mat c1 = H * O - O * H;
  const double second = 0.5 * t * t * (H * c1 - c1 * H).norm();
  EXPECT_LT((heisenberg_evolve(sys, obs, t) - first).norm(), 1.1 * second);
}

TEST(PauliCoefficients, SumXAtTimeZero) {
  const TfimSystem sys(chain(3));
  const auto basis = enumerate_full_basis(3);
  const auto c = pauli_coefficients(heisenberg_evolve(sys, Observable::sum_x(3), 0.0), basis);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto& l = basis.labels()[i];
    const double expect = (l == "XII" || l == "IXI" || l == "IIX") ? 1.0 : 0.0;
    EXPECT_NEAR(c[i], expect, 1e-14) << l;
  }
}

TEST(PauliCoefficients, RejectsNonHermitian) {
  Eigen::MatrixXcd m = oracle::cd(0, 1) * oracle::pauli("XZ");
  EXPECT_THROW(pauli_coefficients(m, enumerate_full_basis(2)), NumericalError);
}

TEST(PauliCoefficients, SymmetrySectorAndFrobenius) {
  const TfimSystem sys(chain(3));
  const auto basis = enumerate_full_basis(3);
  const auto flip = SymmetryOperator::bit_flip(3).generator;
  const double norm0 = to_matrix(Observable::sum_x(3)).squaredNorm();
  for (double t : {0.0, 1.1, 7.3, 42.0}) {
    const auto ot = heisenberg_evolve(sys, Observable::sum_x(3), t);
    const auto c = pauli_coefficients(ot, basis);
    double sum = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      if (!commutes(basis[i], flip)) EXPECT_LT(std::abs(c[i]), 1e-12) << basis.labels()[i];
      sum += c[i] * c[i];
      EXPECT_NEAR(c[i], oracle::coefficient(ot, basis.labels()[i]), 1e-13);
    }
    EXPECT_NEAR(sum * 8.0, norm0, 1e-10);
  }
}

TEST(GenerateTrajectory, ShapesAndMetadata) {
  const auto g = grid(5.0, 0.1);
  TruncationPolicy full;
  const auto traj = generate_trajectory(chain(3), Observable::sum_x(3), full, g, 2);
  EXPECT_EQ(traj.coeffs.rows(), 51);
  EXPECT_EQ(traj.coeffs.cols(), 63);
  EXPECT_FALSE(traj.basis.contains(PauliString(3)));
  EXPECT_EQ(traj.meta.get("n_sites"), "3");
  EXPECT_EQ(traj.meta.get("sign_convention"), "main_text");
  EXPECT_TRUE(traj.meta.get("policy").has_value());
}

TEST(GenerateTrajectory, SinglePointEqualsObservableExpansion) {
  const std::vector<double> g{0.0};
  const auto o = Observable::parse("0.5*XX + 2*IZ", 2);
  const auto traj = generate_trajectory(chain(2), o, TruncationPolicy{}, g);
  ASSERT_EQ(traj.coeffs.rows(), 1);
  for (std::size_t i = 0; i < traj.dim(); ++i) {
    const auto& l = traj.basis.labels()[i];
    const double expect = l == "XX" ? 0.5 : (l == "IZ" ? 2.0 : 0.0);
    EXPECT_NEAR(traj.coeffs(0, static_cast<Eigen::Index>(i)), expect, 1e-14);
  }
}

TEST(GenerateTrajectory, ColumnsMatchScalarRecomputation) {
  const auto g = grid(2.0, 0.25);
  const auto traj = generate_trajectory(chain(2), Observable::sum_x(2), TruncationPolicy{}, g, 3);
  const auto H = oracle::tfim(2, 1, 1, -1);
  const auto O = oracle::sum_x(2);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const auto ot = oracle::heisenberg(H, O, g[j]);
    for (std::size_t i = 0; i < traj.dim(); ++i) {
      EXPECT_NEAR(traj.coeffs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)),
                  oracle::coefficient(ot, traj.basis.labels()[i]), 1e-11);
    }
  }
}

TEST(GenerateTrajectory, ThreadCountDoesNotChangeOutput) {
  const auto g = grid(3.0, 0.1);
  const auto a = generate_trajectory(chain(3), Observable::sum_x(3), TruncationPolicy{}, g, 1);
  const auto b = generate_trajectory(chain(3), Observable::sum_x(3), TruncationPolicy{}, g, 4);
  EXPECT_EQ(a.coeffs, b.coeffs);
}

TEST(GenerateTrajectory, RejectsBadGrids) {
  EXPECT_THROW(generate_trajectory(chain(2), Observable::sum_x(2), {}, std::vector<double>{}), ConfigError);
  EXPECT_THROW(generate_trajectory(chain(2), Observable::sum_x(2), {}, std::vector<double>{0.5, 1.0}), ConfigError);
  EXPECT_THROW(generate_trajectory(chain(2), Observable::sum_x(2), {}, std::vector<double>{0.0, 1.0, 1.0}),
               ConfigError);
}

TEST(GenerateTrajectory, TruncationErrorNonIncreasingInRadius) {
  const auto g = grid(3.0, 0.1);
  const auto full = generate_trajectory(chain(4), Observable::sum_x(4), TruncationPolicy{}, g);
  double prev = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= 2; ++r) {
    TruncationPolicy p;
    p.mode = TruncationMode::kWindow;
    p.window_radius = r;
    const auto basis = truncated_basis(p, Observable::sum_x(4).strings());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < full.coeffs.rows(); ++j) {
      double gap = 0.0;
      for (std::size_t i = 0; i < full.dim(); ++i) {
        if (!basis.contains(full.basis[i])) gap += full.coeffs(j, static_cast<Eigen::Index>(i)) * full.coeffs(j, static_cast<Eigen::Index>(i));
      }
      worst = std::max(worst, std::sqrt(gap));
    }
    EXPECT_LE(worst, prev + 1e-15) << "radius " << r;
    prev = worst;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(OnePoint, TraceNormalizationAndSymmetry) {
  const auto g = grid(2.0, 0.1);
  TruncationPolicy sym;
  sym.symmetry_filter = true;
  const auto traj = generate_trajectory(chain(3), Observable::sum_x(3), sym, g);
  const auto x1 = one_point_function(traj, PauliString::from_label("XII"));
  EXPECT_NEAR(x1[0], 8.0, 1e-12);
  const auto z1 = one_point_function(traj, PauliString::from_label("ZII"));
  for (double v : z1) EXPECT_EQ(v, 0.0);
  const auto xyz = one_point_function(traj, PauliString::from_label("XYZ"));
  const auto H = oracle::tfim(3, 1, 1, -1);
  for (std::size_t j = 0; j < g.size(); j += 5) {
    const auto ot = oracle::heisenberg(H, oracle::sum_x(3), g[j]);
    EXPECT_NEAR(xyz[j], (ot * oracle::pauli("XYZ")).trace().real(), 1e-10);
    EXPECT_LE(std::abs(xyz[j]), 8.0 * 3.0);
  }
  EXPECT_THROW(one_point_function(traj, PauliString(3)), ConfigError);
}

TEST(Measurement, ExactModeEqualsCoefficients) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ut(0.0, 10.0);
  for (int n : {2, 3}) {
    const TfimSystem sys(chain(n));
    const auto o = Observable::sum_x(n);
    const auto basis = enumerate_full_basis(n);
    for (int k = 0; k < 20; ++k) {
      const auto& s = basis[1 + rng() % (basis.size() - 1)];
      const double t = ut(rng);
      const auto c = pauli_coefficients(heisenberg_evolve(sys, o, t), basis);
      EXPECT_NEAR(measure_coefficient_via_state(sys, o, s, t), c[*basis.index_of(s)], 1e-10);
    }
  }
}

TEST(Measurement, TimeZeroReturnsTermWeight) {
  const auto o = Observable::parse("0.75*XZ + 1*IX", 2);
  EXPECT_NEAR(measure_coefficient_via_state(chain(2), o, PauliString::from_label("XZ"), 0.0), 0.75, 1e-14);
}

TEST(Measurement, ShotsWithinFiveStandardErrors) {
  const TfimSystem sys(chain(3));
  const auto o = Observable::sum_x(3);
  const auto s = PauliString::from_label("XYZ");
  const double t = 1.3;
  const double exact = measure_coefficient_via_state(sys, o, s, t);
  const double sampled = measure_coefficient_via_state(sys, o, s, t, 1000000, 99);
  const double se = measurement_standard_error(sys, o, s, t, 1000000);
  EXPECT_GT(se, 0.0);
  EXPECT_LT(std::abs(sampled - exact), 5 * se);
  EXPECT_EQ(sampled, measure_coefficient_via_state(sys, o, s, t, 1000000, 99));
}

TEST(TwoPoint, SpectralDecompositionOracle) {
  const TfimSystem sys(chain(3));
  const auto o = Observable::sum_x(3);
  const auto g = grid(10.0, 0.5);
  const auto c = two_point_function(sys, o, g);
  Eigen::SelfAdjointEigenSolver<oracle::Mat> es(oracle::tfim(3, 1, 1, -1));
  const Eigen::VectorXcd amp = es.eigenvectors().adjoint() * oracle::sum_x(3) * es.eigenvectors().col(0);
  for (std::size_t j = 0; j < g.size(); ++j) {
    oracle::cd expect = 0;
    for (Eigen::Index n = 0; n < amp.size(); ++n) {
      expect += std::exp(oracle::cd(0, -(es.eigenvalues()(n) - es.eigenvalues()(0)) * g[j])) * std::norm(amp(n));
    }
    EXPECT_LT(std::abs(c[j] - expect), 1e-10);
  }
  EXPECT_GE(c[0].real(), 0.0);
  EXPECT_LT(std::abs(c[0].imag()), 1e-14);
}

TEST(SpectralLines, WeightsSumToC0AndSectorOnly) {
  const TfimSystem sys(chain(3));
  const auto o = Observable::sum_x(3);
  const auto lines = exact_spectral_lines(sys, o);
  const auto c0 = two_point_function(sys, o, std::vector<double>{0.0})[0].real();
  double total = 0.0;
  for (const auto& l : lines) {
    EXPECT_GE(l.frequency, -1e-12);
    EXPECT_GT(l.weight, 0.0);
    total += l.weight;
  }
  EXPECT_NEAR(total, c0, 1e-10);
  // O commutes with S, so only eigenstates with the ground state's parity
  // appear. Degenerate levels may mix sectors and are skipped.
  const auto S = oracle::pauli("XXX");
  const auto& e = sys.eigen();
  const double parity0 = (e.vectors.col(0).adjoint() * S * e.vectors.col(0))(0).real();
  for (const auto& l : lines) {
    for (Eigen::Index n = 0; n < e.energies.size(); ++n) {
      bool degenerate = false;
      for (Eigen::Index m = 0; m < e.energies.size(); ++m) {
        if (m != n && std::abs(e.energies(m) - e.energies(n)) < 1e-9) degenerate = true;
      }
      if (!degenerate && std::abs(e.energies(n) - e.energies(0) - l.frequency) < 1e-9) {
        const double parity = (e.vectors.col(n).adjoint() * S * e.vectors.col(n))(0).real();
        EXPECT_NEAR(parity, parity0, 1e-9);
      }
    }
  }
}

TEST(ProcessRow, MatchesCoefficientsAndDepolarizing) {
  const TfimSystem sys(chain(2));
  const auto o = Observable::sum_x(2);
  const auto basis = enumerate_full_basis(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ut(0.0, 10.0);
  const double gamma = 0.05;
  for (int k = 0; k < 10; ++k) {
    const double t = ut(rng);
    const auto row = process_matrix_row(sys, o, basis, t);
    const auto noisy = process_matrix_row(sys, o, basis, t, gamma);
    const auto c = pauli_coefficients(heisenberg_evolve(sys, o, t), basis);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      EXPECT_NEAR(row[i], c[i], 1e-10);
      EXPECT_NEAR(noisy[i], std::exp(-gamma * t) * row[i], 1e-10);
    }
  }
  const auto r0 = process_matrix_row(sys, o, basis, 0.0);
  EXPECT_NEAR(r0[*basis.index_of("XI")], 1.0, 1e-14);
  EXPECT_NEAR(r0[*basis.index_of("ZZ")], 0.0, 1e-14);
}

TEST(Observable, ParseAndValidate) {
  const auto o = Observable::parse("0.5*XZ - 2*IY", 2);
  ASSERT_EQ(o.terms().size(), 2u);
  EXPECT_DOUBLE_EQ(o.terms()[1].weight, -2.0);
  EXPECT_THROW(Observable::parse("1*II", 2), ConfigError);
  EXPECT_THROW(Observable::parse("1*XXX", 2), ConfigError);
  EXPECT_THROW(Observable::parse("", 2), ConfigError);
}
