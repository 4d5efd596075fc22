#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "eigensampler/error.hpp"
#include "eigensampler/qlinalg.hpp"
#include "eigensampler/random.hpp"

using namespace eigensampler;

namespace {

ComplexMatrix mat2(Complex a, Complex b, Complex c, Complex d) {
  ComplexMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

ComplexMatrix pauli_x() { return mat2(0, 1, 1, 0); }
ComplexMatrix pauli_z() { return mat2(1, 0, 0, -1); }

}  // namespace

TEST(HermitianEigen, DiagonalSortedAscending) {
  const auto eig = hermitian_eigen(mat2(1, 0, 0, -2));
  EXPECT_NEAR(eig.eigenvalues(0), -2.0, 1e-14);
  EXPECT_NEAR(eig.eigenvalues(1), 1.0, 1e-14);
}

TEST(HermitianEigen, PauliX) {
  const auto eig = hermitian_eigen(pauli_x());
  EXPECT_NEAR(eig.eigenvalues(0), -1.0, 1e-14);
  EXPECT_NEAR(eig.eigenvalues(1), 1.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(eig.eigenvectors(0, 0) * r - eig.eigenvectors(1, 0) * r), 1.0, 1e-12);  // |->
  EXPECT_NEAR(std::abs(eig.eigenvectors(0, 1) * r + eig.eigenvectors(1, 1) * r), 1.0, 1e-12);  // |+>
}

TEST(HermitianEigen, ZPlusX) {
  const auto eig = hermitian_eigen(pauli_z() + pauli_x());
  EXPECT_NEAR(eig.eigenvalues(0), -std::sqrt(2.0), 1e-13);
  EXPECT_NEAR(eig.eigenvalues(1), std::sqrt(2.0), 1e-13);
}

TEST(HermitianEigen, RejectsNonHermitian) {
  EXPECT_THROW(hermitian_eigen(mat2(0, 1, 0, 0)), NotHermitianError);
  EXPECT_THROW(hermitian_eigen(ComplexMatrix::Zero(2, 3)), DimensionError);
}

TEST(HermitianEigen, RandomPairsAndReconstruction) {
  Rng rng(11);
  for (Index d : {2, 4, 8, 16, 32}) {
    const ComplexMatrix a = random_hermitian(d, rng);
    const auto eig = hermitian_eigen(a);
    const double scale = spectral_norm(a);
    for (Index k = 0; k < d; ++k) {
      const ComplexVector v = eig.eigenvectors.col(k);
      EXPECT_LE((a * v - eig.eigenvalues(k) * v).norm(), 1e-9 * scale);
    }
    EXPECT_LE(max_abs_entry(eig.eigenvectors.adjoint() * eig.eigenvectors - ComplexMatrix::Identity(d, d)), 1e-10);
    EXPECT_LE(max_abs_entry(reconstruct(eig) - a), 1e-10 * scale);
  }
}

TEST(TraceNorm, Examples) {
  EXPECT_NEAR(trace_norm(mat2(1, 0, 0, -2)), 3.0, 1e-14);
  EXPECT_NEAR(trace_norm(ComplexMatrix::Identity(8, 8)), 8.0, 1e-14);
  EXPECT_NEAR(trace_norm(mat2(0, 1, 0, 0)), 1.0, 1e-14);
}

TEST(TraceNorm, UnitaryInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix a = random_ginibre(6, 6, rng);
    const ComplexMatrix u = random_unitary(6, rng);
    const ComplexMatrix v = random_unitary(6, rng);
    EXPECT_NEAR(trace_norm(u * a * v), trace_norm(a), 1e-10);
  }
}

TEST(TraceNorm, HolderBound) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix a = random_ginibre(5, 5, rng);
    const ComplexMatrix b = random_ginibre(5, 5, rng);
    EXPECT_LE(trace_norm(a * b), spectral_norm(a) * trace_norm(b) + 1e-10);
    EXPECT_LE(std::abs((a * b).trace()), trace_norm(a * b) + 1e-10);
  }
}

TEST(Fidelity, Examples) {
  const ComplexMatrix p0 = mat2(1, 0, 0, 0), p1 = mat2(0, 0, 0, 1);
  EXPECT_NEAR(fidelity(p0, p0), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(p0, p1), 0.0, 1e-12);
  EXPECT_NEAR(fidelity(p0, ComplexMatrix(ComplexMatrix::Identity(2, 2) / 2.0)), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Fidelity, SymmetricAndBounded) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const ComplexMatrix a = random_density_matrix(4, rng);
    const ComplexMatrix b = random_density_matrix(4, rng, 1 + trial % 4);
    const double f = fidelity(a, b);
    EXPECT_NEAR(f, fidelity(b, a), 1e-8);
    EXPECT_GE(f, -1e-12);
    EXPECT_LE(f, 1.0 + 1e-10);
  }
}

TEST(Fidelity, PureOverloadsAgree) {
  Rng rng(8);
  const ComplexVector psi = random_pure_state(8, rng);
  const ComplexVector phi = random_pure_state(8, rng);
  const ComplexMatrix rho = random_density_matrix(8, rng);
  EXPECT_NEAR(fidelity(psi, phi), std::abs(psi.dot(phi)), 1e-12);
  EXPECT_NEAR(fidelity(psi, rho), fidelity(ComplexMatrix(psi * psi.adjoint()), rho), 1e-9);
}

TEST(Fidelity, RejectsNonDensity) {
  EXPECT_THROW(fidelity(mat2(1, 0, 0, 1), mat2(1, 0, 0, 0)), NotPsdError);
  EXPECT_THROW(fidelity(mat2(1.5, 0, 0, -0.5), mat2(1, 0, 0, 0)), NotPsdError);
}

TEST(PartialTrace, ProductState) {
  const ComplexMatrix p00 = kron(mat2(1, 0, 0, 0), mat2(1, 0, 0, 0));
  EXPECT_LE(max_abs_entry(partial_trace_second(p00, 2, 2) - mat2(1, 0, 0, 0)), 1e-15);
}

TEST(PartialTrace, FactorizedInput) {
  Rng rng(9);
  const ComplexMatrix rho = random_density_matrix(2, rng);
  const ComplexMatrix sigma = 3.0 * random_density_matrix(4, rng);
  EXPECT_LE(max_abs_entry(partial_trace_second(kron(rho, sigma), 2, 4) - rho * sigma.trace()), 1e-13);
}

TEST(PartialTrace, BellState) {
  ComplexVector bell = ComplexVector::Zero(4);
  bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
  const ComplexMatrix reduced = partial_trace_second(bell * bell.adjoint(), 2, 2);
  EXPECT_LE(max_abs_entry(reduced - ComplexMatrix::Identity(2, 2) / 2.0), 1e-15);
}

TEST(PartialTrace, MiddleFactor) {
  Rng rng(10);
  const ComplexMatrix a = random_density_matrix(2, rng), b = random_density_matrix(3, rng),
                      c = random_density_matrix(2, rng);
  const std::array<Index, 3> dims{2, 3, 2};
  const std::array<bool, 3> keep{false, true, false};
  EXPECT_LE(max_abs_entry(partial_trace(kron(kron(a, b), c), dims, keep) - b), 1e-14);
  const std::array<bool, 3> outer_keep{true, false, true};
  EXPECT_LE(max_abs_entry(partial_trace(kron(kron(a, b), c), dims, outer_keep) - kron(a, c)), 1e-14);
}

TEST(PartialTrace, DimensionMismatch) {
  const std::array<Index, 2> dims{2, 3};
  const std::array<bool, 2> keep{true, false};
  EXPECT_THROW(partial_trace(ComplexMatrix::Identity(4, 4), dims, keep), DimensionError);
}

TEST(MatrixExp, Examples) {
  Rng rng(12);
  const ComplexMatrix a = random_hermitian(4, rng);
  EXPECT_LE(max_abs_entry(matrix_exp_hermitian(a, 0.0) - ComplexMatrix::Identity(4, 4)), 1e-13);

  const double eta = 0.3;
  const ComplexMatrix e = matrix_exp_hermitian(mat2(1, 0, 0, 0), -eta);
  EXPECT_LE(max_abs_entry(e - mat2(std::exp(-eta), 0, 0, 1)), 1e-15);

  const ComplexMatrix half = ComplexMatrix::Identity(2, 2) / 2.0;
  EXPECT_LE(max_abs_entry(matrix_exp_hermitian(half, -0.5) - std::exp(-0.25) * ComplexMatrix::Identity(2, 2)), 1e-15);
}

TEST(Kron, DimensionsAndBlocks) {
  const ComplexMatrix k = kron(pauli_z(), pauli_x());
  ASSERT_EQ(k.rows(), 4);
  EXPECT_EQ(k(0, 1), Complex(1.0));
  EXPECT_EQ(k(2, 3), Complex(-1.0));
  EXPECT_EQ(k(0, 2), Complex(0.0));
}

TEST(WalshHadamard, MatchesParitySigns) {
  std::vector<double> f{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> g = f;
  walsh_hadamard<double>(g);
  for (std::uint64_t j = 0; j < 8; ++j) {
    double s = 0.0;
    for (std::uint64_t k = 0; k < 8; ++k) s += parity_sign(j, k) * f[k];
    EXPECT_DOUBLE_EQ(g[j], s);
  }
}

TEST(QubitCount, PowersOfTwoOnly) {
  EXPECT_EQ(qubit_count(1), 0);
  EXPECT_EQ(qubit_count(16), 4);
  EXPECT_THROW(qubit_count(6), DimensionError);
}
