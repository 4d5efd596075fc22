#pragma once

// Dense complex linear algebra over 2^n-dimensional spaces.
//
// Every routine here is a pure function of its inputs. Matrices are capped at
// dimension 2^12 and vectors at 2^20; anything larger is rejected with
// DimensionError rather than silently allocating gigabytes.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigensampler/error.hpp"

namespace eigensampler {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr Index kMaxMatrixDim = Index{1} << 12;
inline constexpr Index kMaxVectorDim = Index{1} << 20;

/// Tolerances shared across modules.
inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kPsdTol = 1e-8;
inline constexpr double kSqrtClamp = 1e-12;

struct EigenDecomposition {
  RealVector eigenvalues;     // ascending
  ComplexMatrix eigenvectors;  // orthonormal columns
};

inline bool is_power_of_two(Index d) { return d > 0 && (d & (d - 1)) == 0; }

/// Number of qubits n with 2^n == dim.
inline int qubit_count(Index dim) {
  if (!is_power_of_two(dim))
    throw DimensionError("dimension " + std::to_string(dim) + " is not a power of two");
  return std::countr_zero(static_cast<std::uint64_t>(dim));
}

inline void require_square(const ComplexMatrix& a, const char* what) {
  if (a.rows() != a.cols())
    throw DimensionError(std::string(what) + ": matrix is not square (" + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + ")");
}

inline void require_matrix_cap(const ComplexMatrix& a, const char* what) {
  if (a.rows() > kMaxMatrixDim || a.cols() > kMaxMatrixDim)
    throw DimensionError(std::string(what) + ": dimension exceeds cap 2^12");
}

inline double max_abs_entry(const ComplexMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// max_ij |A - A†|_ij.
inline double hermitian_residue(const ComplexMatrix& a) {
  require_square(a, "hermitian_residue");
  return max_abs_entry(a - a.adjoint());
}

/// The Hermitian flag: residue at most 1e-12, scaled by the matrix magnitude
/// when that exceeds one.
inline bool is_hermitian(const ComplexMatrix& a, double tol = kHermitianTol) {
  if (a.rows() != a.cols()) return false;
  return hermitian_residue(a) <= tol * std::max(1.0, max_abs_entry(a));
}

/// (A + A†) / 2, used to control per-step drift.
inline ComplexMatrix hermitize(const ComplexMatrix& a) {
  require_square(a, "hermitize");
  return (a + a.adjoint()) * 0.5;
}

inline void require_hermitian(const ComplexMatrix& a, const char* what) {
  require_square(a, what);
  if (!is_hermitian(a))
    throw NotHermitianError(std::string(what) + ": matrix is not Hermitian (residue " +
                            std::to_string(hermitian_residue(a)) + ")");
}

inline EigenDecomposition hermitian_eigen(const ComplexMatrix& a) {
  require_matrix_cap(a, "hermitian_eigen");
  require_hermitian(a, "hermitian_eigen");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(hermitize(a));
  if (solver.info() != Eigen::Success) throw Error("hermitian_eigen: eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// V f(Λ) V† for a real function f of the eigenvalues.
template <class F>
ComplexMatrix spectral_apply(const EigenDecomposition& eig, F&& f) {
  const RealVector mapped = eig.eigenvalues.unaryExpr(f);
  return eig.eigenvectors * mapped.asDiagonal() * eig.eigenvectors.adjoint();
}

inline ComplexMatrix reconstruct(const EigenDecomposition& eig) {
  return spectral_apply(eig, [](double x) { return x; });
}

inline RealVector singular_values(const ComplexMatrix& a) {
  require_matrix_cap(a, "singular_values");
  Eigen::BDCSVD<ComplexMatrix> svd(a);
  return svd.singularValues();
}

/// Sum of singular values.
inline double trace_norm(const ComplexMatrix& a) {
  require_square(a, "trace_norm");
  if (a.size() == 0) return 0.0;
  if (is_hermitian(a)) return hermitian_eigen(a).eigenvalues.cwiseAbs().sum();
  return singular_values(a).sum();
}

/// Largest singular value.
inline double spectral_norm(const ComplexMatrix& a) {
  if (a.size() == 0) return 0.0;
  return singular_values(a).maxCoeff();
}

/// e^{scale * A} for Hermitian A.
inline ComplexMatrix matrix_exp_hermitian(const ComplexMatrix& a, double scale) {
  const EigenDecomposition eig = hermitian_eigen(a);
  return spectral_apply(eig, [scale](double x) { return std::exp(scale * x); });
}

/// Principal square root of a PSD matrix. Eigenvalues below -1e-12 are clamped
/// to zero before the root is taken.
inline ComplexMatrix psd_sqrt(const ComplexMatrix& a) {
  const EigenDecomposition eig = hermitian_eigen(a);
  return spectral_apply(eig, [](double x) { return x < kSqrtClamp ? 0.0 : std::sqrt(x); });
}

inline void require_density(const ComplexMatrix& rho, const char* what) {
  require_hermitian(rho, what);
  const double tr = rho.trace().real();
  if (std::abs(tr - 1.0) > 1e-8)
    throw NotPsdError(std::string(what) + ": trace " + std::to_string(tr) + " is not 1");
  const double lo = hermitian_eigen(rho).eigenvalues.minCoeff();
  if (lo < -kPsdTol)
    throw NotPsdError(std::string(what) + ": negative eigenvalue " + std::to_string(lo));
}

/// Uhlmann fidelity Tr sqrt(sqrt(r1) r2 sqrt(r1)). When r1 is pure the
/// equivalent sqrt(Tr(r1 r2)) is used.
inline double fidelity(const ComplexMatrix& rho1, const ComplexMatrix& rho2) {
  require_square(rho1, "fidelity");
  if (rho1.rows() != rho2.rows() || rho1.cols() != rho2.cols())
    throw DimensionError("fidelity: shape mismatch");
  require_density(rho1, "fidelity(rho1)");
  require_density(rho2, "fidelity(rho2)");
  const double purity = rho1.squaredNorm();
  if (std::abs(purity - 1.0) <= 1e-10) {
    const double overlap = (rho1 * rho2).trace().real();
    return std::sqrt(std::max(0.0, overlap));
  }
  const ComplexMatrix s = psd_sqrt(rho1);
  const ComplexMatrix m = hermitize(s * rho2 * s);
  const RealVector ev = hermitian_eigen(m).eigenvalues;
  double f = 0.0;
  for (double x : ev) f += x < kSqrtClamp ? 0.0 : std::sqrt(x);
  return f;
}

/// Fidelity between pure |psi> and a density matrix: sqrt(<psi|rho|psi>).
inline double fidelity(const ComplexVector& psi, const ComplexMatrix& rho) {
  if (psi.size() != rho.rows()) throw DimensionError("fidelity: shape mismatch");
  return std::sqrt(std::max(0.0, psi.dot(rho * psi).real()));
}

/// Fidelity between two pure states: |<psi|phi>|.
inline double fidelity(const ComplexVector& psi, const ComplexVector& phi) {
  if (psi.size() != phi.size()) throw DimensionError("fidelity: shape mismatch");
  return std::abs(psi.dot(phi));
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline ComplexMatrix outer(const ComplexVector& a, const ComplexVector& b) {
  return a * b.adjoint();
}

/// Partial trace over a tensor factorization. `dims` lists the factor
/// dimensions (first factor most significant); `keep[k]` marks factors that
/// survive. The result acts on the kept factors in their original order.
inline ComplexMatrix partial_trace(const ComplexMatrix& a, std::span<const Index> dims,
                                   std::span<const bool> keep) {
  require_square(a, "partial_trace");
  if (dims.size() != keep.size() || dims.empty())
    throw DimensionError("partial_trace: factorization and keep mask differ in length");
  const Index total = std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
  if (total != a.rows()) throw DimensionError("partial_trace: factor dimensions do not multiply to matrix size");
  for (Index d : dims)
    if (d < 1) throw DimensionError("partial_trace: factor dimension < 1");

  const std::size_t k = dims.size();
  Index kept_dim = 1;
  Index traced_dim = 1;
  for (std::size_t f = 0; f < k; ++f) (keep[f] ? kept_dim : traced_dim) *= dims[f];

  // Digit strides of every factor in the full index.
  std::vector<Index> stride(k);
  Index s = 1;
  for (std::size_t f = k; f-- > 0;) {
    stride[f] = s;
    s *= dims[f];
  }
  // Map (kept index, traced index) -> full index.
  auto compose = [&](Index kept, Index traced) {
    Index full = 0;
    for (std::size_t f = k; f-- > 0;) {
      Index digit;
      if (keep[f]) {
        digit = kept % dims[f];
        kept /= dims[f];
      } else {
        digit = traced % dims[f];
        traced /= dims[f];
      }
      full += digit * stride[f];
    }
    return full;
  };

  std::vector<Index> table(static_cast<std::size_t>(kept_dim * traced_dim));
  for (Index kk = 0; kk < kept_dim; ++kk)
    for (Index t = 0; t < traced_dim; ++t) table[static_cast<std::size_t>(kk * traced_dim + t)] = compose(kk, t);

  ComplexMatrix out = ComplexMatrix::Zero(kept_dim, kept_dim);
  for (Index i = 0; i < kept_dim; ++i)
    for (Index j = 0; j < kept_dim; ++j) {
      Complex acc = 0.0;
      for (Index t = 0; t < traced_dim; ++t)
        acc += a(table[static_cast<std::size_t>(i * traced_dim + t)],
                 table[static_cast<std::size_t>(j * traced_dim + t)]);
      out(i, j) = acc;
    }
  return out;
}

/// Convenience for the bipartite A ⊗ B split: trace out B.
inline ComplexMatrix partial_trace_second(const ComplexMatrix& a, Index dim_a, Index dim_b) {
  const Index dims[] = {dim_a, dim_b};
  const bool keep[] = {true, false};
  return partial_trace(a, dims, keep);
}

/// In-place unnormalized fast Walsh-Hadamard transform; length must be 2^n.
template <class T>
void walsh_hadamard(std::span<T> data) {
  const std::size_t n = data.size();
  for (std::size_t h = 1; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const T x = data[j];
        const T y = data[j + h];
        data[j] = x + y;
        data[j + h] = x - y;
      }
}

/// (-1)^{popcount(a & b)}.
inline double parity_sign(std::uint64_t a, std::uint64_t b) {
  return (std::popcount(a & b) & 1) ? -1.0 : 1.0;
}

}  // namespace eigensampler
