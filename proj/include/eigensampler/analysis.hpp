#pragma once

// Exact-diagonalization oracle and the discretization / success-rate error
// quantities for sampled imaginary-time evolution and for the lifted
// excited-state solve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eigensampler/engine.hpp"
#include "eigensampler/error.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/qlinalg.hpp"

namespace eigensampler {

inline EigenDecomposition exact_diagonalize(const ComplexMatrix& h) { return hermitian_eigen(h); }

/// Ground-truth spectrum with eigenspace-aware fidelities.
///
/// `fidelity(state, level)` is the fidelity against the exact eigenspace of
/// level `level` (eigenvalues within `degeneracy_tol` of it), which reduces to
/// the eigenvector fidelity for non-degenerate levels.
/// `cluster_fidelity` widens the subspace to all levels within `cluster_tol`,
/// e.g. the nearly degenerate pair at the bottom of a ferromagnetic chain.
class SpectrumOracle {
 public:
  explicit SpectrumOracle(const ComplexMatrix& h, double degeneracy_tol = 1e-8, double cluster_tol = 1e-3)
      : eig_(exact_diagonalize(h)), degeneracy_tol_(degeneracy_tol), cluster_tol_(cluster_tol) {}

  [[nodiscard]] const EigenDecomposition& decomposition() const { return eig_; }
  [[nodiscard]] double energy(std::size_t level) const { return eig_.eigenvalues(checked(level)); }
  [[nodiscard]] ComplexVector eigenvector(std::size_t level) const { return eig_.eigenvectors.col(checked(level)); }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(eig_.eigenvalues.size()); }

  /// Columns spanning the eigenspace of `level` within tolerance `tol`.
  [[nodiscard]] ComplexMatrix eigenspace(std::size_t level, double tol) const {
    const double e = energy(level);
    std::vector<Index> cols;
    for (Index k = 0; k < eig_.eigenvalues.size(); ++k)
      if (std::abs(eig_.eigenvalues(k) - e) <= tol) cols.push_back(k);
    ComplexMatrix v(eig_.eigenvectors.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) v.col(static_cast<Index>(c)) = eig_.eigenvectors.col(cols[c]);
    return v;
  }

  [[nodiscard]] double fidelity(const QuantumState& state, std::size_t level) const {
    return subspace_fidelity(state, eigenspace(level, degeneracy_tol_));
  }

  [[nodiscard]] double cluster_fidelity(const QuantumState& state, std::size_t level) const {
    return subspace_fidelity(state, eigenspace(level, cluster_tol_));
  }

  [[nodiscard]] double eigenvector_fidelity(const QuantumState& state, std::size_t level) const {
    return subspace_fidelity(state, eigenvector(level));
  }

  /// max over unit vectors in span(V) of the fidelity: sqrt(Tr(V† rho V)).
  static double subspace_fidelity(const QuantumState& state, const ComplexMatrix& v) {
    if (state.is_pure()) return std::sqrt(std::max(0.0, (v.adjoint() * state.vector()).squaredNorm()));
    return std::sqrt(std::max(0.0, (v.adjoint() * state.matrix() * v).trace().real()));
  }

 private:
  [[nodiscard]] Index checked(std::size_t level) const {
    if (level >= size()) throw InvalidArgument("oracle level out of range");
    return static_cast<Index>(level);
  }

  EigenDecomposition eig_;
  double degeneracy_tol_;
  double cluster_tol_;
};

/// ||e^{-N eta rho} - (I - eta rho)^N||_1, computed exactly in the eigenbasis
/// of rho.
inline double operator_error(const ComplexMatrix& rho, double eta, std::size_t steps) {
  if (rho.rows() > (Index{1} << 8)) throw DimensionError("operator_error: needs n <= 8");
  if (steps == 0) return 0.0;
  const EigenDecomposition eig = hermitian_eigen(rho);
  const double n = static_cast<double>(steps);
  double err = 0.0;
  for (double lam : eig.eigenvalues) err += std::abs(std::exp(-n * eta * lam) - std::pow(1.0 - eta * lam, n));
  return err;
}

/// The operator-error bound N eta^2 Tr(rho^2).
inline double operator_error_bound(const ComplexMatrix& rho, double eta, std::size_t steps) {
  return static_cast<double>(steps) * eta * eta * (rho * rho).trace().real();
}

struct StateErrorResult {
  double unnormalized = 0.0;    // ||sigma_f - sigma_T||_1
  double normalized = 0.0;      // distance of the normalized states
  double trace_sampled = 0.0;   // Tr sigma_f: exact acceptance probability of the sampled scheme
  double trace_exact = 0.0;     // Tr sigma_T
  double bound = 0.0;           // 4 N eta^2
};

/// Expected unnormalized state after N sampled steps, by full enumeration:
/// sigma <- sum_i p_i (I - eta P_i) sigma (I - eta P_i).
inline ComplexMatrix expected_sampled_state(const SamplingDistribution& dist, const ComplexMatrix& rho0, double eta,
                                            std::size_t steps) {
  if (dist.qubits > 6) throw DimensionError("expected_sampled_state: needs n <= 6");
  std::vector<ComplexVector> vecs;
  for (const auto& e : dist.entries) vecs.push_back(projector_vector(e.projector));
  ComplexMatrix sigma = rho0;
  for (std::size_t s = 0; s < steps; ++s) {
    ComplexMatrix next = ComplexMatrix::Zero(sigma.rows(), sigma.cols());
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      ComplexMatrix term = sigma;
      detail::vector_step_mixed(term, vecs[i], eta);
      next += dist.entries[i].probability * term;
    }
    sigma = hermitize(next);
  }
  return sigma;
}

/// Distance between the ensemble-expected state of the sampled scheme and
/// exact imaginary-time evolution sigma_T = e^{-T rho} rho0 e^{-T rho}.
inline StateErrorResult state_error(const SamplingDistribution& dist, const ComplexMatrix& rho0, double eta,
                                    std::size_t steps) {
  StateErrorResult r;
  r.bound = 4.0 * static_cast<double>(steps) * eta * eta;
  const ComplexMatrix sigma_f = expected_sampled_state(dist, rho0, eta, steps);
  const ComplexMatrix e = matrix_exp_hermitian(reconstruct_density(dist), -eta * static_cast<double>(steps));
  const ComplexMatrix sigma_t = hermitize(e * rho0 * e);
  r.trace_sampled = sigma_f.trace().real();
  r.trace_exact = sigma_t.trace().real();
  r.unnormalized = trace_norm(hermitize(sigma_f - sigma_t));
  r.normalized = trace_norm(hermitize(sigma_f / r.trace_sampled - sigma_t / r.trace_exact));
  return r;
}

/// Leading-order acceptance of the lifted solve: Tr(sigma_T) / 2^{p'_g N}.
inline double success_rate_excited(double found_probability, std::size_t steps, double sigma_t_trace) {
  if (found_probability < 0.0 || found_probability > 1.0) throw InvalidArgument("found probability must lie in [0, 1]");
  return sigma_t_trace / std::exp2(found_probability * static_cast<double>(steps));
}

/// Two-level picture of lifting an imperfect ground state: H' = diag(0, b) +
/// a |g><g| with |g> = |0> + delta |1>.
struct TwoLevelModel {
  double lift = 2.0;   // a
  double gap = 1.0;    // b
  double delta = 0.0;  // overlap of the approximate ground state with |1>
};

struct TwoLevelError {
  double delta_prime = 0.0;          // perturbative |a delta / (a - b - a delta^2)|
  double exact_overlap_error = 0.0;  // |<0|1'>| from exact 2x2 diagonalization
};

inline TwoLevelError two_level_excited_error(const TwoLevelModel& m) {
  if (!(m.lift > 0.0 && m.gap > 0.0 && m.delta >= 0.0)) throw InvalidArgument("two-level model needs a > 0, b > 0, delta >= 0");
  if (m.lift < 2.0 * m.gap) throw InvalidArgument("two-level model outside regime a >= 2b");
  if (m.delta > 0.1) throw InvalidArgument("two-level model outside regime delta <= 0.1");
  const double a = m.lift, b = m.gap, d = m.delta;
  TwoLevelError r;
  r.delta_prime = std::abs(a * d / (a - b - a * d * d));

  ComplexMatrix h(2, 2);
  h << a, a * d, a * d, b + a * d * d;
  const EigenDecomposition eig = hermitian_eigen(h);
  // The lower eigenvector is the lifted problem's ground state, i.e. the
  // extracted excited state; its |0> component is the propagated error.
  r.exact_overlap_error = std::abs(eig.eigenvectors(0, 0));
  return r;
}

/// Planning estimate 2^l delta0 for the error of level l.
inline double cascaded_error_projection(double delta0, int level) {
  if (level < 0) throw InvalidArgument("level must be non-negative");
  return std::ldexp(delta0, level);
}

/// Aggregate for one (distribution, eta, N) point.
struct ErrorReport {
  double gamma = 0.0;
  double operator_error = 0.0;
  double operator_bound = 0.0;
  double state_error = 0.0;
  double state_bound = 0.0;
  double normalized_state_error = 0.0;
  double success_deviation = 0.0;  // |Tr sigma_f - Tr sigma_T|
  double o_norm = 0.0;             // ||sigma_f - sigma_T||_1 / gamma, the constant c
  double min_rho_eigenvalue = 0.0;
  double gamma_regime = 0.0;       // gamma * e^{2 T lambda_min}; small means the normalized estimate applies

  [[nodiscard]] double operator_margin() const { return operator_bound - operator_error; }
  [[nodiscard]] double state_margin() const { return state_bound - state_error; }
};

inline ErrorReport error_report(const SamplingDistribution& dist, const ComplexMatrix& rho0, double eta,
                                std::size_t steps) {
  ErrorReport r;
  const ComplexMatrix rho = reconstruct_density(dist);
  r.gamma = static_cast<double>(steps) * eta * eta;
  r.operator_error = operator_error(rho, eta, steps);
  r.operator_bound = static_cast<double>(steps) * eta * eta;
  const StateErrorResult s = state_error(dist, rho0, eta, steps);
  r.state_error = s.unnormalized;
  r.state_bound = s.bound;
  r.normalized_state_error = s.normalized;
  r.success_deviation = std::abs(s.trace_sampled - s.trace_exact);
  r.o_norm = r.gamma > 0 ? s.unnormalized / r.gamma : 0.0;
  r.min_rho_eigenvalue = hermitian_eigen(rho).eigenvalues.minCoeff();
  r.gamma_regime = r.gamma * std::exp(2.0 * eta * static_cast<double>(steps) * r.min_rho_eigenvalue);
  return r;
}

}  // namespace eigensampler
