#pragma once

// Stochastic-sampling imaginary-time evolution with per-step post-selection.
//
// Each step draws a product projector P from the sampling distribution and
// applies the success branch (I - eta P) rho (I - eta P) / Tr[...]. In Forced
// mode the success branch is always taken and log2 of the step probability
// is accumulated; in MonteCarlo mode a Bernoulli draw decides, and a failure
// discards the trajectory and restarts it from the initial state on the same
// random stream.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "eigensampler/error.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/parallel.hpp"
#include "eigensampler/qlinalg.hpp"
#include "eigensampler/random.hpp"

namespace eigensampler {

inline constexpr double kAnnihilationThreshold = 1e-14;
inline constexpr std::size_t kRenormalizeEvery = 100;

enum class Representation { Pure, Mixed };

/// Pure (amplitude vector) or mixed (density matrix) n-qubit state together
/// with the log2 of the accumulated post-selection probability.
class QuantumState {
 public:
  double log2_success = 0.0;
  std::size_t steps_taken = 0;

  QuantumState() = default;

  static QuantumState pure(ComplexVector psi) {
    if (psi.size() > kMaxVectorDim) throw DimensionError("QuantumState: vector exceeds 2^20 entries");
    qubit_count(psi.size());
    QuantumState s;
    s.rep_ = std::move(psi);
    return s;
  }

  static QuantumState mixed(ComplexMatrix rho) {
    require_square(rho, "QuantumState");
    require_matrix_cap(rho, "QuantumState");
    qubit_count(rho.rows());
    QuantumState s;
    s.rep_ = std::move(rho);
    return s;
  }

  static QuantumState product(const ProductProjector& p, Representation rep = Representation::Pure) {
    return QuantumState::pure(projector_vector(p)).as(rep);
  }

  /// |+>^{⊗n}.
  static QuantumState plus(int qubits, Representation rep = Representation::Pure) {
    return product({Basis::X, 0, qubits}, rep);
  }

  /// |0>^{⊗n}.
  static QuantumState zero(int qubits, Representation rep = Representation::Pure) {
    return product({Basis::Z, 0, qubits}, rep);
  }

  [[nodiscard]] bool is_pure() const { return std::holds_alternative<ComplexVector>(rep_); }
  [[nodiscard]] Representation representation() const {
    return is_pure() ? Representation::Pure : Representation::Mixed;
  }
  [[nodiscard]] Index dim() const { return is_pure() ? vector().size() : matrix().rows(); }
  [[nodiscard]] int qubits() const { return qubit_count(dim()); }

  [[nodiscard]] const ComplexVector& vector() const { return std::get<ComplexVector>(rep_); }
  [[nodiscard]] ComplexVector& vector() { return std::get<ComplexVector>(rep_); }
  [[nodiscard]] const ComplexMatrix& matrix() const { return std::get<ComplexMatrix>(rep_); }
  [[nodiscard]] ComplexMatrix& matrix() { return std::get<ComplexMatrix>(rep_); }

  /// Density matrix of the state (outer product for pure states).
  [[nodiscard]] ComplexMatrix density() const {
    if (is_pure()) {
      if (dim() > kMaxMatrixDim) throw DimensionError("density: pure state too large for a dense matrix");
      return vector() * vector().adjoint();
    }
    return matrix();
  }

  /// Converts to the requested representation. Mixed -> Pure is only allowed
  /// for rank-1 density matrices.
  [[nodiscard]] QuantumState as(Representation rep) const {
    if (rep == representation()) return *this;
    QuantumState out;
    out.log2_success = log2_success;
    out.steps_taken = steps_taken;
    if (rep == Representation::Mixed) {
      out.rep_ = density();
      return out;
    }
    const EigenDecomposition eig = hermitian_eigen(matrix());
    const Index top = eig.eigenvalues.size() - 1;
    if (std::abs(eig.eigenvalues(top) - 1.0) > 1e-9)
      throw InvalidArgument("QuantumState::as(Pure): density matrix is not rank-1");
    out.rep_ = ComplexVector(eig.eigenvectors.col(top));
    return out;
  }

  /// Norm (pure) or trace (mixed).
  [[nodiscard]] double weight() const {
    return is_pure() ? vector().squaredNorm() : matrix().trace().real();
  }

  void scale_weight(double factor) {
    if (is_pure())
      vector() *= std::sqrt(factor);
    else
      matrix() *= factor;
  }

  /// Restores unit norm/trace and, for mixed states, Hermiticity.
  void renormalize() {
    if (is_pure()) {
      vector() /= vector().norm();
    } else {
      ComplexMatrix& m = matrix();
      m = hermitize(m);
      m /= m.trace().real();
    }
  }

  /// Checks the representation invariants; throws on violation.
  void validate() const {
    if (is_pure()) {
      if (std::abs(vector().norm() - 1.0) > 1e-10) throw InvalidArgument("pure state is not normalized");
      return;
    }
    const ComplexMatrix& m = matrix();
    if (hermitian_residue(m) > 1e-10) throw NotHermitianError("mixed state is not Hermitian");
    if (std::abs(m.trace().real() - 1.0) > 1e-10) throw InvalidArgument("mixed state trace is not 1");
    if (hermitian_eigen(hermitize(m)).eigenvalues.minCoeff() < -kPsdTol)
      throw NotPsdError("mixed state is not positive semidefinite");
  }

 private:
  std::variant<ComplexVector, ComplexMatrix> rep_{ComplexVector(ComplexVector::Ones(1))};
};

// ---------------------------------------------------------------------------
// Energies

/// <psi|H|psi> or Tr(rho H).
inline double energy_expectation(const QuantumState& state, const ComplexMatrix& h) {
  if (h.rows() != state.dim() || h.cols() != state.dim()) throw DimensionError("energy_expectation: dimension mismatch");
  if (state.is_pure()) return state.vector().dot(h * state.vector()).real();
  return (state.matrix().cwiseProduct(h.transpose())).sum().real();
}

namespace detail {

/// Diagonal of W rho W with W the normalized n-qubit Hadamard.
inline RealVector hadamard_diagonal(const ComplexMatrix& rho) {
  ComplexMatrix a = rho;
  const Index d = a.rows();
  for (Index j = 0; j < d; ++j) walsh_hadamard<Complex>(std::span<Complex>(a.col(j).data(), static_cast<std::size_t>(d)));
  ComplexMatrix b = a.transpose();
  for (Index j = 0; j < d; ++j) walsh_hadamard<Complex>(std::span<Complex>(b.col(j).data(), static_cast<std::size_t>(d)));
  RealVector diag(d);
  for (Index k = 0; k < d; ++k) diag(k) = b(k, k).real() / static_cast<double>(d);
  return diag;
}

}  // namespace detail

/// Energy from the term structure: O(n 2^n) per X-basis term for pure states,
/// no dense Hamiltonian needed.
inline double energy_expectation(const QuantumState& state, std::span<const HamiltonianTerm> terms) {
  const int n = common_qubit_count(terms);
  if (state.qubits() != n) throw DimensionError("energy_expectation: qubit count mismatch");
  const Index d = state.dim();
  double e = 0.0;
  if (state.is_pure()) {
    const ComplexVector& psi = state.vector();
    std::vector<Complex> xamp;
    for (const auto& t : terms) {
      const auto spec = t.spectrum();
      if (t.basis() == Basis::Z) {
        for (Index k = 0; k < d; ++k) e += spec[static_cast<std::size_t>(k)] * std::norm(psi(k));
      } else {
        if (xamp.empty()) {
          xamp.assign(psi.data(), psi.data() + d);
          walsh_hadamard<Complex>(xamp);
        }
        double acc = 0.0;
        for (Index k = 0; k < d; ++k) acc += spec[static_cast<std::size_t>(k)] * std::norm(xamp[static_cast<std::size_t>(k)]);
        e += acc / static_cast<double>(d);
      }
    }
    return e;
  }
  const ComplexMatrix& rho = state.matrix();
  RealVector xdiag;
  for (const auto& t : terms) {
    const auto spec = t.spectrum();
    if (t.basis() == Basis::Z) {
      for (Index k = 0; k < d; ++k) e += spec[static_cast<std::size_t>(k)] * rho(k, k).real();
    } else {
      if (xdiag.size() == 0) xdiag = detail::hadamard_diagonal(rho);
      for (Index k = 0; k < d; ++k) e += spec[static_cast<std::size_t>(k)] * xdiag(k);
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Sampling

/// Walker/Vose alias table: O(1) draws from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    if (n == 0) throw InvalidArgument("AliasTable: empty distribution");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvalidArgument("AliasTable: negative or NaN weight");
      total += w;
    }
    if (!(total > 0.0)) throw InvalidArgument("AliasTable: weights sum to zero");

    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const std::uint32_t s = small.back();
      small.pop_back();
      const std::uint32_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::uint32_t i : large) prob_[i] = 1.0, alias_[i] = i;
    for (std::uint32_t i : small) prob_[i] = 1.0, alias_[i] = i;
  }

  [[nodiscard]] std::size_t size() const { return prob_.size(); }

  /// One uniform draw per sample; the integer part picks the column and the
  /// fractional part decides between the column and its alias.
  std::size_t sample(Rng& rng) const {
    const double u = uniform01(rng) * static_cast<double>(prob_.size());
    std::size_t column = static_cast<std::size_t>(u);
    if (column >= prob_.size()) column = prob_.size() - 1;
    const double frac = u - static_cast<double>(column);
    return frac < prob_[column] ? column : alias_[column];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

inline AliasTable make_alias_table(const SamplingDistribution& dist) {
  std::vector<double> w;
  w.reserve(dist.entries.size());
  for (const auto& e : dist.entries) w.push_back(e.probability);
  return AliasTable(w);
}

/// Draws one projector. Builds the alias table on every call; hot loops keep
/// their own table via make_alias_table.
inline ProductProjector sample_projector(const SamplingDistribution& dist, Rng& rng) {
  if (dist.entries.empty()) throw InvalidArgument("sample_projector: empty distribution");
  return dist.entries[make_alias_table(dist).sample(rng)].projector;
}

// ---------------------------------------------------------------------------
// Single projector step

namespace detail {

inline void check_eta(double eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw InvalidArgument("step size eta must lie in [0, 1)");
}

inline void check_success(double success) {
  if (!(success > kAnnihilationThreshold))
    throw AnnihilatedStateError("post-selection probability " + std::to_string(success) + " annihilated the state");
}

/// (I - eta P) psi for a product projector, unnormalized. Returns <p|psi>.
inline Complex product_step_pure(ComplexVector& psi, const ProductProjector& p, double eta) {
  const Index d = psi.size();
  if (p.basis == Basis::Z) {
    const Index b = static_cast<Index>(p.bits);
    const Complex ov = psi(b);
    psi(b) -= eta * ov;
    return ov;
  }
  const double amp = std::pow(2.0, -0.5 * p.qubits);
  Complex acc = 0.0;
  for (Index k = 0; k < d; ++k) {
    if (std::popcount(static_cast<std::uint64_t>(k) & p.bits) & 1)
      acc -= psi(k);
    else
      acc += psi(k);
  }
  const Complex ov = amp * acc;
  const Complex delta = eta * amp * ov;
  for (Index k = 0; k < d; ++k) {
    if (std::popcount(static_cast<std::uint64_t>(k) & p.bits) & 1)
      psi(k) += delta;
    else
      psi(k) -= delta;
  }
  return ov;
}

/// (I - eta pp†) rho (I - eta pp†) for a unit vector p, unnormalized,
/// via the rank-1 update rho - eta(w p† + p w†) + eta^2 <p|rho|p> p p†.
inline void vector_step_mixed(ComplexMatrix& rho, const ComplexVector& p, double eta) {
  const ComplexVector w = rho * p;
  const Complex pwp = p.dot(w);
  rho.noalias() -= eta * (w * p.adjoint());
  rho.noalias() -= eta * (p * w.adjoint());
  rho.noalias() += (eta * eta * pwp) * (p * p.adjoint());
}

inline void product_step_mixed(ComplexMatrix& rho, const ProductProjector& p, double eta) {
  if (p.basis == Basis::Z) {
    // Scaling row b and column b by (1 - eta) is exactly the rank-1 update.
    const Index b = static_cast<Index>(p.bits);
    rho.col(b) *= (1.0 - eta);
    rho.row(b) *= (1.0 - eta);
    return;
  }
  vector_step_mixed(rho, projector_vector(p), eta);
}

}  // namespace detail

/// Applies (I - eta P) in place and renormalizes; returns the success
/// probability Tr[(I - eta P) rho (I - eta P)] of the step.
inline double apply_projector_step_inplace(QuantumState& state, const ProductProjector& p, double eta) {
  detail::check_eta(eta);
  if (p.qubits != state.qubits()) throw DimensionError("projector and state act on different qubit counts");
  const double before = state.weight();
  if (state.is_pure())
    detail::product_step_pure(state.vector(), p, eta);
  else
    detail::product_step_mixed(state.matrix(), p, eta);
  const double success = state.weight() / before;
  detail::check_success(success);
  state.scale_weight(1.0 / state.weight());
  state.log2_success += std::log2(success);
  ++state.steps_taken;
  return success;
}

struct StepResult {
  QuantumState state;
  double success_prob = 1.0;
};

inline StepResult apply_projector_step(const QuantumState& state, const ProductProjector& p, double eta) {
  StepResult r{state, 1.0};
  r.success_prob = apply_projector_step_inplace(r.state, p, eta);
  return r;
}

// ---------------------------------------------------------------------------
// Run configuration and trajectory records

struct ForcedPolicy {
  friend bool operator==(const ForcedPolicy&, const ForcedPolicy&) = default;
};
struct MonteCarloPolicy {
  std::size_t max_restarts = 0;
  friend bool operator==(const MonteCarloPolicy&, const MonteCarloPolicy&) = default;
};
using Policy = std::variant<ForcedPolicy, MonteCarloPolicy>;

struct RunConfig {
  double eta = 0.05;
  std::size_t steps = 1000;
  Policy policy = ForcedPolicy{};
  Representation representation = Representation::Pure;
  std::uint64_t seed = 0;
  std::size_t record_every = 10;

  [[nodiscard]] double total_time() const { return eta * static_cast<double>(steps); }
  /// N eta^2, the parameter controlling discretization error.
  [[nodiscard]] double gamma() const { return eta * eta * static_cast<double>(steps); }
  [[nodiscard]] bool forced() const { return std::holds_alternative<ForcedPolicy>(policy); }

  void validate() const {
    detail::check_eta(eta);
    if (steps < 1) throw InvalidArgument("steps must be at least 1");
    if (record_every < 1) throw InvalidArgument("record_every must be at least 1");
  }
};

enum class TrajectoryStatus { Completed, Discarded };

struct TrajectoryRow {
  std::size_t step = 0;
  double imaginary_time = 0.0;
  std::string projector_id;
  double step_success_prob = 1.0;
  double energy = 0.0;
  double fidelity = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const TrajectoryRow& a, const TrajectoryRow& b) {
    // Bitwise comparison so NaN fidelities compare equal to themselves.
    auto same = [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; };
    return a.step == b.step && same(a.imaginary_time, b.imaginary_time) && a.projector_id == b.projector_id &&
           same(a.step_success_prob, b.step_success_prob) && same(a.energy, b.energy) && same(a.fidelity, b.fidelity);
  }
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  TrajectoryStatus status = TrajectoryStatus::Completed;
  std::size_t restarts = 0;
  std::vector<std::size_t> discarded_at;  // failing step of every discarded attempt

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

struct RunResult {
  QuantumState state;
  TrajectoryRecord record;
};

struct Observation {
  double energy = 0.0;
  double fidelity = std::numeric_limits<double>::quiet_NaN();
};

/// Outcome of one step as reported by a stepper: the success probability of
/// the branch that was applied and an index into the label table.
struct StepOutcome {
  double success_prob = 1.0;
  std::size_t label = 0;
};

/// Shared trajectory loop. `stepper(state, step, rng)` applies the forced
/// success branch of one step in place and returns its StepOutcome;
/// `observe(state)` produces the recorded energy/fidelity; `labels` maps
/// StepOutcome::label to a projector id.
template <class Stepper, class Observer>
RunResult run_trajectory(const RunConfig& config, const QuantumState& init, Stepper&& stepper, Observer&& observe,
                         std::span<const std::string> labels) {
  config.validate();
  const auto* mc = std::get_if<MonteCarloPolicy>(&config.policy);
  Rng rng(config.seed);
  TrajectoryRecord record;

  for (;;) {
    QuantumState state = init.as(config.representation);
    state.log2_success = 0.0;
    state.steps_taken = 0;
    record.rows.clear();
    {
      const Observation o = observe(state);
      record.rows.push_back({0, 0.0, "init", 1.0, o.energy, o.fidelity});
    }

    bool discarded = false;
    for (std::size_t step = 1; step <= config.steps; ++step) {
      const StepOutcome out = stepper(state, step, rng);
      if (mc != nullptr && uniform01(rng) >= out.success_prob) {
        record.discarded_at.push_back(step);
        discarded = true;
        break;
      }
      if (step % kRenormalizeEvery == 0) state.renormalize();
      if (step % config.record_every == 0 || step == config.steps) {
        const Observation o = observe(state);
        record.rows.push_back({step, config.eta * static_cast<double>(step), labels[out.label], out.success_prob,
                               o.energy, o.fidelity});
      }
    }

    if (!discarded) {
      record.status = TrajectoryStatus::Completed;
      return {std::move(state), std::move(record)};
    }
    if (record.restarts >= mc->max_restarts) {
      record.status = TrajectoryStatus::Discarded;
      return {std::move(state), std::move(record)};
    }
    ++record.restarts;
  }
}

/// Labels for the entries of a distribution ("Z:0110", ...).
inline std::vector<std::string> distribution_labels(const SamplingDistribution& dist) {
  std::vector<std::string> labels;
  labels.reserve(dist.entries.size());
  for (const auto& e : dist.entries) labels.push_back(e.projector.id());
  return labels;
}

/// Stepper drawing from a sampling distribution.
class ProjectorStepper {
 public:
  ProjectorStepper(const SamplingDistribution& dist, double eta)
      : dist_(&dist), table_(make_alias_table(dist)), eta_(eta) {}

  StepOutcome operator()(QuantumState& state, std::size_t /*step*/, Rng& rng) const {
    const std::size_t i = table_.sample(rng);
    return {apply_projector_step_inplace(state, dist_->entries[i].projector, eta_), i};
  }

 private:
  const SamplingDistribution* dist_;
  AliasTable table_;
  double eta_;
};

/// Single attempt semantics are left to the caller: the returned record says
/// whether the trajectory completed or was discarded.
template <class Observer>
RunResult attempt_ite(const RunConfig& config, const SamplingDistribution& dist, const QuantumState& init,
                      Observer&& observe) {
  if (dist.qubits != init.qubits()) throw DimensionError("run_ite: distribution and state dimensions differ");
  const auto labels = distribution_labels(dist);
  return run_trajectory(config, init, ProjectorStepper(dist, config.eta), observe, labels);
}

namespace detail {

inline RunResult require_completed(RunResult r) {
  if (r.record.status == TrajectoryStatus::Discarded)
    throw RestartsExhaustedError("MonteCarlo run discarded after " + std::to_string(r.record.restarts) + " restarts");
  return r;
}

}  // namespace detail

/// Algorithm loop with the dense Hamiltonian used for recorded energies.
inline RunResult run_ite(const RunConfig& config, const SamplingDistribution& dist, const QuantumState& init,
                         const ComplexMatrix& h) {
  return detail::require_completed(
      attempt_ite(config, dist, init, [&](const QuantumState& s) { return Observation{energy_expectation(s, h)}; }));
}

/// Same loop with energies evaluated from the term structure.
inline RunResult run_ite(const RunConfig& config, const SamplingDistribution& dist, const QuantumState& init,
                         std::span<const HamiltonianTerm> terms) {
  return detail::require_completed(attempt_ite(
      config, dist, init, [&](const QuantumState& s) { return Observation{energy_expectation(s, terms)}; }));
}

/// Runs `size` trajectories; trajectory k uses the stream derived from
/// (config.seed, k). Results are keyed by k regardless of scheduling.
template <class Fn>
auto run_ensemble(const RunConfig& config, std::size_t size, Fn&& run_one) {
  return parallel_map(size, [&](std::size_t k) {
    RunConfig c = config;
    c.seed = derive_stream_seed(config.seed, k);
    return run_one(c, k);
  });
}

/// Leading-order prediction of the overall acceptance probability:
/// Tr(e^{-T rho} rho0 e^{-T rho}) with T = eta * steps.
inline double estimate_success_rate(const SamplingDistribution& dist, const QuantumState& init, double eta,
                                    std::size_t steps) {
  if (dist.qubits > 10) throw DimensionError("estimate_success_rate: needs n <= 10");
  const double t = eta * static_cast<double>(steps);
  const ComplexMatrix e = matrix_exp_hermitian(reconstruct_density(dist), -t);
  const ComplexMatrix rho0 = init.density();
  return (e * rho0 * e).trace().real();
}

}  // namespace eigensampler
