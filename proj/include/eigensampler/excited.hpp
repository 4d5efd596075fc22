#pragma once

// Excited states by lifting: once an eigenstate P_g is known, mix it into the
// sampling distribution (or apply it as a deterministic filter) so that the
// next eigenstate becomes the effective ground state.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eigensampler/analysis.hpp"
#include "eigensampler/engine.hpp"
#include "eigensampler/error.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/qlinalg.hpp"

namespace eigensampler {

/// Unit-trace PSD operator stored as Q diag(w) Q† with orthonormal Q.
class DenseProjector {
 public:
  DenseProjector(ComplexMatrix basis, RealVector weights) : q_(std::move(basis)), w_(std::move(weights)) {
    if (q_.cols() != w_.size() || q_.cols() == 0) throw DimensionError("DenseProjector: factor shape mismatch");
    qubit_count(q_.rows());
    if (w_.minCoeff() < 0.0) throw NotPsdError("DenseProjector: negative weight");
    if (std::abs(w_.sum() - 1.0) > 1e-10) throw InvalidArgument("DenseProjector: weights must sum to 1");
    const ComplexMatrix gram = q_.adjoint() * q_;
    if ((gram - ComplexMatrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-8)
      throw InvalidArgument("DenseProjector: basis is not orthonormal");
  }

  static DenseProjector from_vector(const ComplexVector& psi) {
    const double n = psi.norm();
    if (!(n > 0.0)) throw InvalidArgument("DenseProjector: zero vector");
    return {ComplexMatrix(psi / n), RealVector::Ones(1)};
  }

  /// Rank-truncated eigendecomposition of a density matrix; eigenvalues below
  /// `cutoff` times the largest are dropped and the rest renormalized.
  static DenseProjector from_density(const ComplexMatrix& rho, double cutoff = 1e-12) {
    require_density(rho, "DenseProjector");
    const EigenDecomposition eig = hermitian_eigen(rho);
    const double top = eig.eigenvalues.maxCoeff();
    std::vector<Index> keep;
    for (Index k = 0; k < eig.eigenvalues.size(); ++k)
      if (eig.eigenvalues(k) > cutoff * top) keep.push_back(k);
    ComplexMatrix q(rho.rows(), static_cast<Index>(keep.size()));
    RealVector w(static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      q.col(static_cast<Index>(c)) = eig.eigenvectors.col(keep[c]);
      w(static_cast<Index>(c)) = eig.eigenvalues(keep[c]);
    }
    w /= w.sum();
    return {std::move(q), std::move(w)};
  }

  static DenseProjector from_state(const QuantumState& s) {
    return s.is_pure() ? from_vector(s.vector()) : from_density(s.matrix());
  }

  /// A A† / Tr(A A†) for an arbitrary factor A, via a thin SVD.
  static DenseProjector from_factor(const ComplexMatrix& a, double cutoff = 1e-12) {
    Eigen::BDCSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU);
    const RealVector s = svd.singularValues();
    const double top = s.size() ? s(0) * s(0) : 0.0;
    if (!(top > 0.0)) throw InvalidArgument("DenseProjector: zero factor");
    Index r = 0;
    while (r < s.size() && s(r) * s(r) > cutoff * top) ++r;
    RealVector w = s.head(r).cwiseAbs2();
    w /= w.sum();
    return {svd.matrixU().leftCols(r), std::move(w)};
  }

  [[nodiscard]] const ComplexMatrix& basis() const { return q_; }
  [[nodiscard]] const RealVector& weights() const { return w_; }
  [[nodiscard]] Index rank() const { return w_.size(); }
  [[nodiscard]] Index dim() const { return q_.rows(); }
  [[nodiscard]] int qubits() const { return qubit_count(q_.rows()); }

  [[nodiscard]] ComplexMatrix matrix() const { return q_ * w_.asDiagonal() * q_.adjoint(); }

  /// <psi|P|psi>.
  [[nodiscard]] double expectation(const ComplexVector& psi) const {
    return (q_.adjoint() * psi).cwiseAbs2().dot(w_);
  }

 private:
  ComplexMatrix q_;
  RealVector w_;
};

/// Uniform convex combination of found projectors.
inline DenseProjector blend_projectors(std::span<const DenseProjector> found) {
  if (found.empty()) throw InvalidArgument("blend_projectors: empty list");
  if (found.size() == 1) return found.front();
  const Index dim = found.front().dim();
  Index cols = 0;
  for (const auto& p : found) {
    if (p.dim() != dim) throw DimensionError("blend_projectors: dimension mismatch");
    cols += p.rank();
  }
  ComplexMatrix a(dim, cols);
  Index at = 0;
  const double share = 1.0 / static_cast<double>(found.size());
  for (const auto& p : found) {
    a.middleCols(at, p.rank()) = p.basis() * (p.weights() * share).cwiseSqrt().asDiagonal();
    at += p.rank();
  }
  return DenseProjector::from_factor(a);
}

struct StochasticLift {
  double p_lift = 1.0;
};
struct DeterministicLift {
  std::size_t period = 2;
};
using LiftSchedule = std::variant<StochasticLift, DeterministicLift>;

enum class FilterMethod { StateBased, ExactExponential };

/// Smallest lift weight for which the found state is guaranteed to sit above
/// every other level of the lifted mixture: 1 / (2^n - 1).
inline double lift_threshold(int qubits) { return 1.0 / (std::ldexp(1.0, qubits) - 1.0); }

/// Fraction of steps that apply the filter.
inline double filter_fraction(const LiftSchedule& s) {
  if (const auto* st = std::get_if<StochasticLift>(&s)) return st->p_lift / (1.0 + st->p_lift);
  return 1.0 / static_cast<double>(std::get<DeterministicLift>(s).period);
}

inline void validate_schedule(const LiftSchedule& s) {
  if (const auto* st = std::get_if<StochasticLift>(&s)) {
    if (!(st->p_lift > 0.0)) throw InvalidArgument("p_lift must be positive");
  } else if (std::get<DeterministicLift>(s).period < 1) {
    throw InvalidArgument("filter period must be at least 1");
  }
}

/// Whether the schedule's filter weight reaches the lift threshold; a
/// deterministic filter fraction f corresponds to p_lift = f / (1 - f).
inline bool schedule_meets_threshold(const LiftSchedule& s, int qubits) {
  validate_schedule(s);
  const double f = filter_fraction(s);
  if (f >= 1.0) return true;
  return f / (1.0 - f) >= lift_threshold(qubits);
}

struct LiftedDistribution {
  SamplingDistribution base;  // probabilities already scaled by 1 / (1 + p_lift)
  DenseProjector found;
  double found_probability = 0.0;  // p'_g
  double threshold = 0.0;
  bool below_threshold = false;
};

inline LiftedDistribution lift_distribution(const SamplingDistribution& dist, const DenseProjector& found,
                                            double p_lift) {
  if (!(p_lift > 0.0)) throw InvalidArgument("lift_distribution: p_lift must be positive");
  if (found.qubits() != dist.qubits) throw DimensionError("lift_distribution: dimension mismatch");
  LiftedDistribution out{dist, found, p_lift / (1.0 + p_lift), lift_threshold(dist.qubits), false};
  out.below_threshold = p_lift < out.threshold;
  for (auto& e : out.base.entries) e.probability /= (1.0 + p_lift);
  return out;
}

/// sum p'_i P_i + p'_g P_g.
inline ComplexMatrix reconstruct_density(const LiftedDistribution& lifted) {
  return reconstruct_density(lifted.base) + lifted.found_probability * lifted.found.matrix();
}

// ---------------------------------------------------------------------------
// Filter steps

namespace detail {

/// e^{-eta P} psi = psi + Q diag(e^{-eta w} - 1) Q† psi.
inline void exact_filter_pure(ComplexVector& psi, const DenseProjector& p, double eta) {
  const RealVector d = (-eta * p.weights().array()).exp() - 1.0;
  const ComplexVector c = p.basis().adjoint() * psi;
  psi.noalias() += p.basis() * (d.asDiagonal() * c);
}

/// E rho E with E = I + Q D Q†, using W = rho Q:
/// rho + Q D W† + W D Q† + Q D (Q† W) D Q†.
inline void exact_filter_mixed(ComplexMatrix& rho, const DenseProjector& p, double eta) {
  const ComplexMatrix& q = p.basis();
  const RealVector d = (-eta * p.weights().array()).exp() - 1.0;
  const ComplexMatrix w = rho * q;
  const ComplexMatrix qd = q * d.asDiagonal();
  const ComplexMatrix inner = d.asDiagonal() * (q.adjoint() * w) * d.asDiagonal();
  rho.noalias() += qd * w.adjoint();
  rho.noalias() += w * qd.adjoint();
  rho.noalias() += q * inner * q.adjoint();
}

/// rho - eta {rho, P} + eta^2 P, unnormalized.
inline void sbs_mixed(ComplexMatrix& rho, const DenseProjector& p, double eta) {
  const ComplexMatrix& q = p.basis();
  const ComplexMatrix wq = (rho * q) * p.weights().asDiagonal();
  rho.noalias() -= eta * (wq * q.adjoint());
  rho.noalias() -= eta * (q * wq.adjoint());
  rho.noalias() += (eta * eta) * (q * p.weights().asDiagonal() * q.adjoint());
}

inline void check_filter_args(const QuantumState& state, const DenseProjector& p, double eta) {
  check_eta(eta);
  if (p.dim() != state.dim()) throw DimensionError("filter and state dimensions differ");
}

}  // namespace detail

/// Applies e^{-eta P} in place; returns the weight ratio ||e^{-eta P} state||^2.
inline double apply_exact_filter_inplace(QuantumState& state, const DenseProjector& p, double eta) {
  detail::check_filter_args(state, p, eta);
  const double before = state.weight();
  if (state.is_pure())
    detail::exact_filter_pure(state.vector(), p, eta);
  else
    detail::exact_filter_mixed(state.matrix(), p, eta);
  const double weight = state.weight() / before;
  detail::check_success(weight);
  state.scale_weight(1.0 / state.weight());
  state.log2_success += std::log2(weight);
  ++state.steps_taken;
  return weight;
}

/// State-based filter step on a mixed state. The returned probability is the
/// |+> outcome probability of the control qubit, half the trace of the
/// unnormalized update.
inline double apply_sbs_inplace(QuantumState& state, const DenseProjector& p, double eta) {
  detail::check_filter_args(state, p, eta);
  if (state.is_pure()) throw InvalidArgument("state-based filter needs a mixed state");
  const double before = state.weight();
  detail::sbs_mixed(state.matrix(), p, eta);
  const double success = 0.5 * state.weight() / before;
  detail::check_success(success);
  state.scale_weight(1.0 / state.weight());
  state.log2_success += std::log2(success);
  ++state.steps_taken;
  return success;
}

inline StepResult sbs_step(const QuantumState& state, const DenseProjector& p, double eta) {
  StepResult r{state, 1.0};
  r.success_prob = apply_sbs_inplace(r.state, p, eta);
  return r;
}

inline StepResult exact_filter_step(const QuantumState& state, const DenseProjector& p, double eta) {
  StepResult r{state, 1.0};
  r.success_prob = apply_exact_filter_inplace(r.state, p, eta);
  return r;
}

// ---------------------------------------------------------------------------
// Level solve

inline constexpr const char* kFilterLabel = "filter";

/// Interleaves sampled projector steps with filter steps. The filter has label
/// index `dist.entries.size()`.
class LiftedStepper {
 public:
  LiftedStepper(const SamplingDistribution& dist, DenseProjector filter, const LiftSchedule& schedule,
                FilterMethod method, double eta)
      : dist_(&dist), filter_(std::move(filter)), schedule_(schedule), method_(method), eta_(eta) {
    if (const auto* st = std::get_if<StochasticLift>(&schedule_)) {
      const LiftedDistribution lifted = lift_distribution(dist, filter_, st->p_lift);
      std::vector<double> w;
      for (const auto& e : lifted.base.entries) w.push_back(e.probability);
      w.push_back(lifted.found_probability);
      table_ = AliasTable(w);
    } else {
      table_ = make_alias_table(dist);
    }
  }

  StepOutcome operator()(QuantumState& state, std::size_t step, Rng& rng) const {
    const std::size_t n = dist_->entries.size();
    std::size_t i = n;
    if (const auto* det = std::get_if<DeterministicLift>(&schedule_)) {
      if (step % det->period != 0) i = table_.sample(rng);
    } else {
      i = table_.sample(rng);
    }
    if (i < n) return {apply_projector_step_inplace(state, dist_->entries[i].projector, eta_), i};
    const double p = method_ == FilterMethod::StateBased ? apply_sbs_inplace(state, filter_, eta_)
                                                         : apply_exact_filter_inplace(state, filter_, eta_);
    return {p, n};
  }

 private:
  const SamplingDistribution* dist_;
  DenseProjector filter_;
  LiftSchedule schedule_;
  FilterMethod method_;
  double eta_;
  AliasTable table_;
};

/// One lifted solve. With no found states this is exactly attempt_ite.
template <class Observer>
RunResult solve_level(const RunConfig& config, const SamplingDistribution& dist,
                      std::span<const DenseProjector> found, const LiftSchedule& schedule, FilterMethod method,
                      const QuantumState& init, Observer&& observe) {
  if (found.empty()) return attempt_ite(config, dist, init, observe);
  validate_schedule(schedule);
  if (method == FilterMethod::StateBased && config.representation != Representation::Mixed)
    throw InvalidArgument("state-based filtering needs the mixed representation");
  if (dist.qubits != init.qubits()) throw DimensionError("solve_level: distribution and state dimensions differ");
  auto labels = distribution_labels(dist);
  labels.emplace_back(kFilterLabel);
  return run_trajectory(config, init, LiftedStepper(dist, blend_projectors(found), schedule, method, config.eta),
                        observe, labels);
}

// ---------------------------------------------------------------------------
// Spectrum orchestration

/// "plus", "zero", or an explicit product state "Z:0101" / "X:0100".
inline ProductProjector parse_initial_state(const std::string& spec, int qubits) {
  if (spec == "plus") return {Basis::X, 0, qubits};
  if (spec == "zero") return {Basis::Z, 0, qubits};
  if (spec.size() > 2 && spec[1] == ':' && (spec[0] == 'Z' || spec[0] == 'X')) {
    const ProductProjector p = parse_product(spec[0] == 'Z' ? Basis::Z : Basis::X, spec.substr(2));
    if (p.qubits != qubits) throw InvalidArgument("initial state '" + spec + "' has the wrong number of sites");
    return p;
  }
  throw InvalidArgument("unknown initial state '" + spec + "' (expected plus, zero, Z:bits or X:bits)");
}

struct LevelOverride {
  std::optional<std::string> init;
  std::optional<double> eta;
  std::optional<std::size_t> steps;
  std::optional<Policy> policy;
};

struct SpectrumConfig {
  RunConfig run;
  std::size_t levels = 1;
  LiftSchedule schedule = DeterministicLift{2};
  FilterMethod method = FilterMethod::ExactExponential;
  std::string init = "plus";
  std::vector<LevelOverride> per_level;

  [[nodiscard]] RunConfig level_run(std::size_t level) const {
    RunConfig c = run;
    c.seed = derive_stream_seed(run.seed, level);
    if (level < per_level.size()) {
      if (per_level[level].eta) c.eta = *per_level[level].eta;
      if (per_level[level].steps) c.steps = *per_level[level].steps;
      if (per_level[level].policy) c.policy = *per_level[level].policy;
    }
    return c;
  }

  [[nodiscard]] std::string level_init(std::size_t level) const {
    if (level < per_level.size() && per_level[level].init) return *per_level[level].init;
    return init;
  }
};

struct LevelResult {
  std::size_t level = 0;
  double eta = 0.0;
  std::size_t steps = 0;
  std::string init;
  std::uint64_t seed = 0;
  double energy = 0.0;
  double fidelity = std::numeric_limits<double>::quiet_NaN();            // against the exact eigenspace
  double cluster_fidelity = std::numeric_limits<double>::quiet_NaN();    // against the near-degenerate cluster
  double eigenvector_fidelity = std::numeric_limits<double>::quiet_NaN();
  double exact_energy = std::numeric_limits<double>::quiet_NaN();
  double log2_success = 0.0;
  double wall_seconds = 0.0;
  bool lift_below_threshold = false;
  QuantumState state;
  TrajectoryRecord record;
};

struct SpectrumResult {
  std::vector<LevelResult> levels;

  [[nodiscard]] std::vector<double> energies() const {
    std::vector<double> e;
    for (const auto& l : levels) e.push_back(l.energy);
    return e;
  }

  /// e_{k+1} - e_k.
  [[nodiscard]] std::vector<double> gaps() const {
    std::vector<double> g;
    for (std::size_t k = 1; k < levels.size(); ++k) g.push_back(levels[k].energy - levels[k - 1].energy);
    return g;
  }
};

/// Solves levels 0..k-1 in sequence, each level lifting all previously
/// computed states. `oracle` may be null (no fidelities recorded).
inline SpectrumResult solve_spectrum(const SpectrumConfig& config, std::span<const HamiltonianTerm> terms,
                                     const SpectrumOracle* oracle = nullptr) {
  if (config.levels < 1) throw InvalidArgument("solve_spectrum: need at least one level");
  validate_schedule(config.schedule);
  const int n = common_qubit_count(terms);
  if (oracle != nullptr && oracle->size() != (std::size_t{1} << n))
    throw DimensionError("solve_spectrum: oracle dimension does not match the model");
  if (oracle != nullptr && config.levels > oracle->size()) throw InvalidArgument("solve_spectrum: more levels than states");
  const SamplingDistribution dist = build_distribution(terms);

  SpectrumResult out;
  std::vector<DenseProjector> found;
  for (std::size_t level = 0; level < config.levels; ++level) {
    const RunConfig run = config.level_run(level);
    LevelResult lr;
    lr.level = level;
    lr.eta = run.eta;
    lr.steps = run.steps;
    lr.init = config.level_init(level);
    lr.seed = run.seed;
    if (!found.empty())
      lr.lift_below_threshold = !schedule_meets_threshold(config.schedule, n);

    const QuantumState init = QuantumState::product(parse_initial_state(lr.init, n), run.representation);
    auto observe = [&](const QuantumState& s) {
      Observation o{energy_expectation(s, terms)};
      if (oracle != nullptr) o.fidelity = oracle->fidelity(s, level);
      return o;
    };
    const auto start = std::chrono::steady_clock::now();
    RunResult r = detail::require_completed(solve_level(run, dist, found, config.schedule, config.method, init, observe));
    lr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    lr.energy = energy_expectation(r.state, terms);
    lr.log2_success = r.state.log2_success;
    if (oracle != nullptr) {
      lr.exact_energy = oracle->energy(level);
      lr.fidelity = oracle->fidelity(r.state, level);
      lr.cluster_fidelity = oracle->cluster_fidelity(r.state, level);
      lr.eigenvector_fidelity = oracle->eigenvector_fidelity(r.state, level);
    }
    found.push_back(DenseProjector::from_state(r.state));
    lr.state = std::move(r.state);
    lr.record = std::move(r.record);
    out.levels.push_back(std::move(lr));
  }
  return out;
}

}  // namespace eigensampler
