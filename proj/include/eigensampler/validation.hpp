#pragma once

// Randomized and grid check suites for the circuit constructions, the
// controlled-swap protocol, the discretization error bounds, the two-level
// error model and the success-rate predictions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "eigensampler/analysis.hpp"
#include "eigensampler/circuits.hpp"
#include "eigensampler/engine.hpp"
#include "eigensampler/excited.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/random.hpp"

namespace eigensampler {

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min over instances of (bound - value)
  std::vector<std::pair<std::string, double>> metrics;

  [[nodiscard]] bool passed() const { return violations == 0 && instances > 0; }

  void record(double value, double bound) {
    ++instances;
    worst_margin = std::min(worst_margin, bound - value);
    if (!(value <= bound)) ++violations;
  }

  void metric(std::string key, double value) { metrics.emplace_back(std::move(key), value); }
};

struct ValidationOptions {
  std::uint64_t seed = 20240607;
  std::size_t circuit_instances = 100;
  std::size_t protocol_instances = 200;
  std::size_t appendix_a_instances = 100;
  std::size_t appendix_b_ratio_points = 15;
  std::size_t appendix_b_delta_points = 20;
  std::size_t success_trajectories = 10000;
  bool stress_point = true;  // eta = 0.5, N = 1e4
};

namespace detail {

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline ProductProjector random_product(Rng& rng, int n) {
  const Basis b = uniform01(rng) < 0.5 ? Basis::Z : Basis::X;
  return {b, rng() & ((std::uint64_t{1} << n) - 1), n};
}

/// Random two-term decomposable Hamiltonian (one Z-diagonal, one X-diagonal
/// term with Gaussian spectra) on n qubits.
inline std::vector<HamiltonianTerm> random_terms(Rng& rng, int n) {
  std::vector<HamiltonianTerm> terms;
  for (Basis b : {Basis::Z, Basis::X}) {
    std::vector<double> spec(std::size_t{1} << n);
    for (double& x : spec) x = standard_normal(rng);
    terms.emplace_back(b == Basis::Z ? "rz" : "rx", b, n, std::move(spec));
  }
  return terms;
}

}  // namespace detail

/// Post-selected block, discarded block and unitarity of the controlled
/// rotation for random product projectors.
inline CheckResult check_circuits(const ValidationOptions& opt) {
  CheckResult res;
  res.name = "circuits";
  Rng rng = make_stream(opt.seed, 1);
  double worst_unitarity = 0.0, worst_block = 0.0, worst_discard = 0.0, worst_norm = 0.0;
  std::size_t violations = 0;
  for (std::size_t k = 0; k < opt.circuit_instances; ++k) {
    const int n = static_cast<int>(detail::uniform_int(rng, 1, kMaxCircuitQubits));
    const ProductProjector p = detail::random_product(rng, n);
    double eta = 0.0;
    while (eta <= 0.0) eta = 0.5 * uniform01(rng);
    const ControlledUnitary u = build_controlled_ry(p, eta);
    const ComplexMatrix id = ComplexMatrix::Identity(u.projector.rows(), u.projector.cols());
    const double unitarity = unitarity_residue(u);
    const double block = (postselect_block(u) - (id - eta * u.projector)).cwiseAbs().maxCoeff();
    const double s = std::sqrt(2.0 * eta - eta * eta);
    const double discard = (discarded_block(u) + s * u.projector).cwiseAbs().maxCoeff();
    const double norm = std::abs((1.0 - eta) * (1.0 - eta) + (2.0 * eta - eta * eta) - 1.0);
    worst_unitarity = std::max(worst_unitarity, unitarity);
    worst_block = std::max(worst_block, block);
    worst_discard = std::max(worst_discard, discard);
    worst_norm = std::max(worst_norm, norm);
    ++res.instances;
    if (!(unitarity <= 1e-10 && block <= 1e-12 && discard <= 1e-12 && norm <= 1e-12)) ++violations;
  }
  res.violations = violations;
  res.worst_margin = 1e-10 - worst_unitarity;
  res.metric("max_unitarity_residue", worst_unitarity);
  res.metric("max_postselect_block_error", worst_block);
  res.metric("max_discarded_block_error", worst_discard);
  res.metric("max_rotation_norm_error", worst_norm);
  return res;
}

/// Controlled-swap protocol against the closed form and the state-based step.
inline CheckResult check_protocol(const ValidationOptions& opt) {
  CheckResult res;
  res.name = "protocol";
  Rng rng = make_stream(opt.seed, 2);
  double worst_formula = 0.0, worst_step = 0.0, worst_prob = 0.0;
  std::size_t violations = 0;
  for (std::size_t k = 0; k < opt.protocol_instances; ++k) {
    const int n = static_cast<int>(detail::uniform_int(rng, 1, 3));
    const Index d = Index{1} << n;
    const ComplexMatrix rho0 = random_density_matrix(d, rng, static_cast<Index>(detail::uniform_int(rng, 1, d)));
    const ComplexMatrix rhoa = random_density_matrix(d, rng, static_cast<Index>(detail::uniform_int(rng, 1, d)));
    const double eta = detail::uniform_real(rng, 0.01, 0.3);

    const ProtocolOutcome out = simulate_sbs_protocol({rho0, rhoa, eta});
    const ComplexMatrix f = sbs_formula(rho0, rhoa, eta);
    const double tr = f.trace().real();
    const double formula_err = trace_norm(hermitize(out.state - f / tr));
    const double prob_err = std::abs(out.outcome_prob - 0.5 * tr / (1.0 + eta * eta));
    const StepResult step = sbs_step(QuantumState::mixed(rho0), DenseProjector::from_density(rhoa), eta);
    const double step_err = trace_norm(hermitize(out.state - step.state.matrix()));

    worst_formula = std::max(worst_formula, formula_err);
    worst_step = std::max(worst_step, step_err);
    worst_prob = std::max(worst_prob, prob_err);
    ++res.instances;
    if (!(formula_err <= 1e-10 && step_err <= 1e-10 && prob_err <= 1e-12)) ++violations;
  }
  res.violations = violations;
  res.worst_margin = 1e-10 - std::max(worst_formula, worst_step);
  res.metric("max_trace_distance_formula", worst_formula);
  res.metric("max_trace_distance_sbs_step", worst_step);
  res.metric("max_outcome_prob_error", worst_prob);
  return res;
}

/// Operator and ensemble-state discretization errors on random instances,
/// the calibrated normalized-state check and an optional stress point.
inline CheckResult check_appendix_a(const ValidationOptions& opt) {
  CheckResult res;
  res.name = "appendix-a";
  Rng rng = make_stream(opt.seed, 3);
  double worst_op_ratio = 0.0, worst_state_ratio = 0.0;
  for (std::size_t k = 0; k < opt.appendix_a_instances; ++k) {
    const int n = static_cast<int>(detail::uniform_int(rng, 1, 4));
    const auto terms = detail::random_terms(rng, n);
    const SamplingDistribution dist = build_distribution(terms);
    const ComplexMatrix rho0 = random_density_matrix(Index{1} << n, rng);
    double eta = 0.0;
    while (eta <= 0.0) eta = 0.1 * uniform01(rng);
    const std::size_t steps = detail::uniform_int(rng, 1, 100);
    const double gamma = static_cast<double>(steps) * eta * eta;

    const double op = operator_error(reconstruct_density(dist), eta, steps);
    res.record(op, gamma + 1e-9);
    const StateErrorResult st = state_error(dist, rho0, eta, steps);
    res.record(st.unnormalized, st.bound + 1e-9);
    worst_op_ratio = std::max(worst_op_ratio, op / gamma);
    worst_state_ratio = std::max(worst_state_ratio, st.unnormalized / gamma);
  }

  // Normalized-state distance in the small-gamma regime, against the
  // calibrated constant 10.
  Rng grid_rng = make_stream(opt.seed, 4);
  double worst_normalized_ratio = 0.0;
  for (double eta : {0.001, 0.002, 0.005, 0.01}) {
    for (std::size_t steps : {10, 50, 100}) {
      const double gamma = static_cast<double>(steps) * eta * eta;
      if (gamma > 0.01 || eta * static_cast<double>(steps) > 1.0) continue;
      const int n = 2;
      const auto terms = detail::random_terms(grid_rng, n);
      const SamplingDistribution dist = build_distribution(terms);
      const ComplexMatrix rho0 = random_density_matrix(Index{1} << n, grid_rng);
      const StateErrorResult st = state_error(dist, rho0, eta, steps);
      res.record(st.normalized, 10.0 * gamma);
      worst_normalized_ratio = std::max(worst_normalized_ratio, st.normalized / gamma);
    }
  }

  res.metric("max_operator_error_over_gamma", worst_op_ratio);
  res.metric("max_state_error_over_gamma", worst_state_ratio);
  res.metric("max_normalized_error_over_gamma", worst_normalized_ratio);

  if (opt.stress_point) {
    const auto terms = build_tfim(2, 1.0, 0.5, false);
    const SamplingDistribution dist = build_distribution(terms);
    const ComplexMatrix rho0 = QuantumState::plus(2).density();
    const std::size_t steps = 10000;
    const double eta = 0.5;
    const ErrorReport r = error_report(dist, rho0, eta, steps);
    res.record(r.operator_error, r.operator_bound);
    res.record(r.state_error, r.state_bound);
    res.metric("stress_operator_margin", r.operator_margin());
    res.metric("stress_state_margin", r.state_margin());
  }
  return res;
}

/// Two-level error model on a logarithmic (a/b, delta) grid.
inline CheckResult check_appendix_b(const ValidationOptions& opt) {
  CheckResult res;
  res.name = "appendix-b";
  double worst_ratio = 0.0, min_amplification = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  const std::size_t na = std::max<std::size_t>(opt.appendix_b_ratio_points, 2);
  const std::size_t nd = std::max<std::size_t>(opt.appendix_b_delta_points, 2);
  for (std::size_t i = 0; i < na; ++i) {
    const double ratio = 2.0 * std::pow(5.0, static_cast<double>(i) / static_cast<double>(na - 1));
    for (std::size_t j = 0; j < nd; ++j) {
      const double delta = 1e-4 * std::pow(1e3, static_cast<double>(j) / static_cast<double>(nd - 1));
      const TwoLevelError e = two_level_excited_error({ratio, 1.0, delta});
      const bool ok = e.delta_prime > delta && e.delta_prime <= 2.0 * delta + 6.0 * delta * delta * delta &&
                      e.exact_overlap_error <= 2.5 * delta;
      ++res.instances;
      if (!ok) ++violations;
      res.worst_margin = std::min({res.worst_margin, 2.0 * delta + 6.0 * std::pow(delta, 3) - e.delta_prime,
                                   e.delta_prime - delta, 2.5 * delta - e.exact_overlap_error});
      worst_ratio = std::max(worst_ratio, e.exact_overlap_error / delta);
      min_amplification = std::min(min_amplification, e.delta_prime / delta);
    }
  }
  res.violations = violations;
  res.metric("max_exact_error_over_delta", worst_ratio);
  res.metric("min_delta_prime_over_delta", min_amplification);
  return res;
}

struct SuccessRateComparison {
  double empirical = 0.0;
  double predicted = 0.0;
  double tolerance = 0.0;
  double gamma = 0.0;
  std::size_t trajectories = 0;

  [[nodiscard]] bool within() const { return std::abs(empirical - predicted) <= tolerance; }
};

/// The n = 2 toy model used by the success-rate checks: open TFIM chain.
inline std::vector<HamiltonianTerm> success_toy_model() { return build_tfim(2, 1.0, 0.5, false); }

/// MonteCarlo acceptance of plain sampled evolution against Tr(sigma_T).
inline SuccessRateComparison compare_plain_success(std::uint64_t seed, std::size_t trajectories, double eta,
                                                   std::size_t steps) {
  const auto terms = success_toy_model();
  const SamplingDistribution dist = build_distribution(terms);
  const QuantumState init = QuantumState::plus(2, Representation::Mixed);
  RunConfig config{eta, steps, MonteCarloPolicy{0}, Representation::Mixed, seed, steps};
  const auto runs = run_ensemble(config, trajectories, [&](const RunConfig& c, std::size_t) {
    return attempt_ite(c, dist, init, [](const QuantumState&) { return Observation{}; }).record.status ==
           TrajectoryStatus::Completed;
  });
  SuccessRateComparison out;
  out.trajectories = trajectories;
  out.empirical = static_cast<double>(std::count(runs.begin(), runs.end(), true)) / static_cast<double>(trajectories);
  out.predicted = estimate_success_rate(dist, init, eta, steps);
  out.gamma = config.gamma();
  out.tolerance = 3.0 * std::sqrt(out.predicted * (1.0 - out.predicted) / static_cast<double>(trajectories)) +
                  5.0 * out.gamma * out.predicted;
  return out;
}

/// MonteCarlo acceptance of the lifted solve with a deterministic period-2
/// state-based filter on the exact ground state, against Tr(sigma_T) /
/// 2^{p'_g N} with p'_g = 1/2 and sigma_T taken under the lifted mixture.
inline SuccessRateComparison compare_lifted_success(std::uint64_t seed, std::size_t trajectories, double eta,
                                                    std::size_t steps) {
  const auto terms = success_toy_model();
  const SamplingDistribution dist = build_distribution(terms);
  const ComplexMatrix h = hamiltonian_matrix(terms);
  const DenseProjector ground = DenseProjector::from_vector(exact_diagonalize(h).eigenvectors.col(0));
  const QuantumState init = QuantumState::plus(2, Representation::Mixed);
  const LiftSchedule schedule = DeterministicLift{2};
  const std::vector<DenseProjector> found{ground};
  RunConfig config{eta, steps, MonteCarloPolicy{0}, Representation::Mixed, seed, steps};
  const auto runs = run_ensemble(config, trajectories, [&](const RunConfig& c, std::size_t) {
    return solve_level(c, dist, found, schedule, FilterMethod::StateBased, init,
                       [](const QuantumState&) { return Observation{}; })
               .record.status == TrajectoryStatus::Completed;
  });

  const double fraction = filter_fraction(schedule);
  const LiftedDistribution lifted = lift_distribution(dist, ground, fraction / (1.0 - fraction));
  const ComplexMatrix e = matrix_exp_hermitian(reconstruct_density(lifted), -eta * static_cast<double>(steps));
  const double sigma_trace = (e * init.matrix() * e).trace().real();

  SuccessRateComparison out;
  out.trajectories = trajectories;
  out.empirical = static_cast<double>(std::count(runs.begin(), runs.end(), true)) / static_cast<double>(trajectories);
  out.predicted = success_rate_excited(lifted.found_probability, steps, sigma_trace);
  out.gamma = config.gamma();
  out.tolerance = 3.0 * std::sqrt(out.predicted * (1.0 - out.predicted) / static_cast<double>(trajectories)) +
                  5.0 * out.gamma * out.predicted;
  return out;
}

inline CheckResult check_success_rate(const ValidationOptions& opt) {
  CheckResult res;
  res.name = "success-rate";
  const SuccessRateComparison plain = compare_plain_success(derive_stream_seed(opt.seed, 5), opt.success_trajectories,
                                                            0.05, 20);
  const SuccessRateComparison lifted = compare_lifted_success(derive_stream_seed(opt.seed, 6),
                                                              opt.success_trajectories, 0.05, 10);
  for (const auto* c : {&plain, &lifted}) res.record(std::abs(c->empirical - c->predicted), c->tolerance);
  res.metric("plain_empirical", plain.empirical);
  res.metric("plain_predicted", plain.predicted);
  res.metric("plain_tolerance", plain.tolerance);
  res.metric("lifted_empirical", lifted.empirical);
  res.metric("lifted_predicted", lifted.predicted);
  res.metric("lifted_tolerance", lifted.tolerance);
  return res;
}

struct NamedCheck {
  const char* name;
  CheckResult (*run)(const ValidationOptions&);
};

inline constexpr NamedCheck kChecks[] = {
    {"circuits", check_circuits},     {"protocol", check_protocol},         {"appendix-a", check_appendix_a},
    {"appendix-b", check_appendix_b}, {"success-rate", check_success_rate},
};

/// Runs the selected checks (all when `only` is empty).
inline std::vector<CheckResult> run_validation(const ValidationOptions& opt, const std::vector<std::string>& only = {}) {
  for (const auto& name : only) {
    const bool known = std::any_of(std::begin(kChecks), std::end(kChecks),
                                   [&](const NamedCheck& c) { return name == c.name; });
    if (!known) throw InvalidArgument("unknown check set '" + name + "'");
  }
  std::vector<CheckResult> out;
  for (const auto& c : kChecks)
    if (only.empty() || std::find(only.begin(), only.end(), c.name) != only.end()) out.push_back(c.run(opt));
  return out;
}

}  // namespace eigensampler
