#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "eigensampler/analysis.hpp"
#include "eigensampler/validation.hpp"

using namespace eigensampler;

namespace {

SamplingDistribution toy_distribution() {
  const std::vector<HamiltonianTerm> terms{z_field(1, 1.0), x_field(1, 1.0)};
  return build_distribution(terms);
}

}  // namespace

TEST(Oracle, TfimFourSite) {
  const SpectrumOracle o(hamiltonian_matrix(build_tfim(4, 1.0, 0.5)));
  EXPECT_NEAR(o.energy(0), -4.27155841, 1e-8);
  EXPECT_NEAR(o.energy(1), -4.23606798, 1e-8);
  EXPECT_NEAR(o.energy(2), -1.32430689, 1e-8);
  EXPECT_NEAR(o.energy(3), -1.0, 1e-10);
  EXPECT_EQ(o.size(), 16U);
  EXPECT_THROW(static_cast<void>(o.energy(16)), InvalidArgument);
}

TEST(Oracle, TfimTenSite) {
  const SpectrumOracle o(hamiltonian_matrix(build_tfim(10, 1.0, 0.5)));
  EXPECT_NEAR(o.energy(0), -10.63560441, 1e-7);
  EXPECT_NEAR(o.energy(1), -10.63528368, 1e-7);
  EXPECT_NEAR(o.energy(2), -8.44857543, 1e-7);
  EXPECT_NEAR(o.energy(2) - o.energy(1), 2.18670825, 1e-7);
}

TEST(Oracle, SingleQubitZPlusX) {
  ComplexMatrix h(2, 2);
  h << 1, 1, 1, -1;
  const SpectrumOracle o(h);
  EXPECT_NEAR(o.energy(0), -std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(o.energy(1), std::sqrt(2.0), 1e-14);
}

TEST(Oracle, DegenerateEigenspaceFidelity) {
  const SpectrumOracle o(hamiltonian_matrix(build_tfim(4, 1.0, 0.5)));
  // Levels 3 and 4 are both at -1: any unit vector in their span has full
  // eigenspace fidelity but not necessarily eigenvector fidelity.
  const ComplexVector mix = (o.eigenvector(3) + o.eigenvector(4)) / std::sqrt(2.0);
  const QuantumState s = QuantumState::pure(mix);
  EXPECT_NEAR(o.fidelity(s, 3), 1.0, 1e-10);
  EXPECT_NEAR(o.eigenvector_fidelity(s, 3), 1.0 / std::sqrt(2.0), 1e-10);
  EXPECT_EQ(o.eigenspace(3, 1e-8).cols(), 2);
}

TEST(Oracle, ClusterFidelity) {
  const SpectrumOracle o(hamiltonian_matrix(build_tfim(10, 1.0, 0.5)));
  const QuantumState s = QuantumState::pure(o.eigenvector(1));
  EXPECT_NEAR(o.fidelity(s, 0), 0.0, 1e-8);
  EXPECT_NEAR(o.cluster_fidelity(s, 0), 1.0, 1e-10);
}

TEST(OperatorError, SingleQubitMaximallyMixed) {
  const ComplexMatrix rho = ComplexMatrix::Identity(2, 2) / 2.0;
  const double err = operator_error(rho, 0.1, 10);
  EXPECT_NEAR(err, 0.015587440948509501, 1e-14);
  EXPECT_LE(err, 10 * 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(operator_error(rho, 0.1, 0), 0.0);
}

TEST(OperatorError, VanishesAlongFixedTime) {
  const ComplexMatrix rho = reconstruct_density(toy_distribution());
  const double t = 2.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double eta : {0.1, 0.05, 0.025}) {
    const double err = operator_error(rho, eta, static_cast<std::size_t>(std::lround(t / eta)));
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(OperatorError, BoundOnRandomInstances) {
  Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 4;
    const ComplexMatrix rho = reconstruct_density(build_distribution(detail::random_terms(rng, n)));
    const double eta = 0.1 * uniform01(rng);
    const std::size_t steps = 1 + rng() % 100;
    EXPECT_LE(operator_error(rho, eta, steps), static_cast<double>(steps) * eta * eta + 1e-12);
  }
}

TEST(StateError, SingleStepToy) {
  const SamplingDistribution dist = toy_distribution();
  const ComplexMatrix plus = QuantumState::plus(1).density();
  const StateErrorResult r = state_error(dist, plus, 0.1, 1);
  EXPECT_LE(r.unnormalized, 4 * 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(r.bound, 0.04);
  EXPECT_NEAR(state_error(dist, plus, 0.0, 25).unnormalized, 0.0, 1e-15);
}

TEST(StateError, ExpectedStateMatchesTrajectoryAverage) {
  // The enumerated ensemble state is the average of forced trajectories
  // weighted by their accumulated success probability.
  const auto terms = build_tfim(2, 1.0, 0.5, false);
  const SamplingDistribution dist = build_distribution(terms);
  const QuantumState init = QuantumState::plus(2, Representation::Mixed);
  const double eta = 0.1;
  const std::size_t steps = 5;
  RunConfig c{eta, steps, ForcedPolicy{}, Representation::Mixed, 12, steps};
  const std::size_t members = 20000;
  const auto runs = run_ensemble(c, members, [&](const RunConfig& rc, std::size_t) {
    const RunResult r = attempt_ite(rc, dist, init, [](const QuantumState&) { return Observation{}; });
    return ComplexMatrix(std::exp2(r.state.log2_success) * r.state.matrix());
  });
  ComplexMatrix mean = ComplexMatrix::Zero(4, 4);
  for (const auto& m : runs) mean += m / static_cast<double>(members);
  EXPECT_LE(trace_norm(mean - expected_sampled_state(dist, init.matrix(), eta, steps)), 0.02);
}

TEST(SuccessRateExcited, Examples) {
  EXPECT_DOUBLE_EQ(success_rate_excited(0.0, 123, 0.7), 0.7);
  EXPECT_DOUBLE_EQ(success_rate_excited(0.5, 10, 0.64), 0.02);
  EXPECT_THROW(success_rate_excited(1.5, 10, 0.5), InvalidArgument);
}

TEST(TwoLevel, PerturbativeValue) {
  const TwoLevelError e = two_level_excited_error({2.0, 1.0, 0.01});
  EXPECT_NEAR(e.delta_prime, 0.020004000800160033, 1e-15);
}

TEST(TwoLevel, ExactZeroDelta) {
  const TwoLevelError e = two_level_excited_error({2.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(e.delta_prime, 0.0);
  EXPECT_NEAR(e.exact_overlap_error, 0.0, 1e-15);
}

TEST(TwoLevel, ExactWithinTwoAndHalfDelta) {
  const TwoLevelError e = two_level_excited_error({2.0, 1.0, 0.05});
  EXPECT_LE(e.exact_overlap_error, 2.5 * 0.05);
  EXPECT_GT(e.exact_overlap_error, 0.05);
}

TEST(TwoLevel, RegimeEnforced) {
  EXPECT_THROW(two_level_excited_error({1.5, 1.0, 0.01}), InvalidArgument);
  EXPECT_THROW(two_level_excited_error({2.0, 1.0, 0.2}), InvalidArgument);
  EXPECT_THROW(two_level_excited_error({2.0, -1.0, 0.01}), InvalidArgument);
}

TEST(Cascade, Doubling) {
  EXPECT_DOUBLE_EQ(cascaded_error_projection(0.01, 0), 0.01);
  EXPECT_DOUBLE_EQ(cascaded_error_projection(0.01, 3), 0.08);
  EXPECT_THROW(cascaded_error_projection(0.01, -1), InvalidArgument);
}

TEST(ErrorReport, StressPointBoundsHold) {
  const auto terms = build_tfim(2, 1.0, 0.5, false);
  const SamplingDistribution dist = build_distribution(terms);
  const ComplexMatrix rho0 = QuantumState::plus(2).density();
  const ErrorReport mild = error_report(dist, rho0, 0.01, 100);
  const ErrorReport stress = error_report(dist, rho0, 0.5, 10000);
  EXPECT_GE(mild.operator_margin(), 0.0);
  EXPECT_GE(mild.state_margin(), 0.0);
  EXPECT_GE(stress.operator_margin(), 0.0);
  EXPECT_GE(stress.state_margin(), 0.0);
  EXPECT_NEAR(mild.gamma, 0.01, 1e-15);
  EXPECT_LE(mild.success_deviation, 5 * mild.gamma);
}

TEST(Validation, AllChecksPass) {
  ValidationOptions opt;
  opt.success_trajectories = 4000;
  for (const auto& r : run_validation(opt)) {
    EXPECT_TRUE(r.passed()) << r.name << " violations=" << r.violations << " margin=" << r.worst_margin;
    EXPECT_GT(r.instances, 0U);
  }
}

TEST(Validation, SubsetSelection) {
  ValidationOptions opt;
  const auto only = run_validation(opt, {"appendix-b"});
  ASSERT_EQ(only.size(), 1U);
  EXPECT_EQ(only[0].name, "appendix-b");
  EXPECT_GE(only[0].instances, 200U);
  EXPECT_THROW(run_validation(opt, {"nope"}), InvalidArgument);
}
