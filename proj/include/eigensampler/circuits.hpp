#pragma once

// Dense reference constructions for the two circuit primitives: the
// ancilla-controlled rotation whose |0> post-selection implements I - eta P,
// and the controlled-swap protocol that realizes the state-based filter.
// These are verification tools; the engine never builds them.

#include <array>
#include <cmath>
#include <cstdint>

#include "eigensampler/error.hpp"
#include "eigensampler/model.hpp"
#include "eigensampler/qlinalg.hpp"

namespace eigensampler {

inline constexpr int kMaxCircuitQubits = 6;
inline constexpr int kMaxProtocolQubits = 5;

/// Rotation angle theta of the R_y block: -2 atan(sqrt(2 eta - eta^2) / (1 - eta)).
inline double rotation_angle(double eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw InvalidArgument("rotation_angle: eta must lie in [0, 1)");
  return -2.0 * std::atan(std::sqrt(2.0 * eta - eta * eta) / (1.0 - eta));
}

/// R_y(theta) = [[cos(theta/2), -sin(theta/2)], [sin(theta/2), cos(theta/2)]].
inline ComplexMatrix ry(double theta) {
  ComplexMatrix g(2, 2);
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  g << c, -s, s, c;
  return g;
}

/// U = (I - P) ⊗ I + P ⊗ R_y(theta) on system ⊗ ancilla (ancilla least
/// significant).
struct ControlledUnitary {
  ComplexMatrix matrix;
  ComplexMatrix projector;
  double eta = 0.0;
  int qubits = 0;
};

inline ControlledUnitary build_controlled_ry(const ComplexMatrix& p, double eta) {
  require_square(p, "build_controlled_ry");
  const int n = qubit_count(p.rows());
  if (n > kMaxCircuitQubits) throw DimensionError("build_controlled_ry: more than 6 system qubits");
  if (!(eta >= 0.0 && eta < 1.0)) throw InvalidArgument("build_controlled_ry: eta must lie in [0, 1)");
  require_hermitian(p, "build_controlled_ry");
  if ((p * p - p).cwiseAbs().maxCoeff() > 1e-10) throw InvalidArgument("build_controlled_ry: P is not a projector");
  const ComplexMatrix id = ComplexMatrix::Identity(p.rows(), p.cols());
  ControlledUnitary u;
  u.matrix = kron(id - p, ComplexMatrix::Identity(2, 2)) + kron(p, ry(rotation_angle(eta)));
  u.projector = p;
  u.eta = eta;
  u.qubits = n;
  return u;
}

inline ControlledUnitary build_controlled_ry(const ProductProjector& p, double eta) {
  if (p.qubits > kMaxCircuitQubits) throw DimensionError("build_controlled_ry: more than 6 system qubits");
  const ComplexVector v = projector_vector(p);
  return build_controlled_ry(ComplexMatrix(v * v.adjoint()), eta);
}

/// max |U†U - I|.
inline double unitarity_residue(const ControlledUnitary& u) {
  const ComplexMatrix& m = u.matrix;
  return (m.adjoint() * m - ComplexMatrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
}

/// <a|U|b> on the system for ancilla basis states a, b.
inline ComplexMatrix ancilla_block(const ControlledUnitary& u, int a, int b) {
  const Index d = u.matrix.rows() / 2;
  ComplexMatrix out(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) out(i, j) = u.matrix(2 * i + a, 2 * j + b);
  return out;
}

/// The success branch <0|U|0> = I - eta P.
inline ComplexMatrix postselect_block(const ControlledUnitary& u) { return ancilla_block(u, 0, 0); }

/// The discarded branch <1|U|0> = -sqrt(2 eta - eta^2) P.
inline ComplexMatrix discarded_block(const ControlledUnitary& u) { return ancilla_block(u, 1, 0); }

struct TripartiteSetup {
  ComplexMatrix system;   // rho_0
  ComplexMatrix ancilla;  // rho_a
  double eta = 0.0;

  /// (|0> - eta|1>)(<0| - eta<1|) / (1 + eta^2).
  [[nodiscard]] ComplexMatrix control() const {
    ComplexMatrix c(2, 2);
    c << 1.0, -eta, -eta, eta * eta;
    return c / (1.0 + eta * eta);
  }
};

struct ProtocolOutcome {
  ComplexMatrix state;         // normalized system state after a |+> outcome
  double outcome_prob = 0.0;   // probability of |+>; the |-> branch is discarded
};

/// Full simulation of system ⊗ ancilla ⊗ control: controlled swap of system
/// and ancilla, ancilla traced out, control projected onto |+>.
inline ProtocolOutcome simulate_sbs_protocol(const TripartiteSetup& setup) {
  require_square(setup.system, "simulate_sbs_protocol");
  const int n = qubit_count(setup.system.rows());
  if (n > kMaxProtocolQubits) throw DimensionError("simulate_sbs_protocol: more than 5 system qubits");
  if (setup.ancilla.rows() != setup.system.rows() || setup.ancilla.cols() != setup.system.cols())
    throw DimensionError("simulate_sbs_protocol: ancilla and system dimensions differ");
  if (!(setup.eta >= 0.0 && setup.eta < 1.0)) throw InvalidArgument("simulate_sbs_protocol: eta must lie in [0, 1)");
  require_density(setup.system, "simulate_sbs_protocol(system)");
  require_density(setup.ancilla, "simulate_sbs_protocol(ancilla)");

  const Index d = setup.system.rows();
  const Index total = d * d * 2;
  const ComplexMatrix omega = kron(kron(setup.system, setup.ancilla), setup.control());

  // index = (s * d + a) * 2 + c; the controlled swap exchanges s and a when c = 1.
  auto cswap = [d](Index x) {
    const Index c = x & 1, sa = x >> 1, s = sa / d, a = sa % d;
    return c ? ((a * d + s) << 1) | 1 : x;
  };
  ComplexMatrix swapped(total, total);
  for (Index x = 0; x < total; ++x)
    for (Index y = 0; y < total; ++y) swapped(cswap(x), cswap(y)) = omega(x, y);

  ComplexVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const ComplexMatrix proj = kron(ComplexMatrix::Identity(d * d, d * d), plus * plus.adjoint());
  const ComplexMatrix post = proj * swapped * proj;

  const std::array<Index, 3> dims{d, d, 2};
  const std::array<bool, 3> keep{true, false, false};
  const ComplexMatrix sys = hermitize(partial_trace(post, dims, keep));

  ProtocolOutcome out;
  out.outcome_prob = sys.trace().real();
  if (!(out.outcome_prob > 0.0)) throw AnnihilatedStateError("simulate_sbs_protocol: |+> outcome has zero probability");
  out.state = sys / out.outcome_prob;
  return out;
}

/// The closed form the protocol realizes: (rho0 - eta{rho0, rhoa} + eta^2 rhoa),
/// unnormalized.
inline ComplexMatrix sbs_formula(const ComplexMatrix& rho0, const ComplexMatrix& rhoa, double eta) {
  return rho0 - eta * (rho0 * rhoa + rhoa * rho0) + eta * eta * rhoa;
}

}  // namespace eigensampler
