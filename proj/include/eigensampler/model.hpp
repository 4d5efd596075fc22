#pragma once

// Decomposable Hamiltonians H = sum_k h_k whose terms are diagonal in a
// product basis (computational Z basis or the X basis |+>, |->), and the
// projector sampling distribution rho = (H + sum_k c_k I) / C built from them.
//
// Site ordering is big-endian throughout: site 0 is the most significant bit
// of a basis index. A set bit at site i means |1> in the Z basis and |-> in the
// X basis.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eigensampler/error.hpp"
#include "eigensampler/qlinalg.hpp"

namespace eigensampler {

inline constexpr int kMaxDenseQubits = 12;
inline constexpr int kMaxStateQubits = 20;

enum class Basis { Z, X };

inline char basis_char(Basis b) { return b == Basis::Z ? 'Z' : 'X'; }

/// Rank-1 projector onto a Z- or X-basis product state.
struct ProductProjector {
  Basis basis = Basis::Z;
  std::uint64_t bits = 0;
  int qubits = 0;

  friend bool operator==(const ProductProjector&, const ProductProjector&) = default;

  /// Bit of site i (site 0 = most significant).
  [[nodiscard]] int site_bit(int site) const { return static_cast<int>((bits >> (qubits - 1 - site)) & 1U); }

  /// "Z:0101" style identifier, sites in order.
  [[nodiscard]] std::string id() const {
    std::string s(1, basis_char(basis));
    s += ':';
    for (int i = 0; i < qubits; ++i) s += static_cast<char>('0' + site_bit(i));
    return s;
  }
};

inline ProductProjector parse_product(Basis basis, const std::string& bitstring) {
  if (bitstring.empty() || bitstring.size() > static_cast<std::size_t>(kMaxStateQubits))
    throw InvalidArgument("product state bitstring must have 1.." + std::to_string(kMaxStateQubits) + " sites");
  std::uint64_t bits = 0;
  for (char c : bitstring) {
    if (c != '0' && c != '1') throw InvalidArgument("product state bitstring may only contain 0 and 1");
    bits = (bits << 1) | static_cast<std::uint64_t>(c - '0');
  }
  return {basis, bits, static_cast<int>(bitstring.size())};
}

/// Dense unit vector of a product state. Z basis gives a one-hot vector, X
/// basis gives entries (-1)^{popcount(k & bits)} / 2^{n/2}.
inline ComplexVector projector_vector(const ProductProjector& p) {
  if (p.qubits < 1 || p.qubits > kMaxStateQubits) throw DimensionError("projector_vector: qubit count out of range");
  const Index dim = Index{1} << p.qubits;
  ComplexVector v = ComplexVector::Zero(dim);
  if (p.basis == Basis::Z) {
    v(static_cast<Index>(p.bits)) = 1.0;
  } else {
    const double amp = std::pow(2.0, -0.5 * p.qubits);
    for (Index k = 0; k < dim; ++k) v(k) = amp * parity_sign(static_cast<std::uint64_t>(k), p.bits);
  }
  return v;
}

/// One solvable term: diagonal in a product basis, with the eigenvalue of
/// every basis state stored explicitly.
class HamiltonianTerm {
 public:
  HamiltonianTerm(std::string label, Basis basis, int qubits, std::vector<double> spectrum)
      : label_(std::move(label)), basis_(basis), qubits_(qubits), spectrum_(std::move(spectrum)) {
    if (qubits_ < 1 || qubits_ > kMaxStateQubits) throw DimensionError("HamiltonianTerm: qubit count out of range");
    if (spectrum_.size() != (std::size_t{1} << qubits_))
      throw DimensionError("HamiltonianTerm: spectrum length must be 2^n");
  }

  /// Builds the spectrum by evaluating `energy(bits)` on every basis state.
  static HamiltonianTerm from_function(std::string label, Basis basis, int qubits,
                                       const std::function<double(std::uint64_t)>& energy) {
    if (qubits < 1 || qubits > kMaxStateQubits) throw DimensionError("HamiltonianTerm: qubit count out of range");
    std::vector<double> spec(std::size_t{1} << qubits);
    for (std::size_t b = 0; b < spec.size(); ++b) spec[b] = energy(b);
    return {std::move(label), basis, qubits, std::move(spec)};
  }

  [[nodiscard]] const std::string& label() const { return label_; }
  [[nodiscard]] Basis basis() const { return basis_; }
  [[nodiscard]] int qubits() const { return qubits_; }
  [[nodiscard]] std::size_t size() const { return spectrum_.size(); }
  [[nodiscard]] std::span<const double> spectrum() const { return spectrum_; }
  [[nodiscard]] double eigenvalue(std::uint64_t bits) const { return spectrum_.at(bits); }
  [[nodiscard]] ProductProjector projector(std::uint64_t bits) const { return {basis_, bits, qubits_}; }

  [[nodiscard]] double min_eigenvalue() const {
    double m = std::numeric_limits<double>::infinity();
    for (double x : spectrum_) m = std::min(m, x);
    return m;
  }

  /// Calls f(eigenvalue, projector) for all 2^n basis states.
  template <class F>
  void for_each_eigenpair(F&& f) const {
    for (std::size_t b = 0; b < spectrum_.size(); ++b) f(spectrum_[b], projector(b));
  }

  /// Dense sum_i lambda_i P_i. An X-basis term has entries depending only on
  /// j XOR k, obtained from one Walsh-Hadamard transform of the spectrum.
  [[nodiscard]] ComplexMatrix matrix() const {
    if (qubits_ > kMaxDenseQubits) throw DimensionError("HamiltonianTerm::matrix: more than 12 qubits");
    const Index dim = Index{1} << qubits_;
    if (basis_ == Basis::Z) {
      ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
      for (Index k = 0; k < dim; ++k) m(k, k) = spectrum_[static_cast<std::size_t>(k)];
      return m;
    }
    std::vector<double> f(spectrum_);
    walsh_hadamard<double>(f);
    const double scale = 1.0 / static_cast<double>(dim);
    ComplexMatrix m(dim, dim);
    for (Index j = 0; j < dim; ++j)
      for (Index k = 0; k < dim; ++k) m(j, k) = f[static_cast<std::size_t>(j ^ k)] * scale;
    return m;
  }

 private:
  std::string label_;
  Basis basis_;
  int qubits_;
  std::vector<double> spectrum_;
};

namespace detail {

inline double spin(std::uint64_t bits, int qubits, int site) {
  return ((bits >> (qubits - 1 - site)) & 1U) ? -1.0 : 1.0;
}

inline HamiltonianTerm bond_chain(const char* label, Basis basis, int qubits, double coeff, bool periodic) {
  if (qubits < 2) throw InvalidArgument("bond chain needs at least 2 sites");
  return HamiltonianTerm::from_function(label, basis, qubits, [=](std::uint64_t b) {
    double e = 0.0;
    for (int i = 0; i + 1 < qubits; ++i) e += spin(b, qubits, i) * spin(b, qubits, i + 1);
    if (periodic) e += spin(b, qubits, qubits - 1) * spin(b, qubits, 0);
    return coeff * e;
  });
}

inline HamiltonianTerm field(const char* label, Basis basis, int qubits, double coeff) {
  return HamiltonianTerm::from_function(label, basis, qubits, [=](std::uint64_t b) {
    double e = 0.0;
    for (int i = 0; i < qubits; ++i) e += spin(b, qubits, i);
    return coeff * e;
  });
}

}  // namespace detail

/// coeff * sum_i Z_i Z_{i+1}. With periodic boundaries the bond (n-1, 0) is
/// included, so for two sites the single bond is counted twice.
inline HamiltonianTerm zz_chain(int qubits, double coeff, bool periodic = true) {
  return detail::bond_chain("zz", Basis::Z, qubits, coeff, periodic);
}

/// coeff * sum_i X_i X_{i+1}.
inline HamiltonianTerm xx_chain(int qubits, double coeff, bool periodic = true) {
  return detail::bond_chain("xx", Basis::X, qubits, coeff, periodic);
}

/// coeff * sum_i Z_i.
inline HamiltonianTerm z_field(int qubits, double coeff) { return detail::field("z", Basis::Z, qubits, coeff); }

/// coeff * sum_i X_i.
inline HamiltonianTerm x_field(int qubits, double coeff) { return detail::field("x", Basis::X, qubits, coeff); }

/// Transverse-field Ising chain -J sum Z_i Z_{i+1} - B sum X_i, optionally
/// with a third solvable term -K sum X_i X_{i+1} (the XX-ZZ extension).
inline std::vector<HamiltonianTerm> build_tfim(int sites, double coupling, double field_strength, bool periodic = true,
                                               std::optional<double> xx_coupling = std::nullopt) {
  if (sites < 2) throw InvalidArgument("build_tfim: need at least 2 sites");
  std::vector<HamiltonianTerm> terms;
  terms.push_back(zz_chain(sites, -coupling, periodic));
  terms.push_back(x_field(sites, -field_strength));
  if (xx_coupling) terms.push_back(xx_chain(sites, -*xx_coupling, periodic));
  return terms;
}

inline int common_qubit_count(std::span<const HamiltonianTerm> terms) {
  if (terms.empty()) throw InvalidArgument("empty term list");
  const int n = terms.front().qubits();
  for (const auto& t : terms)
    if (t.qubits() != n) throw DimensionError("terms act on different qubit counts");
  return n;
}

inline ComplexMatrix hamiltonian_matrix(std::span<const HamiltonianTerm> terms) {
  const int n = common_qubit_count(terms);
  if (n > kMaxDenseQubits) throw DimensionError("hamiltonian_matrix: more than 12 qubits");
  const Index dim = Index{1} << n;
  ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
  for (const auto& t : terms) h += t.matrix();
  return h;
}

struct DistributionEntry {
  double probability = 0.0;
  ProductProjector projector;
  std::size_t term = 0;  // index of the originating term
};

/// Probability-weighted product projectors realizing
/// rho = sum p_i P_i = (H + sum_j c_j I) / C.
struct SamplingDistribution {
  int qubits = 0;
  std::vector<DistributionEntry> entries;
  std::vector<double> shifts;  // c_j per term
  double normalization = 0.0;  // C

  [[nodiscard]] double total_shift() const {
    double s = 0.0;
    for (double c : shifts) s += c;
    return s;
  }
};

/// Shifts default to c_j = -min_i lambda_ij, which drops every term's ground
/// states from the distribution. Zero-weight entries are omitted.
inline SamplingDistribution build_distribution(std::span<const HamiltonianTerm> terms,
                                               std::optional<std::vector<double>> shifts = std::nullopt) {
  const int n = common_qubit_count(terms);
  SamplingDistribution dist;
  dist.qubits = n;
  if (shifts) {
    if (shifts->size() != terms.size()) throw InvalidArgument("build_distribution: one shift per term required");
    dist.shifts = *shifts;
  } else {
    for (const auto& t : terms) dist.shifts.push_back(-t.min_eigenvalue());
  }
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const double floor = -terms[j].min_eigenvalue();
    // Relative slack so the default shift itself never trips the check.
    if (dist.shifts[j] < floor - 1e-12 * std::max(1.0, std::abs(floor)))
      throw InvalidArgument("build_distribution: shift for term '" + terms[j].label() +
                            "' is below -min eigenvalue (negative weight)");
  }

  double total = 0.0;
  for (std::size_t j = 0; j < terms.size(); ++j)
    for (double lam : terms[j].spectrum()) total += std::max(0.0, lam + dist.shifts[j]);
  if (!(total > 0.0)) throw InvalidArgument("build_distribution: all shifted eigenvalues vanish");
  dist.normalization = total;

  for (std::size_t j = 0; j < terms.size(); ++j)
    terms[j].for_each_eigenpair([&](double lam, const ProductProjector& p) {
      const double w = lam + dist.shifts[j];
      if (w > 1e-14 * total) dist.entries.push_back({w / total, p, j});
    });
  return dist;
}

/// sum_i p_i P_i as a dense matrix.
inline ComplexMatrix reconstruct_density(const SamplingDistribution& dist) {
  if (dist.qubits > kMaxDenseQubits) throw DimensionError("reconstruct_density: more than 12 qubits");
  const Index dim = Index{1} << dist.qubits;
  ComplexMatrix rho = ComplexMatrix::Zero(dim, dim);
  for (const auto& e : dist.entries) {
    const ComplexVector v = projector_vector(e.projector);
    rho.noalias() += e.probability * v * v.adjoint();
  }
  return rho;
}

}  // namespace eigensampler
