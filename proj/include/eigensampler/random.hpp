#pragma once

// Seeded random streams and random test objects (states, unitaries).

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace eigensampler {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the k-th independent stream derived from a base seed. Streams for
/// distinct k are decorrelated by two rounds of splitmix64.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t k) {
  return splitmix64(splitmix64(seed) ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t k) {
  return Rng(derive_stream_seed(seed, k));
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform,
/// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller on our own uniforms keeps the sequence implementation-independent.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Eigen::MatrixXcd random_ginibre(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXcd g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      g(i, j) = std::complex<double>(standard_normal(rng), standard_normal(rng));
  return g;
}

inline Eigen::VectorXcd random_pure_state(Eigen::Index dim, Rng& rng) {
  Eigen::VectorXcd v = random_ginibre(dim, 1, rng);
  return v / v.norm();
}

/// Random density matrix G G† / Tr, with G of shape dim x rank.
inline Eigen::MatrixXcd random_density_matrix(Eigen::Index dim, Rng& rng, Eigen::Index rank = -1) {
  if (rank <= 0) rank = dim;
  const Eigen::MatrixXcd g = random_ginibre(dim, rank, rng);
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return (rho + rho.adjoint()) / 2.0;
}

inline Eigen::MatrixXcd random_hermitian(Eigen::Index dim, Rng& rng) {
  const Eigen::MatrixXcd g = random_ginibre(dim, dim, rng);
  return (g + g.adjoint()) / 2.0;
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
inline Eigen::MatrixXcd random_unitary(Eigen::Index dim, Rng& rng) {
  const Eigen::MatrixXcd g = random_ginibre(dim, dim, rng);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    const std::complex<double> d = r(j, j);
    const double mag = std::abs(d);
    if (mag > 0) q.col(j) *= d / mag;
  }
  return q;
}

}  // namespace eigensampler
