// Complex noise increments d(zeta) with prescribed correlation factor
// c = E(d zeta^2)/dt, correlation-factor algebra, and deterministic
// per-trajectory RNG streams.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "unravel/hilbert.hpp"

namespace unravel {

/// Complex noise increment, units sqrt(time).
using NoiseIncrement = Complex;

/// Correlation factor c with |c| <= 1; values overshooting the disk by less
/// than 1e-12 are clamped onto it, anything beyond is rejected.
class CorrelationFactor {
 public:
  CorrelationFactor() = default;  // c = 0 (QSD)
  explicit CorrelationFactor(Complex value);
  Complex value() const { return value_; }

 private:
  Complex value_{0.0, 0.0};
};

/// Deterministic Gaussian stream keyed by (seed, stream_id); one per trajectory.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  double gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// One increment with E(dz) = 0, E|dz|^2 = dt, E(dz^2) = c dt.
/// Always consumes exactly two Gaussian draws.
NoiseIncrement sample_increment(CorrelationFactor c, double dt, RngStream& rng);

/// c = sum(alpha^2) / sum(|alpha|^2); always lands inside the unit disk.
CorrelationFactor correlation_from_alphas(const std::vector<Complex>& alphas);

/// c_jk = sum_i beta(i,j) beta(i,k) c_i for a unitary beta; output is symmetric.
Eigen::MatrixXcd correlation_matrix(const Eigen::MatrixXcd& betas,
                                    const std::vector<CorrelationFactor>& cs);

/// True iff every |c_j| < 1e-12 (the unraveling is invariant under unitary
/// transformations among the channels).
bool check_unitary_invariance(const std::vector<CorrelationFactor>& cs);

/// Joint sampler for J channels with fixed symmetric correlation matrix C:
/// E(dz_j dz_k*) = delta_jk dt, E(dz_j dz_k) = C_jk dt. Realized through the
/// 2Jx2J real covariance of (Re dz, Im dz); throws if C is not realizable.
Eigen::VectorXcd sample_increments(const Eigen::MatrixXcd& corr, double dt, RngStream& rng);

bool is_unitary(const Eigen::MatrixXcd& m, double tol = 1e-10);

}  // namespace unravel
