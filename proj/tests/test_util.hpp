// Shared test helpers: independent amplitude-space moment oracles and
// deterministic random-object generators.
#pragma once

#include <complex>
#include <random>

#include "unravel/hilbert.hpp"

namespace test_util {

using unravel::Complex;
using unravel::Operator;
using unravel::Vector;

// Independent Fock-amplitude moment evaluation (no Operator matrices).
inline Complex amp_mean_a(const Vector& c) {
  Complex sum(0.0, 0.0);
  for (Eigen::Index n = 0; n + 1 < c.size(); ++n) {
    sum += std::conj(c[n]) * std::sqrt(static_cast<double>(n + 1)) * c[n + 1];
  }
  return sum;
}

inline double amp_mean_n(const Vector& c) {
  double sum = 0.0;
  for (Eigen::Index n = 0; n < c.size(); ++n) sum += static_cast<double>(n) * std::norm(c[n]);
  return sum;
}

inline Complex amp_mean_aa(const Vector& c) {
  Complex sum(0.0, 0.0);
  for (Eigen::Index n = 0; n + 2 < c.size(); ++n) {
    sum += std::conj(c[n]) *
           std::sqrt(static_cast<double>((n + 1) * (n + 2))) * c[n + 2];
  }
  return sum;
}

// sigma^2(a) = <n> - |<a>|^2 from amplitudes alone.
inline double amp_msd_a(const Vector& c) { return amp_mean_n(c) - std::norm(amp_mean_a(c)); }

// sigma(a+, a) = <aa> - <a>^2 from amplitudes alone.
inline Complex amp_cov_adag_a(const Vector& c) {
  const Complex a = amp_mean_a(c);
  return amp_mean_aa(c) - a * a;
}

inline Vector random_state(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = Complex(normal(rng), normal(rng));
  v /= v.norm();
  return v;
}

inline Operator random_matrix(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Operator m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = Complex(normal(rng), normal(rng));
  }
  return m;
}

inline Operator random_hermitian(int dim, std::mt19937_64& rng) {
  const Operator m = random_matrix(dim, rng);
  return 0.5 * (m + m.adjoint());
}

inline Operator random_unitary(int dim, std::mt19937_64& rng) {
  const Operator m = random_matrix(dim, rng);
  Eigen::HouseholderQR<Operator> qr(m);
  Operator q = qr.householderQ();
  // fix the phase convention so Q is exactly unitary-deterministic
  return q;
}

}  // namespace test_util
