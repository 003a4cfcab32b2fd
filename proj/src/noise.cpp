#include "unravel/noise.hpp"

#include <cmath>
#include <sstream>

namespace unravel {

CorrelationFactor::CorrelationFactor(Complex value) : value_(value) {
  const double m = std::abs(value_);
  if (m > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "|c| = " << m << " lies outside the unit disk";
    throw std::domain_error(msg.str());
  }
  if (m > 1.0) value_ /= m;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32),
                    0x9e3779b9u};
  engine_.seed(seq);
}

double RngStream::gaussian() { return normal_(engine_); }

NoiseIncrement sample_increment(CorrelationFactor c, double dt, RngStream& rng) {
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  const Complex cv = c.value();
  const double mod = std::abs(cv);
  // dz = e^{i arg(c)/2} ( sqrt((1+|c|)/2) g1 + i sqrt((1-|c|)/2) g2 ) sqrt(dt)
  // realizes the required first and second moments exactly in distribution.
  // c = 0 has no phase; pin it to zero so signed zeros cannot flip it to pi.
  const double half_phase = mod == 0.0 ? 0.0 : 0.5 * std::arg(cv);
  const double wp = std::sqrt(0.5 * (1.0 + mod));
  const double wm = std::sqrt(std::max(0.0, 0.5 * (1.0 - mod)));
  const double g1 = rng.gaussian();
  const double g2 = rng.gaussian();
  return std::polar(1.0, half_phase) * Complex(wp * g1, wm * g2) * std::sqrt(dt);
}

CorrelationFactor correlation_from_alphas(const std::vector<Complex>& alphas) {
  Complex sum_sq(0.0, 0.0);
  double sum_abs = 0.0;
  for (const Complex& a : alphas) {
    sum_sq += a * a;
    sum_abs += std::norm(a);
  }
  if (sum_abs == 0.0) throw std::domain_error("all noise coefficients are zero");
  return CorrelationFactor(sum_sq / sum_abs);
}

Eigen::MatrixXcd correlation_matrix(const Eigen::MatrixXcd& betas,
                                    const std::vector<CorrelationFactor>& cs) {
  const auto j = betas.rows();
  if (betas.cols() != j || static_cast<Eigen::Index>(cs.size()) != j) {
    throw std::invalid_argument("betas must be JxJ with J correlation factors");
  }
  if (!is_unitary(betas)) throw std::domain_error("betas is not unitary");
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(j, j);
  for (Eigen::Index p = 0; p < j; ++p) {
    for (Eigen::Index q = 0; q < j; ++q) {
      Complex sum(0.0, 0.0);
      for (Eigen::Index i = 0; i < j; ++i) sum += betas(i, p) * betas(i, q) * cs[i].value();
      c(p, q) = sum;
    }
  }
  return c;
}

bool check_unitary_invariance(const std::vector<CorrelationFactor>& cs) {
  for (const CorrelationFactor& c : cs) {
    if (std::abs(c.value()) >= 1e-12) return false;
  }
  return true;
}

Eigen::VectorXcd sample_increments(const Eigen::MatrixXcd& corr, double dt, RngStream& rng) {
  if (!(dt > 0.0)) throw std::domain_error("dt must be positive");
  const auto j = corr.rows();
  if (corr.cols() != j || j < 1) throw std::invalid_argument("correlation matrix must be JxJ");
  if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::domain_error("correlation matrix must be symmetric");
  }

  // Covariance of the real vector (Re dz, Im dz), in units of dt.
  Eigen::MatrixXd sigma(2 * j, 2 * j);
  const Eigen::MatrixXd re = corr.real();
  const Eigen::MatrixXd im = corr.imag();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(j, j);
  sigma.topLeftCorner(j, j) = 0.5 * (eye + re);
  sigma.topRightCorner(j, j) = 0.5 * im;
  sigma.bottomLeftCorner(j, j) = 0.5 * im;
  sigma.bottomRightCorner(j, j) = 0.5 * (eye - re);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const double max_eig = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, max_eig)) {
    throw std::domain_error("correlation matrix is not realizable (joint covariance not PSD)");
  }
  Eigen::VectorXd scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();

  Eigen::VectorXd z(2 * j);
  for (Eigen::Index i = 0; i < 2 * j; ++i) z[i] = rng.gaussian();
  const Eigen::VectorXd w = std::sqrt(dt) * (es.eigenvectors() * scale.asDiagonal() * z);

  Eigen::VectorXcd dz(j);
  for (Eigen::Index k = 0; k < j; ++k) dz[k] = Complex(w[k], w[j + k]);
  return dz;
}

bool is_unitary(const Eigen::MatrixXcd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const Eigen::MatrixXcd p = m.adjoint() * m;
  return (p - Eigen::MatrixXcd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() < tol;
}

}  // namespace unravel
