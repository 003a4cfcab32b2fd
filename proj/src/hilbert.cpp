#include "unravel/hilbert.hpp"

#include <cmath>
#include <sstream>

namespace unravel {

namespace {

void check_dims(const Operator& op, const StateVector& psi) {
  if (op.rows() != op.cols() || op.rows() != psi.dim()) {
    std::ostringstream msg;
    msg << "operator is " << op.rows() << "x" << op.cols() << " but state has dim "
        << psi.dim();
    throw std::invalid_argument(msg.str());
  }
}

// Poisson weight |<n|alpha>|^2 evaluated in log space.
double poisson_weight(double mean_n, int n) {
  if (mean_n == 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(-mean_n + n * std::log(mean_n) - std::lgamma(n + 1.0));
}

}  // namespace

StateVector::StateVector(Vector amplitudes) : amps_(std::move(amplitudes)) {
  if (amps_.size() < 2) throw std::invalid_argument("state dimension must be >= 2");
  normalize();
}

void StateVector::normalize() {
  const double n = amps_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::runtime_error("cannot normalize a zero or non-finite state");
  }
  amps_ /= n;
}

Operator annihilation(int dim) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  Operator a = Operator::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

Operator creation(int dim) { return annihilation(dim).adjoint(); }

Operator number_operator(int dim) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  Operator n = Operator::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

bool is_hermitian(const Operator& op, double tol) {
  if (op.rows() != op.cols()) return false;
  return (op - op.adjoint()).cwiseAbs().maxCoeff() < tol;
}

StateVector fock_state(int dim, int n) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  if (n < 0 || n >= dim) {
    std::ostringstream msg;
    msg << "fock index " << n << " out of range for dim " << dim;
    throw std::out_of_range(msg.str());
  }
  Vector amps = Vector::Zero(dim);
  amps[n] = 1.0;
  return StateVector(std::move(amps));
}

StateVector coherent_state(int dim, Complex alpha) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  const double mean_n = std::norm(alpha);
  const double theta = std::arg(alpha);
  Vector amps = Vector::Zero(dim);
  double kept = 0.0;
  for (int n = 0; n < dim; ++n) {
    const double w = poisson_weight(mean_n, n);
    kept += w;
    amps[n] = std::sqrt(w) * std::polar(1.0, theta * n);
  }
  const double tail = 1.0 - kept;
  if (tail > kStateTailGate) {
    std::ostringstream msg;
    msg << "coherent state |alpha|^2 = " << mean_n << " leaves tail mass " << tail
        << " outside dim " << dim;
    throw TruncationError(msg.str());
  }
  return StateVector(std::move(amps));
}

StateVector cat_state(int dim, Complex alpha) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  const double mean_n = std::norm(alpha);
  const double theta = std::arg(alpha);
  Vector amps = Vector::Zero(dim);
  double kept_even = 0.0;
  for (int n = 0; n < dim; n += 2) {
    const double w = poisson_weight(mean_n, n);
    kept_even += w;
    amps[n] = std::sqrt(w) * std::polar(1.0, theta * n);
  }
  // Total even-sector mass of |alpha>: (1 + exp(-2|alpha|^2)) / 2.
  const double even_total = 0.5 * (1.0 + std::exp(-2.0 * mean_n));
  const double tail = 1.0 - kept_even / even_total;
  if (tail > kStateTailGate) {
    std::ostringstream msg;
    msg << "cat state |alpha|^2 = " << mean_n << " leaves even-sector tail " << tail
        << " outside dim " << dim;
    throw TruncationError(msg.str());
  }
  return StateVector(std::move(amps));
}

StateVector squeezed_state(int dim, const SqueezedParams& params) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  const double g = std::abs(params.gamma);
  if (g >= 1.0) {
    std::ostringstream msg;
    msg << "|gamma| = " << g << " >= 1 is not normalizable";
    throw std::domain_error(msg.str());
  }
  Vector amps = Vector::Zero(dim);
  amps[0] = 1.0;
  for (int n = 0; n + 1 < dim; ++n) {
    const Complex prev = n > 0 ? amps[n - 1] : Complex(0.0, 0.0);
    amps[n + 1] = (params.alpha * amps[n] + params.gamma * std::sqrt(static_cast<double>(n)) * prev) /
                  std::sqrt(static_cast<double>(n + 1));
  }
  StateVector psi(std::move(amps));

  const Operator a = annihilation(dim);
  const Vector res = a * psi.amplitudes() - params.gamma * (a.adjoint() * psi.amplitudes()) -
                     params.alpha * psi.amplitudes();
  const double residual = res.norm();
  if (residual > kSqueezedResidualGate) {
    std::ostringstream msg;
    msg << "squeezed state (|gamma| = " << g << ") has defining-relation residual " << residual
        << " at dim " << dim << "; enlarge the basis";
    throw TruncationError(msg.str());
  }
  return psi;
}

Complex expectation(const Operator& op, const StateVector& psi) {
  check_dims(op, psi);
  return psi.amplitudes().dot(op * psi.amplitudes());
}

Complex covariance(const Operator& a, const Operator& b, const StateVector& psi) {
  check_dims(a, psi);
  check_dims(b, psi);
  const Vector aw = a * psi.amplitudes();
  const Vector bw = b * psi.amplitudes();
  const Complex mean_a = psi.amplitudes().dot(aw);  // <A>
  const Complex mean_b = psi.amplitudes().dot(bw);  // <B>
  return aw.dot(bw) - std::conj(mean_a) * mean_b;
}

double mean_square_deviation(const Operator& op, const StateVector& psi) {
  return covariance(op, op, psi).real();
}

}  // namespace unravel
