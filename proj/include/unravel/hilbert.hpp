// Finite-dimensional Hilbert-space toolkit: states on a truncated Fock basis,
// dense operators, expectation values and quantum covariances.
#pragma once

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace unravel {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Operator = Eigen::MatrixXcd;

inline constexpr double kHermitianTol = 1e-12;

// Tail mass a coherent/cat constructor may silently drop. States needing more
// room than this must be built on a larger basis.
inline constexpr double kStateTailGate = 1e-6;

// Acceptance gate on the defining-relation residual of squeezed_state. The
// residual itself decays with the basis size and is always available through
// squeezing_extract for consumers that need a tighter bound.
inline constexpr double kSqueezedResidualGate = 1e-2;

/// Requested state does not fit the truncated basis.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normalized pure state |psi> on a dim-dimensional basis, dim >= 2.
class StateVector {
 public:
  explicit StateVector(Vector amplitudes);

  int dim() const { return static_cast<int>(amps_.size()); }
  const Vector& amplitudes() const { return amps_; }
  /// Raw access for steppers; callers are responsible for re-normalizing.
  Vector& mutable_amplitudes() { return amps_; }

  double norm() const { return amps_.norm(); }
  void normalize();

 private:
  Vector amps_;
};

/// Squeezed-state labels: (a - gamma a+ - alpha)|gamma,alpha> = 0, |gamma| < 1.
struct SqueezedParams {
  Complex gamma{0.0, 0.0};
  Complex alpha{0.0, 0.0};
};

// Ladder matrices on the truncated basis: a[n-1,n] = sqrt(n).
Operator annihilation(int dim);
Operator creation(int dim);
Operator number_operator(int dim);

bool is_hermitian(const Operator& op, double tol = kHermitianTol);

StateVector fock_state(int dim, int n);
StateVector coherent_state(int dim, Complex alpha);
/// Even cat (|alpha> + |-alpha>)/N; normalization accounts for the overlap.
StateVector cat_state(int dim, Complex alpha);
/// Built by the amplitude recurrence sqrt(n+1) c_{n+1} = alpha c_n + gamma sqrt(n) c_{n-1}.
StateVector squeezed_state(int dim, const SqueezedParams& params);

/// <psi|O|psi>
Complex expectation(const Operator& op, const StateVector& psi);
/// sigma(A,B) = <A+ B> - <A+><B>
Complex covariance(const Operator& a, const Operator& b, const StateVector& psi);
/// sigma^2(L) = Re sigma(L,L); >= -1e-12 for any state.
double mean_square_deviation(const Operator& op, const StateVector& psi);

}  // namespace unravel
