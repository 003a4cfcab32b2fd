// Ito stochastic Schrodinger equation for the continuous norm-preserving
// unravelings of the Lindblad master equation. An unraveling is selected by
// the per-channel noise correlation factor c = E(d zeta^2)/dt, either fixed
// or evaluated adaptively from the pre-step state.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unravel/hilbert.hpp"
#include "unravel/noise.hpp"

namespace unravel {

/// Rule producing the per-step correlation factor of one channel.
///   Fixed(c)            constant c, |c| <= 1.
///   CovariancePhase(r)  c = r * conj(sigma(L+,L)) / |sigma(L+,L)|.
///   SqueezedPhase(r)    c = r * conj(gamma) / |gamma|, gamma from the
///                       squeezing relation gamma = sigma^2(L)/conj(sigma(L+,L)).
/// Both adaptive rules fall back to c = 0 (QSD) when the controlling quantity
/// drops below the configured floor.
class CorrelationPolicy {
 public:
  enum class Kind { kFixed, kCovariancePhase, kSqueezedPhase };

  static CorrelationPolicy fixed(Complex c);
  static CorrelationPolicy covariance_phase(double r);
  static CorrelationPolicy squeezed_phase(double r);

  Kind kind() const { return kind_; }
  Complex fixed_value() const { return c_; }
  double modulus_scale() const { return r_; }

 private:
  CorrelationPolicy(Kind kind, Complex c, double r) : kind_(kind), c_(c), r_(r) {}
  Kind kind_ = Kind::kFixed;
  Complex c_{0.0, 0.0};
  double r_ = 0.0;
};

/// One environment coupling: the Lindblad operator (any sqrt(rate) prefactor
/// included) plus its noise policy.
struct LindbladChannel {
  LindbladChannel(Operator lindblad_op, CorrelationPolicy noise_policy);

  Operator op;
  Operator op_dag_op;  // cached L+L
  CorrelationPolicy policy;
};

/// H(t) accessor; a null function or a null pointer result means H = 0. The
/// returned pointer must stay valid until the next call (steppers cache the
/// diagonal per distinct operator identity).
using Hamiltonian = std::function<const Operator*(double)>;

Hamiltonian no_hamiltonian();
Hamiltonian constant_hamiltonian(Operator h);

struct SdeConfig {
  double dt = 1e-3;
  bool renormalize_every_step = true;
  // Below this magnitude the phase of sigma(L+,L) (or gamma) is numerically
  // meaningless; adaptive policies return c = 0 there.
  double adaptive_floor = 1e-10;
  // Propagate the diagonal of the deterministic generator exactly instead of
  // by the Euler increment. Needed for stiff Kerr-type diagonals where the
  // explicit step size would be dictated by the top of the basis.
  bool exponential_diagonal = false;
  // Fixed joint correlation matrix for J > 1 correlated noise. When set, the
  // per-channel policies must all be Fixed and are superseded by this matrix.
  std::optional<Eigen::MatrixXcd> joint_correlation;
};

class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, double t) : std::runtime_error(what), time(t) {}
  double time = 0.0;
};

/// Deterministic part of the increment:
///   |v> = -i H |psi> - 1/2 sum_j (L+L + <L+><L> - 2<L+>L) |psi>
Vector drift(const StateVector& psi, const Operator* h,
             const std::vector<LindbladChannel>& channels);

/// (L - <L>)|psi>; orthogonal to |psi>.
Vector diffusion_vector(const StateVector& psi, const LindbladChannel& channel);

CorrelationFactor evaluate_policy(const CorrelationPolicy& policy, const StateVector& psi,
                                  const LindbladChannel& channel, double adaptive_floor = 1e-10);

struct StepInfo {
  double prenorm = 1.0;  // norm of psi + d psi before renormalization
};

/// One Euler-Maruyama step of
///   |d psi> = |v> dt + sum_k (L_k - <L_k>)|psi> d zeta_k
/// with each d zeta_k drawn at the policy-evaluated c of the pre-step state,
/// followed by renormalization when configured.
StateVector step(const StateVector& psi, double t, const Hamiltonian& h,
                 const std::vector<LindbladChannel>& channels, const SdeConfig& config,
                 RngStream& rng, StepInfo* info = nullptr);

/// Reusable stepper holding per-trajectory workspace; the referenced
/// Hamiltonian, channels and config must outlive it.
class SdeStepper {
 public:
  SdeStepper(const Hamiltonian* h, const std::vector<LindbladChannel>* channels,
             const SdeConfig* config);
  ~SdeStepper();
  SdeStepper(SdeStepper&&) noexcept;
  SdeStepper& operator=(SdeStepper&&) = delete;

  void advance(Vector& psi, double t, RngStream& rng, StepInfo* info = nullptr);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ObservableSpec {
  std::string name;
  std::function<double(const StateVector&)> eval;
};

struct RecordingPlan {
  double stride = 0.0;  // 0 records every step
  std::vector<ObservableSpec> observables;
  std::vector<double> snapshot_times;  // states captured at these times
};

struct TrajectoryResult {
  std::vector<double> times;
  Eigen::MatrixXd values;          // times.size() x observables.size()
  std::vector<Vector> snapshots;   // one per requested snapshot time
  double max_tail_population = 0.0;  // peak population of the top two levels
  double max_norm_deviation = 0.0;   // peak |prenorm - 1|
};

TrajectoryResult run_trajectory(const StateVector& psi0, double t_final, const Hamiltonian& h,
                                const std::vector<LindbladChannel>& channels,
                                const SdeConfig& config, RngStream& rng,
                                const RecordingPlan& plan);

/// Transformed channel set L~_k = sum_j conj(u_jk) (L_j + lambda_j 1). For
/// lambda != 0 the master dynamics match only after adding hamiltonian_shift
/// to H alongside the new channels.
struct ChannelTransform {
  std::vector<LindbladChannel> channels;
  Operator hamiltonian_shift;
};

ChannelTransform transform_channels(const std::vector<LindbladChannel>& channels,
                                    const Eigen::MatrixXcd& u,
                                    const std::vector<Complex>& lambdas);

// Ready-made observables.
ObservableSpec obs_msd(std::string name, Operator op);
ObservableSpec obs_expect_re(std::string name, Operator op);
ObservableSpec obs_expect_im(std::string name, Operator op);
ObservableSpec obs_abs_covariance(std::string name, Operator a, Operator b);

}  // namespace unravel
