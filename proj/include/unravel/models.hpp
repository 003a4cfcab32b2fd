// Physical model definitions (wide-open damped oscillator, kicked anharmonic
// oscillator with classicality scaling) and derived observables: squeezing
// extraction, localization-rate predictions and the squeezing ODE oracle.
#pragma once

#include <array>
#include <vector>

#include "unravel/sde.hpp"

namespace unravel {

struct KickedOscillatorParams {
  double beta0 = 2.0;        // drive amplitude, 1/time
  double tau1 = 0.98;        // pulse length
  double tau2 = 1.0;         // pulse separation
  double chi = 1.0;          // anharmonicity, 1/time
  double kappa = 0.5;        // damping rate, 1/time
  double lambda_scale = 1.0; // accumulated classicality scaling

  double period() const { return tau1 + tau2; }
};

/// H(t) = i beta(t) (a+ - a) + 1/2 chi a+^2 a^2, beta(t) = beta0 on pulses.
Operator kicked_hamiltonian(const KickedOscillatorParams& params, int dim, double t);

/// Grid-aligned pulse switching: tau1 and tau2 must be integer multiples of
/// dt, so pulse edges land exactly on integration steps.
Hamiltonian make_kicked_hamiltonian(const KickedOscillatorParams& params, int dim, double dt);

/// t~ = lambda t, kappa~ = kappa/lambda, chi~ = chi/lambda^3, beta0 unchanged.
/// Simulation times (tau1, tau2, t_final, dt) all stretch by lambda.
KickedOscillatorParams apply_scaling(const KickedOscillatorParams& params, double lambda);

struct SqueezingEstimate {
  Complex gamma{0.0, 0.0};
  Complex alpha{0.0, 0.0};
  double residual = 0.0;  // |(a - gamma a+ - alpha) psi|; check before trusting gamma
};

/// gamma = sigma^2(a)/conj(sigma(a+,a)), alpha = <a> - gamma <a+>.
SqueezingEstimate squeezing_extract(const StateVector& psi, double floor = 1e-10);

/// Per-output-time squeezing labels along one trajectory.
struct SqueezingTrack {
  std::vector<double> times;
  std::vector<Complex> gamma;
  std::vector<Complex> alpha;
  std::vector<double> residual;
};

/// Runs one trajectory and extracts (gamma, alpha, residual) every stride.
SqueezingTrack track_squeezing(const StateVector& psi0, double t_final,
                               const std::vector<LindbladChannel>& channels,
                               const SdeConfig& config, RngStream& rng, double stride);

/// RK4 solution of d gamma = -kappa gamma (1 + c gamma) dt with c supplied by
/// the policy (adaptive kinds give c = r conj(gamma)/|gamma|).
std::vector<Complex> squeezing_ode_oracle(Complex gamma0, double kappa,
                                          const CorrelationPolicy& policy,
                                          const std::vector<double>& t_grid);

/// Instantaneous ensemble localization drift -2 (1 + Re c) sigma^2(L)^2 of a
/// hermitian operator at a pure state.
double hermitian_rate_prediction(Complex c, const StateVector& psi, const Operator& l);

/// The three non-negative terms whose sum, times -kappa, is the deterministic
/// part of d sigma^2(a)/dt for L = sqrt(kappa) a:
///   sigma^2(a),
///   (sigma^2(a) - |sigma(a+,a)|)^2,
///   2 sigma^2(a) (|sigma(a+,a)| + Re{c sigma(a+,a)}).
std::array<double, 3> annihilation_drift_decomposition(const StateVector& psi, Complex c);

// Squeezing-label observables for trajectory recording.
ObservableSpec obs_squeezing_gamma_re(std::string name);
ObservableSpec obs_squeezing_gamma_im(std::string name);
ObservableSpec obs_squeezing_residual(std::string name);

}  // namespace unravel
