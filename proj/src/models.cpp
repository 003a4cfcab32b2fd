#include "unravel/models.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace unravel {

namespace {

constexpr Complex kImag{0.0, 1.0};

Operator kerr_term(double chi, int dim) {
  Operator h = Operator::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) {
    h(n, n) = 0.5 * chi * static_cast<double>(n) * static_cast<double>(n - 1);
  }
  return h;
}

Operator drive_term(double beta0, int dim) {
  const Operator a = annihilation(dim);
  return kImag * beta0 * (a.adjoint() - a);
}

long long checked_steps(double span, double dt, const char* what) {
  const auto n = static_cast<long long>(std::llround(span / dt));
  if (n < 1 || std::abs(n * dt - span) > 1e-9 * std::max(1.0, span)) {
    std::ostringstream msg;
    msg << what << " = " << span << " is not an integer multiple of dt = " << dt;
    throw std::invalid_argument(msg.str());
  }
  return n;
}

}  // namespace

Operator kicked_hamiltonian(const KickedOscillatorParams& params, int dim, double t) {
  const double period = params.period();
  double phase = std::fmod(t, period);
  if (phase < 0.0) phase += period;
  Operator h = kerr_term(params.chi, dim);
  if (phase < params.tau1) h += drive_term(params.beta0, dim);
  return h;
}

Hamiltonian make_kicked_hamiltonian(const KickedOscillatorParams& params, int dim, double dt) {
  struct Cached {
    Operator pulse;
    Operator free;
    long long pulse_steps;
    long long period_steps;
    double dt;
  };
  auto cached = std::make_shared<Cached>();
  cached->free = kerr_term(params.chi, dim);
  cached->pulse = cached->free + drive_term(params.beta0, dim);
  cached->pulse_steps = checked_steps(params.tau1, dt, "tau1");
  cached->period_steps = cached->pulse_steps + checked_steps(params.tau2, dt, "tau2");
  cached->dt = dt;
  return [cached](double t) -> const Operator* {
    const auto k = static_cast<long long>(std::llround(t / cached->dt));
    const long long phase = k % cached->period_steps;
    return phase < cached->pulse_steps ? &cached->pulse : &cached->free;
  };
}

KickedOscillatorParams apply_scaling(const KickedOscillatorParams& params, double lambda) {
  if (lambda < 1.0) throw std::domain_error("scaling lambda must be >= 1");
  KickedOscillatorParams out = params;
  out.tau1 *= lambda;
  out.tau2 *= lambda;
  out.kappa /= lambda;
  out.chi /= lambda * lambda * lambda;
  out.lambda_scale *= lambda;
  return out;
}

SqueezingEstimate squeezing_extract(const StateVector& psi, double floor) {
  const int dim = psi.dim();
  const Operator a = annihilation(dim);
  const Vector& amps = psi.amplitudes();
  const Vector a_psi = a * amps;
  const Complex mean_a = amps.dot(a_psi);
  const double msd = a_psi.squaredNorm() - std::norm(mean_a);
  const Complex mean_aa = amps.dot(a * a_psi);
  const Complex s = mean_aa - mean_a * mean_a;  // sigma(a+, a)

  SqueezingEstimate est;
  est.gamma = std::abs(s) < floor ? Complex(0.0, 0.0) : Complex(msd) / std::conj(s);
  est.alpha = mean_a - est.gamma * std::conj(mean_a);
  const Vector res = a_psi - est.gamma * (a.adjoint() * amps) - est.alpha * amps;
  est.residual = res.norm();
  return est;
}

std::vector<Complex> squeezing_ode_oracle(Complex gamma0, double kappa,
                                          const CorrelationPolicy& policy,
                                          const std::vector<double>& t_grid) {
  if (std::abs(gamma0) >= 1.0) throw std::domain_error("|gamma0| must be < 1");
  if (t_grid.empty()) return {};
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
    if (!(t_grid[i + 1] > t_grid[i])) {
      throw std::invalid_argument("t_grid must be strictly increasing");
    }
  }

  auto c_of = [&](Complex gamma) -> Complex {
    if (policy.kind() == CorrelationPolicy::Kind::kFixed) return policy.fixed_value();
    // Both adaptive rules reduce to c = r conj(gamma)/|gamma| on the squeezed
    // manifold, where sigma(a+,a) = sigma^2(a)/conj(gamma).
    const double g = std::abs(gamma);
    if (g < 1e-10) return Complex(0.0, 0.0);
    return policy.modulus_scale() * std::conj(gamma) / g;
  };
  auto rhs = [&](Complex gamma) { return -kappa * gamma * (1.0 + c_of(gamma) * gamma); };

  std::vector<Complex> out;
  out.reserve(t_grid.size());
  Complex gamma = gamma0;
  double t = 0.0;
  const double h_max = 1e-3 / std::max(kappa, 1e-12);
  for (double target : t_grid) {
    if (target < t - 1e-12) throw std::invalid_argument("t_grid must start at or after 0");
    while (t < target - 1e-12) {
      const double h = std::min(h_max, target - t);
      const Complex k1 = rhs(gamma);
      const Complex k2 = rhs(gamma + 0.5 * h * k1);
      const Complex k3 = rhs(gamma + 0.5 * h * k2);
      const Complex k4 = rhs(gamma + h * k3);
      gamma += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
    }
    out.push_back(gamma);
  }
  return out;
}

double hermitian_rate_prediction(Complex c, const StateVector& psi, const Operator& l) {
  if (!is_hermitian(l)) throw std::invalid_argument("operator must be hermitian");
  if (std::abs(c) > 1.0 + 1e-12) throw std::domain_error("|c| must be <= 1");
  const double msd = mean_square_deviation(l, psi);
  return -2.0 * (1.0 + c.real()) * msd * msd;
}

std::array<double, 3> annihilation_drift_decomposition(const StateVector& psi, Complex c) {
  if (std::abs(c) > 1.0 + 1e-12) throw std::domain_error("|c| must be <= 1");
  const int dim = psi.dim();
  const Operator a = annihilation(dim);
  const Vector& amps = psi.amplitudes();
  const Vector a_psi = a * amps;
  const Complex mean_a = amps.dot(a_psi);
  const double msd = a_psi.squaredNorm() - std::norm(mean_a);
  const Complex s = amps.dot(a * a_psi) - mean_a * mean_a;
  const double abs_s = std::abs(s);

  const double term1 = msd;
  const double term2 = (msd - abs_s) * (msd - abs_s);
  const double term3 = 2.0 * msd * (abs_s + (c * s).real());
  return {term1, term2, term3};
}

SqueezingTrack track_squeezing(const StateVector& psi0, double t_final,
                               const std::vector<LindbladChannel>& channels,
                               const SdeConfig& config, RngStream& rng, double stride) {
  RecordingPlan plan;
  plan.stride = stride;
  plan.observables.push_back(obs_squeezing_gamma_re("gamma_re"));
  plan.observables.push_back(obs_squeezing_gamma_im("gamma_im"));
  plan.observables.push_back(
      {"alpha_re", [](const StateVector& psi) { return squeezing_extract(psi).alpha.real(); }});
  plan.observables.push_back(
      {"alpha_im", [](const StateVector& psi) { return squeezing_extract(psi).alpha.imag(); }});
  plan.observables.push_back(obs_squeezing_residual("residual"));

  const TrajectoryResult res =
      run_trajectory(psi0, t_final, no_hamiltonian(), channels, config, rng, plan);
  SqueezingTrack track;
  track.times = res.times;
  for (Eigen::Index r = 0; r < res.values.rows(); ++r) {
    track.gamma.emplace_back(res.values(r, 0), res.values(r, 1));
    track.alpha.emplace_back(res.values(r, 2), res.values(r, 3));
    track.residual.push_back(res.values(r, 4));
  }
  return track;
}

ObservableSpec obs_squeezing_gamma_re(std::string name) {
  return {std::move(name),
          [](const StateVector& psi) { return squeezing_extract(psi).gamma.real(); }};
}

ObservableSpec obs_squeezing_gamma_im(std::string name) {
  return {std::move(name),
          [](const StateVector& psi) { return squeezing_extract(psi).gamma.imag(); }};
}

ObservableSpec obs_squeezing_residual(std::string name) {
  return {std::move(name), [](const StateVector& psi) { return squeezing_extract(psi).residual; }};
}

}  // namespace unravel
