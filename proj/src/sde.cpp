#include "unravel/sde.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace unravel {

namespace {

constexpr Complex kImag{0.0, 1.0};

// Shared core of the adaptive policies. msd = sigma^2(L), s = sigma(L+,L).
CorrelationFactor policy_value(const CorrelationPolicy& policy, double msd, Complex s,
                               double floor) {
  switch (policy.kind()) {
    case CorrelationPolicy::Kind::kFixed:
      return CorrelationFactor(policy.fixed_value());
    case CorrelationPolicy::Kind::kCovariancePhase: {
      // r = 0 must reduce to QSD exactly (no -0.0 phase artifacts)
      if (policy.modulus_scale() == 0.0) return CorrelationFactor();
      const double mag = std::abs(s);
      if (mag < floor) return CorrelationFactor();
      return CorrelationFactor(policy.modulus_scale() * std::conj(s) / mag);
    }
    case CorrelationPolicy::Kind::kSqueezedPhase: {
      if (policy.modulus_scale() == 0.0) return CorrelationFactor();
      const double mag = std::abs(s);
      if (mag < floor) return CorrelationFactor();
      const Complex gamma = msd / std::conj(s);
      const double gmag = std::abs(gamma);
      if (gmag < floor) return CorrelationFactor();
      return CorrelationFactor(policy.modulus_scale() * std::conj(gamma) / gmag);
    }
  }
  return CorrelationFactor();
}

bool policy_is_adaptive(const CorrelationPolicy& p) {
  return p.kind() != CorrelationPolicy::Kind::kFixed;
}

}  // namespace

CorrelationPolicy CorrelationPolicy::fixed(Complex c) {
  CorrelationFactor check(c);  // validates the unit disk
  return CorrelationPolicy(Kind::kFixed, check.value(), std::abs(check.value()));
}

CorrelationPolicy CorrelationPolicy::covariance_phase(double r) {
  if (r < 0.0 || r > 1.0) throw std::domain_error("correlation modulus scale r must be in [0,1]");
  return CorrelationPolicy(Kind::kCovariancePhase, Complex(0.0, 0.0), r);
}

CorrelationPolicy CorrelationPolicy::squeezed_phase(double r) {
  if (r < 0.0 || r > 1.0) throw std::domain_error("correlation modulus scale r must be in [0,1]");
  return CorrelationPolicy(Kind::kSqueezedPhase, Complex(0.0, 0.0), r);
}

LindbladChannel::LindbladChannel(Operator lindblad_op, CorrelationPolicy noise_policy)
    : op(std::move(lindblad_op)), policy(noise_policy) {
  if (op.rows() != op.cols()) throw std::invalid_argument("Lindblad operator must be square");
  op_dag_op = op.adjoint() * op;
}

Hamiltonian no_hamiltonian() { return Hamiltonian(); }

Hamiltonian constant_hamiltonian(Operator h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("Hamiltonian must be square");
  auto shared = std::make_shared<Operator>(std::move(h));
  return [shared](double) -> const Operator* { return shared.get(); };
}

Vector drift(const StateVector& psi, const Operator* h,
             const std::vector<LindbladChannel>& channels) {
  const Vector& amps = psi.amplitudes();
  Vector v = Vector::Zero(amps.size());
  if (h != nullptr) {
    if (h->rows() != amps.size()) throw std::invalid_argument("Hamiltonian dimension mismatch");
    v.noalias() -= kImag * (*h * amps);
  }
  for (const LindbladChannel& ch : channels) {
    if (ch.op.rows() != amps.size()) throw std::invalid_argument("channel dimension mismatch");
    const Vector l_psi = ch.op * amps;
    const Complex mean_l = amps.dot(l_psi);
    v.noalias() -= 0.5 * (ch.op_dag_op * amps);
    v.noalias() -= 0.5 * std::norm(mean_l) * amps;
    v.noalias() += std::conj(mean_l) * l_psi;
  }
  return v;
}

Vector diffusion_vector(const StateVector& psi, const LindbladChannel& channel) {
  const Vector& amps = psi.amplitudes();
  if (channel.op.rows() != amps.size()) throw std::invalid_argument("channel dimension mismatch");
  Vector u = channel.op * amps;
  const Complex mean_l = amps.dot(u);
  u -= mean_l * amps;
  return u;
}

CorrelationFactor evaluate_policy(const CorrelationPolicy& policy, const StateVector& psi,
                                  const LindbladChannel& channel, double adaptive_floor) {
  if (policy.kind() == CorrelationPolicy::Kind::kFixed) {
    return CorrelationFactor(policy.fixed_value());
  }
  const Vector& amps = psi.amplitudes();
  const Vector l_psi = channel.op * amps;
  const Complex mean_l = amps.dot(l_psi);
  const double msd = l_psi.squaredNorm() - std::norm(mean_l);
  const Complex mean_ll = amps.dot(channel.op * l_psi);
  const Complex s = mean_ll - mean_l * mean_l;
  return policy_value(policy, msd, s, adaptive_floor);
}

struct SdeStepper::Impl {
  const Hamiltonian* h;
  const std::vector<LindbladChannel>* channels;
  const SdeConfig* config;

  Vector accum, w_l, w_tmp;
  // caches for the exponential-diagonal variant
  std::vector<Eigen::VectorXcd> diag_k;  // diag(L+L) per channel
  Eigen::VectorXcd half_diag_k;          // 1/2 sum_j diag(L+L)
  const Operator* cached_h = nullptr;
  bool diag_ready = false;
  Eigen::VectorXcd diag_h;               // diag of the cached H
  Eigen::VectorXcd diag_exp;             // exp(dt * (-i diag_h - half_diag_k))

  Impl(const Hamiltonian* h_in, const std::vector<LindbladChannel>* ch, const SdeConfig* cfg)
      : h(h_in), channels(ch), config(cfg) {
    if (cfg->joint_correlation) {
      const auto& c = *cfg->joint_correlation;
      if (c.rows() != static_cast<Eigen::Index>(ch->size())) {
        throw std::invalid_argument("joint correlation matrix size must match channel count");
      }
      for (const LindbladChannel& channel : *ch) {
        if (policy_is_adaptive(channel.policy)) {
          throw std::invalid_argument(
              "joint correlated noise requires fixed per-channel policies");
        }
      }
    }
    if (cfg->exponential_diagonal && !ch->empty()) {
      const auto dim = (*ch)[0].op.rows();
      half_diag_k = Eigen::VectorXcd::Zero(dim);
      for (const LindbladChannel& channel : *ch) {
        diag_k.push_back(channel.op_dag_op.diagonal());
        half_diag_k += 0.5 * diag_k.back();
      }
    }
  }

  void refresh_diag(const Operator* hmat, Eigen::Index dim) {
    if (diag_ready && hmat == cached_h) return;
    if (half_diag_k.size() == 0) half_diag_k = Eigen::VectorXcd::Zero(dim);
    Eigen::VectorXcd gen = -half_diag_k;
    if (hmat != nullptr) {
      diag_h = hmat->diagonal();
      gen -= kImag * diag_h;
    } else {
      diag_h = Eigen::VectorXcd::Zero(dim);
    }
    diag_exp = (config->dt * gen.array()).exp();
    cached_h = hmat;
    diag_ready = true;
  }

  void advance(Vector& psi, double t, RngStream& rng, StepInfo* info) {
    const double dt = config->dt;
    const Eigen::Index dim = psi.size();
    const Operator* hmat = (h != nullptr && *h) ? (*h)(t) : nullptr;
    if (hmat != nullptr && hmat->rows() != dim) {
      throw std::invalid_argument("Hamiltonian dimension mismatch");
    }

    // Joint correlated increments are state-independent; draw them up front.
    Eigen::VectorXcd joint_dz;
    if (config->joint_correlation) {
      joint_dz = sample_increments(*config->joint_correlation, dt, rng);
    }

    if (config->exponential_diagonal) {
      refresh_diag(hmat, dim);
      accum = diag_exp.cwiseProduct(psi);
      if (hmat != nullptr) {
        w_tmp.noalias() = *hmat * psi;
        w_tmp -= diag_h.cwiseProduct(psi);
        accum -= (kImag * dt) * w_tmp;
      }
    } else {
      accum = psi;
      if (hmat != nullptr) {
        w_tmp.noalias() = *hmat * psi;
        accum -= (kImag * dt) * w_tmp;
      }
    }

    for (std::size_t j = 0; j < channels->size(); ++j) {
      const LindbladChannel& ch = (*channels)[j];
      if (ch.op.rows() != dim) throw std::invalid_argument("channel dimension mismatch");
      w_l.noalias() = ch.op * psi;
      const Complex mean_l = psi.dot(w_l);

      // drift: -1/2 L+L - 1/2 <L+><L> + <L+> L, with the diagonal of L+L
      // already applied exponentially when configured.
      w_tmp.noalias() = ch.op_dag_op * psi;
      accum -= (0.5 * dt) * w_tmp;
      if (config->exponential_diagonal) {
        accum += (0.5 * dt) * diag_k[j].cwiseProduct(psi);
      }
      accum -= (0.5 * dt * std::norm(mean_l)) * psi;
      accum += (dt * std::conj(mean_l)) * w_l;

      // noise increment at the pre-step state
      Complex dz;
      if (config->joint_correlation) {
        dz = joint_dz[static_cast<Eigen::Index>(j)];
      } else {
        CorrelationFactor c;
        if (policy_is_adaptive(ch.policy)) {
          const double msd = w_l.squaredNorm() - std::norm(mean_l);
          w_tmp.noalias() = ch.op * w_l;
          const Complex mean_ll = psi.dot(w_tmp);
          const Complex s = mean_ll - mean_l * mean_l;
          c = policy_value(ch.policy, msd, s, config->adaptive_floor);
        } else {
          c = CorrelationFactor(ch.policy.fixed_value());
        }
        dz = sample_increment(c, dt, rng);
      }
      accum += dz * w_l;
      accum -= (dz * mean_l) * psi;
    }

    const double prenorm = accum.norm();
    if (info != nullptr) info->prenorm = prenorm;
    const double band = 10.0 * std::sqrt(dt);
    if (!(prenorm >= 1.0 - band && prenorm <= 1.0 + band)) {
      std::ostringstream msg;
      msg << "step norm " << prenorm << " outside [" << 1.0 - band << ", " << 1.0 + band
          << "] at t = " << t << "; reduce dt";
      throw InstabilityError(msg.str(), t);
    }
    if (config->renormalize_every_step) {
      psi = accum / prenorm;
    } else {
      psi = accum;
    }
  }
};

SdeStepper::SdeStepper(const Hamiltonian* h, const std::vector<LindbladChannel>* channels,
                       const SdeConfig* config)
    : impl_(std::make_unique<Impl>(h, channels, config)) {}

SdeStepper::~SdeStepper() = default;
SdeStepper::SdeStepper(SdeStepper&&) noexcept = default;

void SdeStepper::advance(Vector& psi, double t, RngStream& rng, StepInfo* info) {
  impl_->advance(psi, t, rng, info);
}

StateVector step(const StateVector& psi, double t, const Hamiltonian& h,
                 const std::vector<LindbladChannel>& channels, const SdeConfig& config,
                 RngStream& rng, StepInfo* info) {
  SdeStepper stepper(&h, &channels, &config);
  Vector amps = psi.amplitudes();
  StepInfo local;
  stepper.advance(amps, t, rng, &local);
  if (info != nullptr) *info = local;
  StateVector out = psi;
  out.mutable_amplitudes() = std::move(amps);
  return out;
}

TrajectoryResult run_trajectory(const StateVector& psi0, double t_final, const Hamiltonian& h,
                                const std::vector<LindbladChannel>& channels,
                                const SdeConfig& config, RngStream& rng,
                                const RecordingPlan& plan) {
  if (t_final < 0.0) throw std::invalid_argument("t_final must be >= 0");
  const double dt = config.dt;
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");

  const auto n_steps = static_cast<long long>(std::llround(t_final / dt));
  if (std::abs(n_steps * dt - t_final) > 1e-9 * std::max(1.0, t_final)) {
    throw std::invalid_argument("t_final must be an integer multiple of dt");
  }
  long long record_every = 1;
  if (plan.stride > 0.0) {
    record_every = std::llround(plan.stride / dt);
    if (record_every < 1 ||
        std::abs(record_every * dt - plan.stride) > 1e-9 * std::max(1.0, plan.stride)) {
      throw std::invalid_argument("output stride must be an integer multiple of dt");
    }
  }
  if (n_steps % record_every != 0) {
    throw std::invalid_argument("t_final must be an integer multiple of the output stride");
  }

  std::set<long long> snapshot_steps;
  for (double ts : plan.snapshot_times) {
    const auto k = static_cast<long long>(std::llround(ts / dt));
    if (k < 0 || k > n_steps || std::abs(k * dt - ts) > 1e-9 * std::max(1.0, ts)) {
      throw std::invalid_argument("snapshot time is not on the integration grid");
    }
    snapshot_steps.insert(k);
  }

  TrajectoryResult result;
  const auto n_obs = static_cast<Eigen::Index>(plan.observables.size());
  const auto n_records = static_cast<Eigen::Index>(n_steps / record_every) + 1;
  result.values.resize(n_records, n_obs);
  result.times.reserve(n_records);
  result.snapshots.reserve(plan.snapshot_times.size());

  StateVector psi = psi0;
  SdeStepper stepper(&h, &channels, &config);
  StepInfo info;

  Eigen::Index record_row = 0;
  const int dim = psi.dim();
  auto record = [&](long long k) {
    result.times.push_back(k * dt);
    for (Eigen::Index i = 0; i < n_obs; ++i) {
      result.values(record_row, i) = plan.observables[i].eval(psi);
    }
    ++record_row;
  };
  auto snapshot = [&](long long k) {
    if (snapshot_steps.count(k) > 0) result.snapshots.push_back(psi.amplitudes());
  };
  // Truncation monitor; only meaningful when the basis is a truncated ladder.
  auto track_tail = [&]() {
    if (dim < 4) return;
    const auto& a = psi.amplitudes();
    const double tail = std::norm(a[dim - 1]) + std::norm(a[dim - 2]);
    if (tail > result.max_tail_population) result.max_tail_population = tail;
  };

  track_tail();
  for (long long k = 0; k < n_steps; ++k) {
    if (k % record_every == 0) record(k);
    snapshot(k);
    try {
      stepper.advance(psi.mutable_amplitudes(), k * dt, rng, &info);
    } catch (const InstabilityError&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << e.what() << " (at t = " << k * dt << ")";
      throw std::runtime_error(msg.str());
    }
    const double dev = std::abs(info.prenorm - 1.0);
    if (dev > result.max_norm_deviation) result.max_norm_deviation = dev;
    track_tail();
  }
  record(n_steps);
  snapshot(n_steps);
  return result;
}

ChannelTransform transform_channels(const std::vector<LindbladChannel>& channels,
                                    const Eigen::MatrixXcd& u,
                                    const std::vector<Complex>& lambdas) {
  const auto j = static_cast<Eigen::Index>(channels.size());
  if (j == 0) throw std::invalid_argument("no channels to transform");
  if (u.rows() != j || u.cols() != j) {
    throw std::invalid_argument("transform matrix must be JxJ");
  }
  if (static_cast<Eigen::Index>(lambdas.size()) != j) {
    throw std::invalid_argument("need one lambda per channel");
  }
  if (!is_unitary(u)) throw std::domain_error("transform matrix is not unitary");

  const auto dim = channels[0].op.rows();
  const Operator eye = Operator::Identity(dim, dim);

  ChannelTransform out;
  out.hamiltonian_shift = Operator::Zero(dim, dim);
  for (Eigen::Index k = 0; k < j; ++k) {
    Operator lk = Operator::Zero(dim, dim);
    for (Eigen::Index i = 0; i < j; ++i) {
      lk += std::conj(u(i, k)) * (channels[i].op + lambdas[i] * eye);
    }
    out.channels.emplace_back(std::move(lk), channels[k].policy);
  }
  // Adding a constant to a channel changes the master dynamics unless the
  // Hamiltonian absorbs (i/2)(conj(lambda) L - lambda L+) per channel.
  for (Eigen::Index i = 0; i < j; ++i) {
    out.hamiltonian_shift -=
        (0.5 * kImag) * (std::conj(lambdas[i]) * channels[i].op - lambdas[i] * channels[i].op.adjoint());
  }
  return out;
}

ObservableSpec obs_msd(std::string name, Operator op) {
  return {std::move(name),
          [op = std::move(op)](const StateVector& psi) { return mean_square_deviation(op, psi); }};
}

ObservableSpec obs_expect_re(std::string name, Operator op) {
  return {std::move(name),
          [op = std::move(op)](const StateVector& psi) { return expectation(op, psi).real(); }};
}

ObservableSpec obs_expect_im(std::string name, Operator op) {
  return {std::move(name),
          [op = std::move(op)](const StateVector& psi) { return expectation(op, psi).imag(); }};
}

ObservableSpec obs_abs_covariance(std::string name, Operator a, Operator b) {
  return {std::move(name), [a = std::move(a), b = std::move(b)](const StateVector& psi) {
            return std::abs(covariance(a, b, psi));
          }};
}

}  // namespace unravel
