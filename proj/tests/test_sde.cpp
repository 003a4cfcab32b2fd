#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_util.hpp"
#include "unravel/master.hpp"
#include "unravel/sde.hpp"

using namespace unravel;

namespace {

std::vector<LindbladChannel> one_channel(Operator op, CorrelationPolicy policy) {
  std::vector<LindbladChannel> ch;
  ch.emplace_back(std::move(op), policy);
  return ch;
}

const CorrelationPolicy kQsd = CorrelationPolicy::fixed(Complex(0.0, 0.0));

}  // namespace

TEST_CASE("drift: closed-system limit") {
  std::mt19937_64 rng(55);
  const int dim = 7;
  const StateVector psi{test_util::random_state(dim, rng)};
  const Operator h = test_util::random_hermitian(dim, rng);
  const Vector v = drift(psi, &h, {});
  const Vector expected = Complex(0.0, -1.0) * (h * psi.amplitudes());
  CHECK((v - expected).norm() < 1e-14);
}

TEST_CASE("drift: excited two-level atom") {
  // L = sigma-, psi = |e>: v = -1/2 (sigma+ sigma- + 0 - 0) psi = -psi/2
  const StateVector e = fock_state(2, 1);
  const Vector v = drift(e, nullptr, one_channel(annihilation(2), kQsd));
  CHECK((v + 0.5 * e.amplitudes()).norm() < 1e-14);
}

TEST_CASE("drift: damped coherent state moves along the coherent manifold") {
  // For L = sqrt(kappa) a the drift on |alpha> is -(kappa/2) alpha (a+ - alpha*) |alpha>,
  // the tangent of |alpha e^{-kappa t/2}>; its norm is kappa |alpha| / 2.
  const int dim = 30;
  const double kappa = 1.0;
  const Complex alpha(2.0, 0.0);
  const StateVector coh = coherent_state(dim, alpha);
  const Vector v =
      drift(coh, nullptr, one_channel(std::sqrt(kappa) * annihilation(dim), kQsd));

  const Vector ref = -(0.5 * kappa) * alpha *
                     (creation(dim) * coh.amplitudes() - std::conj(alpha) * coh.amplitudes());
  CHECK((v - ref).norm() < 1e-6);
  CHECK(v.norm() == doctest::Approx(0.5 * kappa * std::abs(alpha)).epsilon(1e-6));

  // independent oracle: finite difference of the analytic damped-coherent path
  const double dt = 1e-4;
  const StateVector moved = coherent_state(dim, alpha * std::exp(-0.5 * kappa * dt));
  const Vector fd = (moved.amplitudes() - coh.amplitudes()) / dt;
  CHECK((v - fd).norm() < 1e-3);
}

TEST_CASE("diffusion vector") {
  // eigenstate of L: fluctuation vanishes
  const StateVector f3 = fock_state(8, 3);
  CHECK(diffusion_vector(f3, one_channel(number_operator(8), kQsd)[0]).norm() == 0.0);

  // (|0>+|1>)/sqrt(2) with L = n: (n - 1/2) psi = (-|0>+|1>)/(2 sqrt(2))
  Vector amps = Vector::Zero(4);
  amps[0] = amps[1] = 1.0;
  const StateVector plus{amps};
  const Vector u = diffusion_vector(plus, one_channel(number_operator(4), kQsd)[0]);
  const double inv = 1.0 / (2.0 * std::sqrt(2.0));
  CHECK(std::abs(u[0] - Complex(-inv, 0.0)) < 1e-15);
  CHECK(std::abs(u[1] - Complex(inv, 0.0)) < 1e-15);
  CHECK(u.squaredNorm() == doctest::Approx(0.25));  // = sigma^2(n)

  // |24> with L = a: norm^2 equals sigma^2(a) = 24
  const StateVector f24 = fock_state(30, 24);
  CHECK(diffusion_vector(f24, one_channel(annihilation(30), kQsd)[0]).squaredNorm() ==
        doctest::Approx(24.0));
}

TEST_CASE("diffusion vector is orthogonal to the state") {
  std::mt19937_64 rng(4321);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = 2 + static_cast<int>(rng() % 14);
    const StateVector psi{test_util::random_state(dim, rng)};
    const auto ch = one_channel(test_util::random_matrix(dim, rng), kQsd);
    const Vector u = diffusion_vector(psi, ch[0]);
    CHECK(std::abs(psi.amplitudes().dot(u)) < 1e-12);
  }
}

TEST_CASE("evaluate_policy") {
  const int dim = 30;
  const Operator a = annihilation(dim);

  SUBCASE("fixed") {
    const StateVector psi = fock_state(dim, 5);
    CHECK(evaluate_policy(kQsd, psi, one_channel(a, kQsd)[0]).value() == Complex(0.0, 0.0));
    const CorrelationPolicy ci = CorrelationPolicy::fixed(Complex(0.0, 1.0));
    CHECK(evaluate_policy(ci, psi, one_channel(a, ci)[0]).value() == Complex(0.0, 1.0));
  }

  SUBCASE("covariance phase of a hermitian operator is the real-noise choice") {
    const Operator q = (annihilation(8) + creation(8)) / std::sqrt(2.0);
    std::mt19937_64 rng(9);
    const StateVector psi{test_util::random_state(8, rng)};
    const CorrelationPolicy pol = CorrelationPolicy::covariance_phase(1.0);
    const Complex c = evaluate_policy(pol, psi, one_channel(q, pol)[0]).value();
    CHECK(c.real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(c.imag()) < 1e-12);

    const Complex cn =
        evaluate_policy(pol, psi, one_channel(number_operator(8), pol)[0]).value();
    CHECK(cn.real() == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("covariance phase on a real squeezed state") {
    const StateVector sq =
        squeezed_state(dim, SqueezedParams{Complex(0.6, 0.0), Complex(0.0, 0.0)});
    const CorrelationPolicy pol = CorrelationPolicy::covariance_phase(1.0);
    const Complex c = evaluate_policy(pol, sq, one_channel(a, pol)[0]).value();
    CHECK(c.real() == doctest::Approx(1.0).epsilon(1e-8));
  }

  SUBCASE("squeezed phase tracks the squeezing angle") {
    const double theta = 0.8;
    const Complex gamma = 0.5 * Complex(std::cos(theta), std::sin(theta));
    const StateVector sq = squeezed_state(40, SqueezedParams{gamma, Complex(0.0, 0.0)});
    const CorrelationPolicy pol = CorrelationPolicy::squeezed_phase(1.0);
    const Complex c = evaluate_policy(pol, sq, one_channel(annihilation(40), pol)[0]).value();
    const Complex expected = std::conj(gamma) / std::abs(gamma);
    CHECK(std::abs(c - expected) < 1e-8);
    // kappa prefactors cancel in the ratio
    const Complex c_scaled =
        evaluate_policy(pol, sq, one_channel(2.5 * annihilation(40), pol)[0]).value();
    CHECK(std::abs(c_scaled - expected) < 1e-8);
  }

  SUBCASE("degenerate states fall back to QSD") {
    const StateVector coh = coherent_state(dim, Complex(1.0, 0.0));
    const CorrelationPolicy pol = CorrelationPolicy::covariance_phase(1.0);
    CHECK(evaluate_policy(pol, coh, one_channel(a, pol)[0]).value() == Complex(0.0, 0.0));
  }
}

TEST_CASE("step fixed points") {
  SdeConfig config;
  config.dt = 1e-3;
  RngStream rng(100, 0);

  SUBCASE("number-operator eigenstate") {
    const StateVector f3 = fock_state(8, 3);
    for (const auto& pol :
         {kQsd, CorrelationPolicy::fixed(Complex(1.0, 0.0)),
          CorrelationPolicy::covariance_phase(1.0), CorrelationPolicy::squeezed_phase(1.0)}) {
      const StateVector out =
          step(f3, 0.0, no_hamiltonian(), one_channel(number_operator(8), pol), config, rng);
      CHECK(std::abs(std::abs(f3.amplitudes().dot(out.amplitudes())) - 1.0) < 1e-13);
      CHECK(std::abs(out.amplitudes()[0]) == 0.0);  // support never leaks
    }
  }

  SUBCASE("dark states are exact fixed points") {
    const StateVector g = fock_state(2, 0);
    const StateVector out =
        step(g, 0.0, no_hamiltonian(), one_channel(annihilation(2), kQsd), config, rng);
    CHECK(out.amplitudes() == g.amplitudes());  // bitwise

    const StateVector vac = fock_state(10, 0);
    const StateVector out2 =
        step(vac, 0.0, no_hamiltonian(), one_channel(annihilation(10), kQsd), config, rng);
    CHECK(out2.amplitudes() == vac.amplitudes());
  }

  SUBCASE("no channels, no Hamiltonian") {
    std::mt19937_64 mt(3);
    const StateVector psi{test_util::random_state(6, mt)};
    const StateVector out = step(psi, 0.0, no_hamiltonian(), {}, config, rng);
    CHECK(out.amplitudes() == psi.amplitudes());
  }
}

TEST_CASE("one-step ensemble matches the master equation") {
  // psi = |e>, L = sigma-, c = 0: M<sigma+ sigma-> after one step is 1 - dt + O(dt^2)
  const double dt = 1e-3;
  SdeConfig config;
  config.dt = dt;
  const StateVector e = fock_state(2, 1);
  const auto channels = one_channel(annihilation(2), kQsd);

  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  RngStream rng(2718, 0);
  for (int i = 0; i < n; ++i) {
    const StateVector out = step(e, 0.0, no_hamiltonian(), channels, config, rng);
    const double nval = std::norm(out.amplitudes()[1]);
    sum += nval;
    sum2 += nval * nval;
  }
  const double mean = sum / n;
  const double var = (sum2 / n - mean * mean) * n / (n - 1.0);
  const double se = std::sqrt(var / n);
  CHECK(std::abs(mean - (1.0 - dt)) < 3.0 * se);
}

TEST_CASE("norm is a martingale before renormalization") {
  SdeConfig config;
  config.dt = 1e-3;
  config.renormalize_every_step = false;

  Vector amps = Vector::Zero(8);
  amps[0] = amps[1] = amps[2] = 1.0;
  const StateVector psi{amps};
  const auto channels = one_channel(
      annihilation(8), CorrelationPolicy::fixed(std::polar(0.7, std::numbers::pi / 5)));

  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  RngStream rng(314159, 0);
  StepInfo info;
  for (int i = 0; i < n; ++i) {
    step(psi, 0.0, no_hamiltonian(), channels, config, rng, &info);
    const double defect = info.prenorm * info.prenorm - 1.0;
    sum += defect;
    sum2 += defect * defect;
  }
  const double mean = sum / n;
  const double var = (sum2 / n - mean * mean) * n / (n - 1.0);
  const double se = std::sqrt(var / n);
  CHECK(std::abs(mean) < 5.0 * se);
}

TEST_CASE("adaptive policies with r = 0 reproduce QSD paths bitwise") {
  SdeConfig config;
  config.dt = 1e-3;
  const StateVector psi0 = fock_state(12, 6);
  const Operator a = annihilation(12);

  for (const auto& pol :
       {CorrelationPolicy::covariance_phase(0.0), CorrelationPolicy::squeezed_phase(0.0)}) {
    RngStream rng_a(77, 3);
    RngStream rng_b(77, 3);
    Vector pa = psi0.amplitudes();
    Vector pb = psi0.amplitudes();
    const auto cha = one_channel(a, pol);
    const auto chb = one_channel(a, kQsd);
    const Hamiltonian none = no_hamiltonian();
    SdeStepper sa(&none, &cha, &config);
    SdeStepper sb(&none, &chb, &config);
    for (int k = 0; k < 100; ++k) {
      sa.advance(pa, k * config.dt, rng_a);
      sb.advance(pb, k * config.dt, rng_b);
    }
    CHECK(pa == pb);  // bitwise identical trajectories
  }
}

TEST_CASE("norm blowup raises an instability error") {
  SdeConfig config;
  config.dt = 1e-3;
  Vector amps = Vector::Zero(4);
  amps[0] = amps[1] = 1.0;
  const StateVector psi{amps};
  RngStream rng(5, 0);
  CHECK_THROWS_AS(step(psi, 0.0, no_hamiltonian(),
                       one_channel(100.0 * number_operator(4), kQsd), config, rng),
                  InstabilityError);
}

TEST_CASE("run_trajectory basics") {
  SdeConfig config;
  config.dt = 1e-3;

  SUBCASE("t_final = 0 records a single sample") {
    const StateVector psi = fock_state(6, 2);
    RngStream rng(1, 0);
    RecordingPlan plan;
    plan.stride = 0.01;
    plan.observables.push_back(obs_msd("sigma2_a", annihilation(6)));
    const TrajectoryResult res = run_trajectory(
        psi, 0.0, no_hamiltonian(), one_channel(annihilation(6), kQsd), config, rng, plan);
    REQUIRE(res.times.size() == 1);
    CHECK(res.times[0] == 0.0);
    CHECK(res.values(0, 0) == doctest::Approx(2.0));
  }

  SUBCASE("coherent states stay coherent under damping") {
    const int dim = 30;
    const StateVector coh = coherent_state(dim, Complex(2.0, 0.0));
    RecordingPlan plan;
    plan.stride = 0.1;
    plan.observables.push_back(obs_msd("sigma2_a", annihilation(dim)));
    for (const auto& pol : {kQsd, CorrelationPolicy::covariance_phase(1.0)}) {
      RngStream rng(42, 0);
      const TrajectoryResult res =
          run_trajectory(coh, 2.0, no_hamiltonian(), one_channel(annihilation(dim), pol),
                         config, rng, plan);
      for (Eigen::Index r = 0; r < res.values.rows(); ++r) {
        CHECK(res.values(r, 0) <= 1e-6);
      }
    }
  }

  SUBCASE("misaligned stride is rejected") {
    const StateVector psi = fock_state(6, 2);
    RngStream rng(1, 0);
    RecordingPlan plan;
    plan.stride = 0.0105;
    CHECK_THROWS_AS(run_trajectory(psi, 1.0, no_hamiltonian(),
                                   one_channel(annihilation(6), kQsd), config, rng, plan),
                    std::invalid_argument);
  }

  SUBCASE("snapshots capture the state on the grid") {
    const StateVector psi = fock_state(6, 2);
    RngStream rng(1, 0);
    RecordingPlan plan;
    plan.stride = 0.05;
    plan.snapshot_times = {0.0, 0.1};
    const TrajectoryResult res = run_trajectory(
        psi, 0.1, no_hamiltonian(), one_channel(annihilation(6), kQsd), config, rng, plan);
    REQUIRE(res.snapshots.size() == 2);
    CHECK(res.snapshots[0] == psi.amplitudes());
    CHECK(std::abs(res.snapshots[1].norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("transform_channels") {
  SUBCASE("identity transform with zero shifts is a no-op") {
    const auto channels = one_channel(annihilation(6), kQsd);
    const ChannelTransform out =
        transform_channels(channels, Eigen::MatrixXcd::Identity(1, 1), {Complex(0.0, 0.0)});
    CHECK((out.channels[0].op - channels[0].op).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.hamiltonian_shift.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("scalar shift reproduces the master dynamics with the H compensation") {
    const int dim = 2;
    const auto channels = one_channel(annihilation(dim), kQsd);
    const Complex alpha(0.35, -0.2);
    const ChannelTransform out =
        transform_channels(channels, Eigen::MatrixXcd::Identity(1, 1), {alpha});
    CHECK((out.channels[0].op - (annihilation(dim) + alpha * Operator::Identity(dim, dim)))
              .cwiseAbs()
              .maxCoeff() < 1e-15);

    const StateVector e = fock_state(dim, 1);
    const DensityMatrix rho0{e.amplitudes() * e.amplitudes().adjoint()};
    const MasterSeries direct = evolve(rho0, 1.0, no_hamiltonian(), channels, 1e-3, 1.0);
    const MasterSeries via = evolve(rho0, 1.0, constant_hamiltonian(out.hamiltonian_shift),
                                    out.channels, 1e-3, 1.0);
    CHECK(trace_distance(direct.rhos.back(), via.rhos.back()) < 1e-8);
  }

  SUBCASE("non-unitary transforms are rejected") {
    const auto channels = one_channel(annihilation(4), kQsd);
    Eigen::MatrixXcd bad(1, 1);
    bad(0, 0) = Complex(2.0, 0.0);
    CHECK_THROWS_AS(transform_channels(channels, bad, {Complex(0.0, 0.0)}), std::domain_error);
  }
}

TEST_CASE("joint correlated noise requires fixed policies") {
  SdeConfig config;
  config.dt = 1e-3;
  Eigen::MatrixXcd corr(1, 1);
  corr(0, 0) = Complex(0.5, 0.0);
  config.joint_correlation = corr;
  const StateVector psi = fock_state(4, 1);
  RngStream rng(6, 0);
  CHECK_THROWS_AS(step(psi, 0.0, no_hamiltonian(),
                       one_channel(annihilation(4), CorrelationPolicy::covariance_phase(1.0)),
                       config, rng),
                  std::invalid_argument);
  CHECK_NOTHROW(
      step(psi, 0.0, no_hamiltonian(), one_channel(annihilation(4), kQsd), config, rng));
}
