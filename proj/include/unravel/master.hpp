// Deterministic density-matrix integrator for the Lindblad master equation;
// the ground-truth oracle for ensemble averages of trajectories.
#pragma once

#include <vector>

#include "unravel/sde.hpp"

namespace unravel {

struct DensityMatrix {
  Eigen::MatrixXcd rho;
};

class IntegratorInstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws IntegratorInstabilityError unless rho is hermitian (1e-10), unit
/// trace (1e-10) and positive down to -1e-8.
void validate_density(const DensityMatrix& rho, double herm_tol = 1e-10,
                      double trace_tol = 1e-10, double eig_tol = 1e-8);

/// -i[H, rho] + sum_j (L rho L+ - 1/2 {L+L, rho}); traceless and hermitian.
Eigen::MatrixXcd lindblad_rhs(const Eigen::MatrixXcd& rho, const Operator* h,
                              const std::vector<LindbladChannel>& channels);

struct MasterSeries {
  std::vector<double> times;
  std::vector<Eigen::MatrixXcd> rhos;

  const Eigen::MatrixXcd& at_time(double t) const;
};

/// Fixed-step RK4 integration; density invariants are enforced at every
/// output point. Convergence is the caller's responsibility (halve dt once
/// per experiment and compare).
MasterSeries evolve(const DensityMatrix& rho0, double t_final, const Hamiltonian& h,
                    const std::vector<LindbladChannel>& channels, double dt,
                    double output_stride);

/// 1/2 sum of singular values of (rho1 - rho2); in [0, 1] for states.
double trace_distance(const Eigen::MatrixXcd& rho1, const Eigen::MatrixXcd& rho2);

}  // namespace unravel
