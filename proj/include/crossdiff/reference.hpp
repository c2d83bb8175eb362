/// @file reference.hpp
/// @brief Backward-Euler finite-difference reference scheme.
///
/// Solves
///     mu - mu^k = tau div( Mbar grad_h w(mu) ),   w = dE_hat/dmu,
/// with Mbar the arithmetic mean of the two adjacent cell mobilities and
/// zero flux on boundary faces. Newton with a finite-difference Jacobian
/// built by grid coloring, sparse LU for the linear solves.
#pragma once

#include "crossdiff/models.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace crossdiff {

class ReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferenceConfig {
  double tau = 1e-3;
  double newton_tol = 1e-11;  ///< max-norm of the residual
  int max_newton = 40;
  int max_halvings = 5;
  double log_floor = 1e-14;  ///< clamp for log / Lennard-Jones arguments
};

struct ReferenceStepReport {
  int newton_iterations = 0;
  double residual = 0.0;
  int halvings = 0;
};

/// Residual R(mu) = mu - mu^k - tau div(Mbar grad_h w(mu)).
std::vector<double> reference_residual(const ModelSpec& model, const Grid& grid, std::span<const double> mu_k,
                                       std::span<const double> mu, double tau, double log_floor = 1e-14);

/// One backward-Euler step of size tau. On Newton failure the step is redone
/// as two half steps, recursively up to `max_halvings` levels.
std::vector<double> backward_euler_step(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid,
                                        double tau, const ReferenceConfig& config = {},
                                        ReferenceStepReport* report = nullptr);

/// Runs to `t_final` with steps of config.tau (the last one shortened).
/// `every` > 0 stores every that-many steps in `snapshots` (step 0 included).
std::vector<double> reference_run(std::span<const double> mu0, const ModelSpec& model, const Grid& grid,
                                  double t_final, const ReferenceConfig& config = {},
                                  std::vector<std::vector<double>>* snapshots = nullptr, int every = 0);

/// ||a - b||_2 / ||b||_2 over all species jointly.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace crossdiff
