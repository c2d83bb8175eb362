/// @file pdfb.hpp
/// @brief Saddle-point form of one minimizing-movement step and the primal-dual
/// forward-backward iteration that solves it.
///
/// Primal x = (mu, m), dual y = (Q, q, nu):
///
///     Phi(x, y) = tau V[mu] + sum_i M(w_i) : Q_i + (I m)_i : q_i + (K mu)_i . nu_i,
///     w_i = (mu_i + mu^k_i) / 2,
///     F(y) = tau U*[nu / tau] + sum_i iota_K(Q_i, q_i),   G(x) = iota_H(mu, m).
#pragma once

#include "crossdiff/cone.hpp"
#include "crossdiff/constraint_prox.hpp"
#include "crossdiff/energy.hpp"
#include "crossdiff/models.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace crossdiff {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// mu: n * cells, m: n * faces (species-major, boundary faces zero).
struct PrimalState {
  std::vector<double> mu;
  std::vector<double> m;
};

/// Q, q: one block per cell; nu: r * cells.
struct DualState {
  std::vector<Mat> Q;
  std::vector<Mat> q;
  std::vector<double> nu;
};

enum class ProjectionMethod { Newton, Admm };

ProjectionMethod parse_projection_method(const std::string& name);
std::string to_string(ProjectionMethod method);

struct StepSizes {
  double gamma = 0.0;      ///< dual step
  double gamma_bar = 0.0;  ///< primal step
  int halvings = 0;
};

struct PdfbConfig {
  double gamma = 0.0;      ///< 0 selects the automatic rule
  double gamma_bar = 0.0;  ///< 0 selects the automatic rule
  double tol = 1e-6;
  int max_iter = 20000;
  ProjectionMethod projection = ProjectionMethod::Newton;
  int power_iterations = 20;
  /// Both steps are halved when every residual of the last window exceeds
  /// 1.5 times every residual of the window before.
  int growth_window = 50;
  int max_halvings = 20;
  bool warm_start = true;
  /// Residual balancing: every `balance_window` iterations, gamma is doubled
  /// and gamma_bar halved (or the reverse) when the dual residual exceeds the
  /// primal one by more than `balance_margin` (or falls below it by as much).
  bool balance = true;
  int balance_window = 25;
  double balance_margin = 4.0;
};

struct PdfbReport {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
  StepSizes steps;
  std::vector<double> residual_history;  ///< max(primal, dual) per iteration
  std::vector<std::string> events;       ///< step halvings and similar
  int projection_fallbacks = 0;
};

double norm(const PrimalState& x);
double norm(const DualState& y);
double distance(const PrimalState& a, const PrimalState& b);
double distance(const DualState& a, const DualState& b);

/// Zero primal/dual states shaped for a grid and model.
PrimalState zero_primal(const Grid& grid, int species);
DualState zero_dual(const Grid& grid, int species, int rows);

/// Smooth part of one step with its derivatives.
class SaddleProblem {
 public:
  SaddleProblem(const Mobility& mobility, const ConvexSplit& split, std::span<const double> mu_k, double tau);

  const Grid& grid() const { return split_.grid(); }
  int species() const { return n_; }
  int rows() const { return split_.rows(); }
  double tau() const { return tau_; }
  std::span<const double> mu_k() const { return mu_k_; }

  double phi(const PrimalState& x, const DualState& y) const;
  DualState grad_y(const PrimalState& x) const;
  PrimalState grad_x(const PrimalState& x, const DualState& y) const;
  /// J(x) w = (1/2 DM(w_x)[dmu], I dm, K dmu).
  DualState jacobian_apply(const PrimalState& x, const PrimalState& w) const;
  /// J(x)^T v.
  PrimalState jacobian_adjoint(const PrimalState& x, const DualState& v) const;

  /// prox of gamma F: proj_K per cell and the preconditioner prox. `warm`
  /// supplies Newton starting points (typically the previous duals).
  DualState prox_dual(const DualState& y0, double gamma, ProjectionMethod method,
                      int* fallbacks = nullptr, const DualState* warm = nullptr) const;

  /// ||J(x)|| by power iteration on J^T J (boundary faces excluded).
  double jacobian_norm(const PrimalState& x, int iterations) const;

 private:
  const Mobility& mob_;
  const ConvexSplit& split_;
  std::vector<double> mu_k_;
  double tau_;
  int n_;
  int cells_;
  int faces_;
};

/// Automatic steps from ||J||, the Lipschitz constant of grad V and the weak
/// convexity of the preconditioner.
StepSizes default_step_sizes(double jac_norm, double lip_v, double tau, double weak_convexity);

struct IterationResiduals {
  double primal = 0.0;
  double dual = 0.0;
};

/// One PDFB update of (x, x_bar, y) in place.
IterationResiduals pdfb_iterate(const SaddleProblem& problem, AdmissibleProjector& projector,
                                ActiveSetState* active, PrimalState& x, PrimalState& x_bar, DualState& y,
                                const StepSizes& steps, ProjectionMethod method, int* fallbacks = nullptr);

/// Persistent solver for a model on a grid; keeps the factorization cache,
/// active sets and the duals of the previous step.
class PdfbSolver {
 public:
  PdfbSolver(const ModelSpec& model, const Grid& grid, PdfbConfig config = {});

  const Grid& grid() const { return grid_; }
  const ModelSpec& model() const { return model_; }
  const ConvexSplit& split() const { return split_; }
  const PdfbConfig& config() const { return config_; }

  /// mu^{k+1} for the given mu^k and tau.
  std::vector<double> solve(std::span<const double> mu_k, double tau, PdfbReport* report = nullptr);

  /// Duals after the last solve.
  const DualState& duals() const { return y_; }
  void reset_warm_start();

 private:
  ModelSpec model_;
  Grid grid_;
  PdfbConfig config_;
  ConvexSplit split_;
  AdmissibleProjector projector_;
  ActiveSetState active_;
  DualState y_;
  bool have_duals_ = false;
  double ratio_ = 1.0;  ///< gamma / gamma_bar scaling carried across steps
};

/// One-shot solve without warm start.
std::vector<double> solve_saddle(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid,
                                 double tau, const PdfbConfig& config = {}, PdfbReport* report = nullptr);

}  // namespace crossdiff
