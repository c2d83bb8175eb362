/// @file jko.hpp
/// @brief Minimizing-movement time loop and per-step structure diagnostics.
#pragma once

#include "crossdiff/pdfb.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace crossdiff {

class DissipationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JkoConfig {
  double tau = 0.1;
  int steps = 10;
  PdfbConfig pdfb;
  int output_every = 1;       ///< snapshot cadence in steps
  bool strict_dissipation = false;
  /// Run to this time when positive (the last step is shortened); `steps`
  /// is then ignored.
  double final_time = 0.0;

  void validate() const;
};

struct StepDiagnostics {
  int step = 0;
  double time = 0.0;
  double energy = 0.0;           ///< E_h
  std::vector<double> mass;      ///< h^d sum_i mu_{a,i}, per species
  double min_box_slack = 0.0;
  int pdfb_iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = true;
  std::vector<std::string> warnings;
};

/// Diagnostics of a state without a solve (step 0, reference runs).
StepDiagnostics diagnose(const ModelSpec& model, const Grid& grid, std::span<const double> mu, int step,
                         double time);

/// Slack allowed on E_h[mu^{k+1}] - E_h[mu^k].
double dissipation_slack(double energy_before);

struct JkoStepResult {
  std::vector<double> mu;
  StepDiagnostics diagnostics;
};

/// One step from mu_k with a persistent solver. Energy increase beyond the
/// slack throws DissipationError in strict mode when PDFB converged, and
/// is recorded as a warning otherwise.
JkoStepResult jko_step(PdfbSolver& solver, std::span<const double> mu_k, double tau, int step, double time,
                       bool strict = false);

/// One step with a fresh solver.
JkoStepResult jko_step(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid, double tau,
                       const PdfbConfig& config = {}, bool strict = false);

struct Trajectory {
  std::vector<int> snapshot_steps;
  std::vector<std::vector<double>> snapshots;
  std::vector<StepDiagnostics> diagnostics;  ///< index 0 is the initial state
  std::vector<double> final_state;
  bool completed = true;
  int failed_step = -1;
  std::string error;
};

/// Called after every step with the new state and its diagnostics.
using StepObserver = std::function<void(const std::vector<double>&, const StepDiagnostics&)>;

/// Runs the flow from mu0. A failing step stops the loop and the partial
/// trajectory is returned with `completed` false.
Trajectory run_flow(std::span<const double> mu0, const ModelSpec& model, const Grid& grid, const JkoConfig& config,
                    const StepObserver& observer = {});

}  // namespace crossdiff
