/// @file jko.cpp
/// @brief Minimizing-movement loop.
#include "crossdiff/jko.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossdiff {

void JkoConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
  if (steps < 0) throw std::invalid_argument("step count must be nonnegative");
  if (output_every < 1) throw std::invalid_argument("output cadence must be at least 1");
  if (final_time < 0.0) throw std::invalid_argument("final time must be nonnegative");
  if (!(pdfb.tol > 0.0) || pdfb.max_iter < 1) throw std::invalid_argument("PDFB tolerance and iteration cap must be positive");
}

StepDiagnostics diagnose(const ModelSpec& model, const Grid& grid, std::span<const double> mu, int step,
                         double time) {
  StepDiagnostics d;
  d.step = step;
  d.time = time;
  d.energy = discrete_energy(model.energy, grid, mu);
  const int nc = grid.num_cells();
  d.mass.assign(static_cast<std::size_t>(model.species), 0.0);
  for (int a = 0; a < model.species; ++a) {
    double s = 0.0;
    for (int i = 0; i < nc; ++i) s += mu[a * nc + i];
    d.mass[a] = grid.cell_volume() * s;
  }
  d.min_box_slack = model.box.min_slack(grid, mu);
  return d;
}

double dissipation_slack(double energy_before) { return 1e-9 * std::max(1.0, std::abs(energy_before)); }

JkoStepResult jko_step(PdfbSolver& solver, std::span<const double> mu_k, double tau, int step, double time,
                       bool strict) {
  const auto& model = solver.model();
  const auto& grid = solver.grid();
  const double e_before = discrete_energy(model.energy, grid, mu_k);
  PdfbReport rep;
  JkoStepResult out;
  out.mu = solver.solve(mu_k, tau, &rep);
  out.diagnostics = diagnose(model, grid, out.mu, step, time);
  auto& d = out.diagnostics;
  d.pdfb_iterations = rep.iterations;
  d.primal_residual = rep.primal_residual;
  d.dual_residual = rep.dual_residual;
  d.converged = rep.converged;
  d.warnings = rep.events;
  if (!rep.converged) {
    std::ostringstream os;
    os << "PDFB stopped at " << rep.iterations << " iterations above tolerance (primal " << rep.primal_residual
       << ", dual " << rep.dual_residual << ")";
    d.warnings.push_back(os.str());
  }
  const double rise = d.energy - e_before;
  if (rise > dissipation_slack(e_before)) {
    std::ostringstream os;
    os.precision(17);
    os << "step " << step << ": energy rose by " << rise << " (from " << e_before << " to " << d.energy << ")";
    if (strict && rep.converged) throw DissipationError(os.str());
    d.warnings.push_back(os.str());
  }
  return out;
}

JkoStepResult jko_step(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid, double tau,
                       const PdfbConfig& config, bool strict) {
  PdfbSolver solver(model, grid, config);
  return jko_step(solver, mu_k, tau, 1, tau, strict);
}

Trajectory run_flow(std::span<const double> mu0, const ModelSpec& model, const Grid& grid, const JkoConfig& config,
                    const StepObserver& observer) {
  config.validate();
  if (static_cast<int>(mu0.size()) != model.species * grid.num_cells())
    throw GeometryError("run_flow: initial state does not match the grid");
  if (model.box.max_violation(grid, mu0) > 1e-12) throw ConstraintError("run_flow: initial state is infeasible");

  Trajectory traj;
  std::vector<double> mu(mu0.begin(), mu0.end());
  traj.diagnostics.push_back(diagnose(model, grid, mu, 0, 0.0));
  traj.snapshot_steps.push_back(0);
  traj.snapshots.push_back(mu);

  const bool timed = config.final_time > 0.0;
  const int steps = timed ? static_cast<int>(std::ceil(config.final_time / config.tau - 1e-9)) : config.steps;
  PdfbSolver solver(model, grid, config.pdfb);
  double t = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const double dt = timed ? std::min(config.tau, config.final_time - t) : config.tau;
    const double t_next = timed && k == steps ? config.final_time : t + dt;
    try {
      auto res = jko_step(solver, mu, dt, k, t_next, config.strict_dissipation);
      mu = std::move(res.mu);
      t = t_next;
      traj.diagnostics.push_back(std::move(res.diagnostics));
    } catch (const std::exception& e) {
      traj.completed = false;
      traj.failed_step = k;
      traj.error = e.what();
      break;
    }
    if (k % config.output_every == 0 || k == steps) {
      traj.snapshot_steps.push_back(k);
      traj.snapshots.push_back(mu);
    }
    if (observer) observer(mu, traj.diagnostics.back());
  }
  traj.final_state = mu;
  return traj;
}

}  // namespace crossdiff
