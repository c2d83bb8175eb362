/// @file pdfb.cpp
/// @brief Saddle derivatives, dual/primal proxes and the PDFB loop.
#include "crossdiff/pdfb.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossdiff {

ProjectionMethod parse_projection_method(const std::string& name) {
  if (name == "newton") return ProjectionMethod::Newton;
  if (name == "admm") return ProjectionMethod::Admm;
  throw std::invalid_argument("unknown projection method '" + name + "' (expected newton or admm)");
}

std::string to_string(ProjectionMethod method) {
  return method == ProjectionMethod::Newton ? "newton" : "admm";
}

namespace {

double sum_sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double sum_sq(const std::vector<Mat>& v) {
  double s = 0.0;
  for (const auto& a : v) s += a.squaredNorm();
  return s;
}

double sum_sq_diff(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).squaredNorm();
  return s;
}

}  // namespace

double norm(const PrimalState& x) { return std::sqrt(sum_sq(x.mu) + sum_sq(x.m)); }
double norm(const DualState& y) { return std::sqrt(sum_sq(y.Q) + sum_sq(y.q) + sum_sq(y.nu)); }
double distance(const PrimalState& a, const PrimalState& b) {
  return std::sqrt(sum_sq_diff(a.mu, b.mu) + sum_sq_diff(a.m, b.m));
}
double distance(const DualState& a, const DualState& b) {
  return std::sqrt(sum_sq_diff(a.Q, b.Q) + sum_sq_diff(a.q, b.q) + sum_sq_diff(a.nu, b.nu));
}

PrimalState zero_primal(const Grid& grid, int species) {
  return {std::vector<double>(static_cast<std::size_t>(species * grid.num_cells()), 0.0),
          std::vector<double>(static_cast<std::size_t>(species * grid.num_faces()), 0.0)};
}

DualState zero_dual(const Grid& grid, int species, int rows) {
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  return {std::vector<Mat>(cells, Mat::Zero(species, species)),
          std::vector<Mat>(cells, Mat::Zero(species, grid.dim)),
          std::vector<double>(static_cast<std::size_t>(rows) * cells, 0.0)};
}

SaddleProblem::SaddleProblem(const Mobility& mobility, const ConvexSplit& split, std::span<const double> mu_k,
                             double tau)
    : mob_(mobility),
      split_(split),
      mu_k_(mu_k.begin(), mu_k.end()),
      tau_(tau),
      n_(split.species()),
      cells_(split.grid().num_cells()),
      faces_(split.grid().num_faces()) {
  if (mobility.species() != n_) throw std::invalid_argument("SaddleProblem: species mismatch");
  if (static_cast<int>(mu_k.size()) != n_ * cells_) throw std::invalid_argument("SaddleProblem: mu_k size");
  if (!(tau >= 0.0)) throw std::invalid_argument("SaddleProblem: tau must be nonnegative");
}

double SaddleProblem::phi(const PrimalState& x, const DualState& y) const {
  double val = tau_ == 0.0 ? 0.0 : tau_ * split_.value_v(x.mu);
  const DualState g = grad_y(x);
  for (int i = 0; i < cells_; ++i) val += frob(g.Q[i], y.Q[i]) + frob(g.q[i], y.q[i]);
  for (std::size_t k = 0; k < g.nu.size(); ++k) val += g.nu[k] * y.nu[k];
  return val;
}

DualState SaddleProblem::grad_y(const PrimalState& x) const {
  const Grid& g = grid();
  DualState out = zero_dual(g, n_, rows());
  double w[kMaxSpecies];
  for (int i = 0; i < cells_; ++i) {
    for (int a = 0; a < n_; ++a) w[a] = 0.5 * (x.mu[a * cells_ + i] + mu_k_[a * cells_ + i]);
    out.Q[i] = mob_.evaluate(w);
  }
  std::vector<double> im(static_cast<std::size_t>(g.dim * cells_));
  for (int a = 0; a < n_; ++a) {
    interpolate(g, std::span<const double>(x.m).subspan(a * faces_, faces_), im);
    for (int q = 0; q < g.dim; ++q)
      for (int i = 0; i < cells_; ++i) out.q[i](a, q) = im[q * cells_ + i];
  }
  if (rows() > 0) split_.apply_k(x.mu, out.nu);
  return out;
}

DualState SaddleProblem::jacobian_apply(const PrimalState& x, const PrimalState& w) const {
  const Grid& g = grid();
  DualState out = zero_dual(g, n_, rows());
  double om[kMaxSpecies], dm[kMaxSpecies];
  for (int i = 0; i < cells_; ++i) {
    for (int a = 0; a < n_; ++a) {
      om[a] = 0.5 * (x.mu[a * cells_ + i] + mu_k_[a * cells_ + i]);
      dm[a] = 0.5 * w.mu[a * cells_ + i];
    }
    out.Q[i] = mob_.directional(om, dm);
  }
  std::vector<double> im(static_cast<std::size_t>(g.dim * cells_));
  for (int a = 0; a < n_; ++a) {
    interpolate(g, std::span<const double>(w.m).subspan(a * faces_, faces_), im);
    for (int q = 0; q < g.dim; ++q)
      for (int i = 0; i < cells_; ++i) out.q[i](a, q) = im[q * cells_ + i];
  }
  if (rows() > 0) split_.apply_k(w.mu, out.nu);
  return out;
}

PrimalState SaddleProblem::jacobian_adjoint(const PrimalState& x, const DualState& v) const {
  const Grid& g = grid();
  PrimalState out = zero_primal(g, n_);
  double om[kMaxSpecies];
  for (int i = 0; i < cells_; ++i) {
    for (int a = 0; a < n_; ++a) om[a] = 0.5 * (x.mu[a * cells_ + i] + mu_k_[a * cells_ + i]);
    for (int a = 0; a < n_; ++a) out.mu[a * cells_ + i] = 0.5 * frob(mob_.partial(om, a), v.Q[i]);
  }
  if (rows() > 0) split_.add_kt(v.nu, out.mu);
  std::vector<double> qa(static_cast<std::size_t>(g.dim * cells_));
  for (int a = 0; a < n_; ++a) {
    for (int q = 0; q < g.dim; ++q)
      for (int i = 0; i < cells_; ++i) qa[q * cells_ + i] = v.q[i](a, q);
    interpolate_adjoint(g, qa, std::span<double>(out.m).subspan(a * faces_, faces_));
  }
  return out;
}

PrimalState SaddleProblem::grad_x(const PrimalState& x, const DualState& y) const {
  PrimalState out = jacobian_adjoint(x, y);
  if (tau_ != 0.0) {
    std::vector<double> gv(out.mu.size());
    split_.gradient_v(x.mu, gv);
    for (std::size_t k = 0; k < gv.size(); ++k) out.mu[k] += tau_ * gv[k];
  }
  return out;
}

DualState SaddleProblem::prox_dual(const DualState& y0, double gamma, ProjectionMethod method,
                                   int* fallbacks, const DualState* warm) const {
  DualState out;
  out.Q.resize(y0.Q.size());
  out.q.resize(y0.q.size());
  for (int i = 0; i < cells_; ++i) {
    ProjectionStats stats;
    DualPair p = method == ProjectionMethod::Newton
                     ? proj_K_newton(SymMat(y0.Q[i]), y0.q[i], {}, &stats, warm ? &warm->q[i] : nullptr)
                     : proj_K_admm(SymMat(y0.Q[i]), y0.q[i], {}, &stats);
    if (!stats.converged) {
      std::ostringstream os;
      os << "dual cone projection failed in cell " << i << " (residual " << stats.residual << ")";
      throw SolverError(os.str());
    }
    if (stats.used_fallback && fallbacks) ++*fallbacks;
    out.Q[i] = p.Q.mat();
    out.q[i] = p.q;
  }
  if (rows() > 0) {
    out.nu = prox_preconditioner(split_, y0.nu, gamma, tau_);
  }
  return out;
}

double SaddleProblem::jacobian_norm(const PrimalState& x, int iterations) const {
  const Grid& g = grid();
  PrimalState w = zero_primal(g, n_);
  // Deterministic start with components in every direction.
  for (std::size_t k = 0; k < w.mu.size(); ++k) w.mu[k] = 1.0 + 0.1 * static_cast<double>(k % 7);
  for (std::size_t k = 0; k < w.m.size(); ++k)
    w.m[k] = g.is_boundary_face(static_cast<int>(k % faces_)) ? 0.0 : 1.0 - 0.1 * static_cast<double>(k % 5);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const double nw = norm(w);
    if (nw == 0.0) return 0.0;
    for (double& v : w.mu) v /= nw;
    for (double& v : w.m) v /= nw;
    PrimalState z = jacobian_adjoint(x, jacobian_apply(x, w));
    for (int a = 0; a < n_; ++a)
      for (int f = 0; f < faces_; ++f)
        if (g.is_boundary_face(f)) z.m[a * faces_ + f] = 0.0;
    lambda = norm(z);
    w = std::move(z);
  }
  return std::sqrt(lambda);
}

StepSizes default_step_sizes(double jac_norm, double lip_v, double tau, double weak_convexity) {
  const double L = std::max(jac_norm, 1e-12);
  // s solves L^2 s^2 + (L_V / 2) s - 1 = 0
  const double b = 0.5 * lip_v;
  const double s = 2.0 / (b + std::sqrt(b * b + 4.0 * L * L));
  StepSizes st;
  st.gamma = std::max(0.9 * s, 2.0 * tau * weak_convexity);
  st.gamma_bar = 0.9 / (st.gamma * L * L / 0.9 + 0.5 * lip_v);
  return st;
}

IterationResiduals pdfb_iterate(const SaddleProblem& problem, AdmissibleProjector& projector,
                                ActiveSetState* active, PrimalState& x, PrimalState& x_bar, DualState& y,
                                const StepSizes& steps, ProjectionMethod method, int* fallbacks) {
  const double gamma = steps.gamma;
  const double gbar = steps.gamma_bar;

  // dual step
  PrimalState dx = x_bar;
  for (std::size_t k = 0; k < dx.mu.size(); ++k) dx.mu[k] -= x.mu[k];
  for (std::size_t k = 0; k < dx.m.size(); ++k) dx.m[k] -= x.m[k];
  DualState gy = problem.grad_y(x);
  const DualState jd = problem.jacobian_apply(x, dx);
  for (std::size_t i = 0; i < gy.Q.size(); ++i) {
    gy.Q[i] = y.Q[i] + gamma * (gy.Q[i] + jd.Q[i]);
    gy.q[i] = y.q[i] + gamma * (gy.q[i] + jd.q[i]);
  }
  for (std::size_t k = 0; k < gy.nu.size(); ++k) gy.nu[k] = y.nu[k] + gamma * (gy.nu[k] + jd.nu[k]);
  DualState y_new = problem.prox_dual(gy, gamma, method, fallbacks, &y);

  // primal step
  const PrimalState gx = problem.grad_x(x, y_new);
  PrimalState x0 = x;
  for (std::size_t k = 0; k < x0.mu.size(); ++k) x0.mu[k] -= gbar * gx.mu[k];
  for (std::size_t k = 0; k < x0.m.size(); ++k) x0.m[k] -= gbar * gx.m[k];
  PrimalState x_new = x;
  const AdmissibleReport rep = projector.project(x0.mu, x0.m, problem.mu_k(), x_new.mu, x_new.m, active);
  if (!rep.converged && rep.box_violation > 1e-12) {
    std::ostringstream os;
    os << "admissible projection did not converge (box violation " << rep.box_violation << ")";
    throw SolverError(os.str());
  }

  // reflection
  const PrimalState gx_new = problem.grad_x(x_new, y_new);
  for (std::size_t k = 0; k < x_bar.mu.size(); ++k)
    x_bar.mu[k] = 2.0 * x_new.mu[k] - x.mu[k] - gbar * (gx_new.mu[k] - gx.mu[k]);
  for (std::size_t k = 0; k < x_bar.m.size(); ++k)
    x_bar.m[k] = 2.0 * x_new.m[k] - x.m[k] - gbar * (gx_new.m[k] - gx.m[k]);

  IterationResiduals res;
  res.primal = distance(x_new, x) / (gbar * std::max(1.0, norm(x)));
  res.dual = distance(y_new, y) / (gamma * std::max(1.0, norm(y)));
  x = std::move(x_new);
  y = std::move(y_new);
  return res;
}

PdfbSolver::PdfbSolver(const ModelSpec& model, const Grid& grid, PdfbConfig config)
    : model_(model),
      grid_(grid),
      config_(config),
      split_(model.energy, grid),
      projector_(grid, model.species, model.box) {
  if (!model_.mobility) throw std::invalid_argument("PdfbSolver: model has no mobility");
  if (config_.tol <= 0.0 || config_.max_iter <= 0) throw std::invalid_argument("PdfbSolver: bad tolerance or cap");
}

void PdfbSolver::reset_warm_start() {
  have_duals_ = false;
  ratio_ = 1.0;
  active_ = {};
}

std::vector<double> PdfbSolver::solve(std::span<const double> mu_k, double tau, PdfbReport* report) {
  const int n = model_.species;
  if (static_cast<int>(mu_k.size()) != n * grid_.num_cells())
    throw std::invalid_argument("PdfbSolver::solve: mu_k has the wrong size");
  PdfbReport local;
  PdfbReport& rep = report ? *report : local;
  rep = {};
  if (tau == 0.0) {
    rep.converged = true;
    return {mu_k.begin(), mu_k.end()};
  }

  SaddleProblem problem(*model_.mobility, split_, mu_k, tau);
  PrimalState x = zero_primal(grid_, n);
  std::copy(mu_k.begin(), mu_k.end(), x.mu.begin());
  PrimalState x_bar = x;
  if (!have_duals_ || !config_.warm_start) y_ = zero_dual(grid_, n, split_.rows());

  StepSizes steps = default_step_sizes(problem.jacobian_norm(x, config_.power_iterations),
                                       tau * split_.lipschitz_v(mu_k), tau, split_.weak_convexity());
  const double gamma_floor = 2.0 * tau * split_.weak_convexity();
  const bool fixed_steps = config_.gamma > 0.0 || config_.gamma_bar > 0.0;
  if (config_.gamma > 0.0) steps.gamma = config_.gamma;
  if (config_.gamma_bar > 0.0) steps.gamma_bar = config_.gamma_bar;
  const bool balance = config_.balance && !fixed_steps;
  if (balance && config_.warm_start) {
    const double r = std::max(ratio_, gamma_floor / steps.gamma);
    steps.gamma *= r;
    steps.gamma_bar /= r;
  }

  rep.residual_history.reserve(static_cast<std::size_t>(std::min(config_.max_iter, 100000)));
  for (int it = 1; it <= config_.max_iter; ++it) {
    IterationResiduals r;
    try {
      r = pdfb_iterate(problem, projector_, &active_, x, x_bar, y_, steps, config_.projection,
                       &rep.projection_fallbacks);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "PDFB iteration " << it << ": " << e.what();
      throw SolverError(os.str());
    }
    rep.iterations = it;
    rep.primal_residual = r.primal;
    rep.dual_residual = r.dual;
    const double res = std::max(r.primal, r.dual);
    rep.residual_history.push_back(res);
    if (!std::isfinite(res)) throw SolverError("PDFB iteration produced a non-finite residual");
    if (res <= config_.tol) {
      rep.converged = true;
      break;
    }
    if (balance && it % config_.balance_window == 0) {
      const double ratio = r.dual / std::max(r.primal, 1e-300);
      if (ratio > config_.balance_margin) {
        steps.gamma *= 2.0;
        steps.gamma_bar *= 0.5;
      } else if (ratio < 1.0 / config_.balance_margin && 0.5 * steps.gamma > gamma_floor) {
        steps.gamma *= 0.5;
        steps.gamma_bar *= 2.0;
      }
    }
    const int w = config_.growth_window;
    if (w > 0 && it % w == 0 && it >= 2 * w && steps.halvings < config_.max_halvings) {
      const auto& h = rep.residual_history;
      // sustained growth: the whole window lies well above the previous one
      const double prev = *std::max_element(h.end() - 2 * w, h.end() - w);
      const double cur = *std::min_element(h.end() - w, h.end());
      if (cur > 1.5 * prev && steps.gamma * 0.5 > gamma_floor) {
        steps.gamma *= 0.5;
        steps.gamma_bar *= 0.5;
        ++steps.halvings;
        std::ostringstream os;
        os << "iteration " << it << ": residual grew from " << prev << " to " << cur
           << ", halving steps to gamma=" << steps.gamma << " gamma_bar=" << steps.gamma_bar;
        rep.events.push_back(os.str());
        x_bar = x;
      }
    }
  }
  rep.steps = steps;
  have_duals_ = true;
  if (balance) {
    const StepSizes base = default_step_sizes(problem.jacobian_norm(x, config_.power_iterations),
                                              tau * split_.lipschitz_v(mu_k), tau, split_.weak_convexity());
    ratio_ = std::sqrt((steps.gamma / base.gamma) * (base.gamma_bar / steps.gamma_bar));
  }
  return x.mu;
}

std::vector<double> solve_saddle(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid,
                                 double tau, const PdfbConfig& config, PdfbReport* report) {
  PdfbSolver solver(model, grid, config);
  return solver.solve(mu_k, tau, report);
}

}  // namespace crossdiff
