/// @file reference.cpp
/// @brief Backward-Euler reference scheme with a colored finite-difference Jacobian.
#include "crossdiff/reference.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace crossdiff {

namespace {

/// w = dE_hat/dmu with log-type arguments clamped from below.
std::vector<double> clamped_gradient(const EnergySpec& spec, const Grid& g, std::span<const double> mu,
                                     double floor) {
  const int nc = g.num_cells();
  std::vector<double> out(mu.size(), 0.0);
  std::vector<double> field(static_cast<std::size_t>(nc));
  std::vector<double> grad(static_cast<std::size_t>(nc));
  for (const auto& t : spec.terms) {
    std::fill(field.begin(), field.end(), 0.0);
    for (int a = 0; a < spec.species; ++a) {
      if (t.weights[a] == 0.0) continue;
      for (int i = 0; i < nc; ++i) field[i] += t.weights[a] * mu[a * nc + i];
    }
    if (t.kind == TermKind::Entropy) {
      for (int i = 0; i < nc; ++i) grad[i] = std::log(std::max(field[i], floor));
    } else if (t.kind == TermKind::LennardJones) {
      for (int i = 0; i < nc; ++i) grad[i] = lj_d1(t.param, std::max(field[i], floor));
    } else {
      term_gradient(g, t, field, grad);
    }
    for (int a = 0; a < spec.species; ++a) {
      if (t.weights[a] == 0.0) continue;
      for (int i = 0; i < nc; ++i) out[a * nc + i] += t.weights[a] * grad[i];
    }
  }
  for (std::size_t a = 0; a < spec.potentials.size(); ++a) {
    if (!spec.potentials[a]) continue;
    for (int i = 0; i < nc; ++i) out[a * nc + i] += spec.potentials[a](g.cell_center(i));
  }
  return out;
}

/// Calls f(left, right) for every interior face.
template <class F>
void for_each_interior_face(const Grid& g, F&& f) {
  const int nx = g.cells[0];
  const int ny = g.dim == 1 ? 1 : g.cells[1];
  for (int iy = 0; iy < ny; ++iy)
    for (int k = 1; k < nx; ++k) f(g.cell_index(k - 1, iy), g.cell_index(k, iy));
  if (g.dim == 2)
    for (int k = 1; k < ny; ++k)
      for (int ix = 0; ix < nx; ++ix) f(g.cell_index(ix, k - 1), g.cell_index(ix, k));
}

/// Stencil radius of the residual in cells.
int stencil_radius(const EnergySpec& spec) {
  for (const auto& t : spec.terms)
    if (t.kind == TermKind::Dirichlet) return 2;
  return 1;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Eigen::SparseMatrix<double> fd_jacobian(const ModelSpec& model, const Grid& g, std::span<const double> mu_k,
                                        const std::vector<double>& mu, const std::vector<double>& r0, double tau,
                                        double floor) {
  const int n = model.species;
  const int nc = g.num_cells();
  const int nx = g.cells[0];
  const int ny = g.dim == 1 ? 1 : g.cells[1];
  const int rad = stencil_radius(model.energy);
  const int period = 2 * rad + 1;
  const int colors_y = g.dim == 1 ? 1 : period;
  double scale = 0.0;
  for (double v : mu) scale = std::max(scale, std::abs(v));
  const double typical = 1e-6 * std::max(scale, 1e-300);
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> mp(mu);
  std::vector<double> delta(mu.size());
  for (int a = 0; a < n; ++a) {
    for (int cy = 0; cy < colors_y; ++cy) {
      for (int cx = 0; cx < period; ++cx) {
        mp = mu;
        for (int iy = cy; iy < ny; iy += period)
          for (int ix = cx; ix < nx; ix += period) {
            const int j = a * nc + g.cell_index(ix, iy);
            const double x = mu[j];
            const double h = root_eps * std::max(std::abs(x), typical);
            mp[j] = x + h;
            delta[j] = mp[j] - x;
          }
        const auto rp = reference_residual(model, g, mu_k, mp, tau, floor);
        for (int iy = cy; iy < ny; iy += period)
          for (int ix = cx; ix < nx; ix += period) {
            const int col = a * nc + g.cell_index(ix, iy);
            const int y0 = g.dim == 1 ? 0 : std::max(0, iy - rad);
            const int y1 = g.dim == 1 ? 0 : std::min(ny - 1, iy + rad);
            for (int jy = y0; jy <= y1; ++jy)
              for (int jx = std::max(0, ix - rad); jx <= std::min(nx - 1, ix + rad); ++jx)
                for (int b = 0; b < n; ++b) {
                  const int row = b * nc + g.cell_index(jx, jy);
                  const double d = (rp[row] - r0[row]) / delta[col];
                  if (d != 0.0) trip.emplace_back(row, col, d);
                }
          }
      }
    }
  }
  Eigen::SparseMatrix<double> jac(n * nc, n * nc);
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

/// Newton solve of one step; false on failure.
bool newton_step(const ModelSpec& model, const Grid& g, std::span<const double> mu_k, double tau,
                 const ReferenceConfig& cfg, std::vector<double>& mu, ReferenceStepReport& rep) {
  mu.assign(mu_k.begin(), mu_k.end());
  auto r = reference_residual(model, g, mu_k, mu, tau, cfg.log_floor);
  for (int it = 0; it <= cfg.max_newton; ++it) {
    if (!all_finite(r)) return false;
    rep.residual = max_abs(r);
    if (rep.residual <= cfg.newton_tol) return true;
    if (it == cfg.max_newton) break;
    ++rep.newton_iterations;
    const auto jac = fd_jacobian(model, g, mu_k, mu, r, tau, cfg.log_floor);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd d = lu.solve(-Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())));
    if (lu.info() != Eigen::Success || !d.allFinite()) return false;

    // backtracking on the Euclidean residual norm
    const double r_norm = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())).norm();
    double lambda = 1.0;
    bool accepted = false;
    std::vector<double> trial(mu.size());
    for (int ls = 0; ls < 12; ++ls, lambda *= 0.5) {
      for (std::size_t i = 0; i < mu.size(); ++i) trial[i] = mu[i] + lambda * d[static_cast<Eigen::Index>(i)];
      auto rt = reference_residual(model, g, mu_k, trial, tau, cfg.log_floor);
      if (!all_finite(rt)) continue;
      const double t_norm = Eigen::Map<const Eigen::VectorXd>(rt.data(), static_cast<Eigen::Index>(rt.size())).norm();
      if (t_norm <= (1.0 - 1e-4 * lambda) * r_norm || max_abs(rt) <= cfg.newton_tol) {
        mu.swap(trial);
        r.swap(rt);
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return false;
}

std::vector<double> step_recursive(std::span<const double> mu_k, const ModelSpec& model, const Grid& g, double tau,
                                   const ReferenceConfig& cfg, int level, ReferenceStepReport& rep) {
  std::vector<double> mu;
  ReferenceStepReport local;
  if (newton_step(model, g, mu_k, tau, cfg, mu, local)) {
    rep.newton_iterations += local.newton_iterations;
    rep.residual = std::max(rep.residual, local.residual);
    return mu;
  }
  if (level >= cfg.max_halvings)
    throw ReferenceError("backward Euler: Newton failed after " + std::to_string(level) + " step halvings");
  rep.halvings = std::max(rep.halvings, level + 1);
  const auto half = step_recursive(mu_k, model, g, 0.5 * tau, cfg, level + 1, rep);
  return step_recursive(half, model, g, 0.5 * tau, cfg, level + 1, rep);
}

}  // namespace

std::vector<double> reference_residual(const ModelSpec& model, const Grid& g, std::span<const double> mu_k,
                                       std::span<const double> mu, double tau, double log_floor) {
  const int n = model.species;
  const int nc = g.num_cells();
  if (static_cast<int>(mu.size()) != n * nc || mu_k.size() != mu.size())
    throw GeometryError("reference_residual: field size does not match the grid");
  const auto w = clamped_gradient(model.energy, g, mu, log_floor);
  const auto mob = mobility_field(*model.mobility, mu, nc);
  std::vector<double> r(mu.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = mu[i] - mu_k[i];
  const double c = tau / (g.h * g.h);
  double dw[8];
  for_each_interior_face(g, [&](int left, int right) {
    const Mat mbar = 0.5 * (mob[left] + mob[right]);
    for (int b = 0; b < n; ++b) dw[b] = w[b * nc + right] - w[b * nc + left];
    for (int a = 0; a < n; ++a) {
      double f = 0.0;
      for (int b = 0; b < n; ++b) f += mbar(a, b) * dw[b];
      r[a * nc + left] -= c * f;
      r[a * nc + right] += c * f;
    }
  });
  return r;
}

std::vector<double> backward_euler_step(std::span<const double> mu_k, const ModelSpec& model, const Grid& grid,
                                        double tau, const ReferenceConfig& config, ReferenceStepReport* report) {
  if (!(tau > 0.0)) throw ReferenceError("backward Euler: tau must be positive");
  if (static_cast<int>(mu_k.size()) != model.species * grid.num_cells())
    throw GeometryError("backward Euler: field size does not match the grid");
  ReferenceStepReport local;
  auto out = step_recursive(mu_k, model, grid, tau, config, 0, local);
  if (report) *report = local;
  return out;
}

std::vector<double> reference_run(std::span<const double> mu0, const ModelSpec& model, const Grid& grid,
                                  double t_final, const ReferenceConfig& config,
                                  std::vector<std::vector<double>>* snapshots, int every) {
  if (!(config.tau > 0.0)) throw ReferenceError("reference: tau must be positive");
  if (t_final < 0.0) throw ReferenceError("reference: final time must be nonnegative");
  std::vector<double> mu(mu0.begin(), mu0.end());
  if (snapshots && every > 0) snapshots->push_back(mu);
  const long steps = std::lround(std::ceil(t_final / config.tau - 1e-9));
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double dt = std::min(config.tau, t_final - t);
    if (dt <= 0.0) break;
    mu = backward_euler_step(mu, model, grid, dt, config);
    t = k == steps ? t_final : t + dt;
    if (snapshots && every > 0 && (k % every == 0 || k == steps)) snapshots->push_back(mu);
  }
  return mu;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw GeometryError("relative_error: fields have different sizes");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  if (den == 0.0) throw std::domain_error("relative_error: reference field is zero");
  return std::sqrt(num / den);
}

}  // namespace crossdiff
