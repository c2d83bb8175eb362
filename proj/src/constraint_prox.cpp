#include "crossdiff/constraint_prox.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossdiff {

namespace {

double row_value(const BoxConstraint& box, int b, std::span<const double> mu, int cells, int i) {
  double v = 0.0;
  for (int a = 0; a < box.coupling.cols(); ++a) v += box.coupling(b, a) * mu[a * cells + i];
  return v;
}

void check(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": expected " << want << " values, got " << got;
    throw GeometryError(os.str());
  }
}

}  // namespace

// --- BoxConstraint --------------------------------------------------------------

BoxConstraint BoxConstraint::none(int species) {
  BoxConstraint b;
  b.coupling.resize(0, species);
  return b;
}

BoxConstraint BoxConstraint::identity(std::vector<double> lower, std::vector<double> upper) {
  BoxConstraint b;
  const int n = static_cast<int>(lower.size());
  b.coupling = Eigen::MatrixXd::Identity(n, n);
  b.lower = std::move(lower);
  b.upper = std::move(upper);
  return b;
}

void BoxConstraint::validate(int species) const {
  if (coupling.cols() != species) throw ConstraintError("box: coupling must have one column per species");
  if (static_cast<int>(lower.size()) != rows() || static_cast<int>(upper.size()) != rows()) {
    throw ConstraintError("box: one lower and one upper bound per row");
  }
  for (int b = 0; b < rows(); ++b) {
    if (!(lower[b] <= upper[b])) throw ConstraintError("box: lower bound above upper bound");
    if (coupling.row(b).isZero(0.0)) throw ConstraintError("box: zero coupling row");
  }
}

double BoxConstraint::min_slack(const Grid& g, std::span<const double> mu) const {
  const int cells = g.num_cells();
  double s = kInf;
  for (int b = 0; b < rows(); ++b) {
    for (int i = 0; i < cells; ++i) {
      const double v = row_value(*this, b, mu, cells, i);
      if (std::isfinite(lower[b])) s = std::min(s, v - lower[b]);
      if (std::isfinite(upper[b])) s = std::min(s, upper[b] - v);
    }
  }
  return s;
}

double BoxConstraint::max_violation(const Grid& g, std::span<const double> mu) const {
  const double s = min_slack(g, mu);
  return s < 0.0 ? -s : 0.0;
}

// --- AdmissibleProjector ---------------------------------------------------------

AdmissibleProjector::AdmissibleProjector(const Grid& grid, int species, BoxConstraint box)
    : grid_(grid), n_(species), p_(box.rows()), cells_(grid.num_cells()), box_(std::move(box)) {
  box_.validate(species);
  const int nx = grid_.cells[0];
  const int ny = grid_.dim == 2 ? grid_.cells[1] : 1;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int i = grid_.cell_index(ix, iy);
      if (ix + 1 < nx) links_.emplace_back(i, i + 1);
      if (grid_.dim == 2 && iy + 1 < ny) links_.emplace_back(i, i + nx);
    }
  }
}

void AdmissibleProjector::factorize(std::span<const std::int8_t> active) {
  const int dim = (n_ + p_) * cells_;
  const double ih2 = 1.0 / (grid_.h * grid_.h);
  const Eigen::MatrixXd cct = box_.coupling * box_.coupling.transpose();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(dim + 2 * n_ * links_.size() + 2 * n_ * p_ * cells_ + p_ * p_ * cells_));
  std::vector<double> deg(static_cast<std::size_t>(cells_), 0.0);
  for (auto [i, j] : links_) {
    deg[i] += 1.0;
    deg[j] += 1.0;
  }
  // Lower triangle only; the pattern is the same for every active set.
  for (int a = 0; a < n_; ++a) {
    const int off = a * cells_;
    for (int i = 0; i < cells_; ++i) trip.emplace_back(off + i, off + i, 1.0 + deg[i] * ih2);
    for (auto [i, j] : links_) trip.emplace_back(off + j, off + i, -ih2);
  }
  for (int b = 0; b < p_; ++b) {
    const int off = (n_ + b) * cells_;
    for (int i = 0; i < cells_; ++i) {
      const bool on = active[b * cells_ + i] != 0;
      for (int a = 0; a < n_; ++a) {
        if (box_.coupling(b, a) != 0.0) trip.emplace_back(off + i, a * cells_ + i, on ? box_.coupling(b, a) : 0.0);
      }
      for (int c = 0; c < b; ++c) {
        if (cct(b, c) == 0.0) continue;
        const bool both = on && active[c * cells_ + i] != 0;
        trip.emplace_back(off + i, (n_ + c) * cells_ + i, both ? cct(b, c) : 0.0);
      }
      trip.emplace_back(off + i, off + i, on ? cct(b, b) : 1.0);
    }
  }
  s_.resize(dim, dim);
  s_.setFromTriplets(trip.begin(), trip.end());
  if (!analyzed_) {
    ldlt_.analyzePattern(s_);
    analyzed_ = true;
  }
  ldlt_.factorize(s_);
  regularized_ = false;
  const auto bad = [&]() {
    if (ldlt_.info() != Eigen::Success) return true;
    const Eigen::VectorXd d = ldlt_.vectorD();
    return d.minCoeff() <= 1e-13 * d.cwiseAbs().maxCoeff();
  };
  if (bad()) {
    // Rank-deficient active rows.
    for (int k = 0; k < dim; ++k) s_.coeffRef(k, k) += 1e-12;
    ldlt_.factorize(s_);
    regularized_ = true;
    if (ldlt_.info() != Eigen::Success) throw ConstraintError("admissible prox: Schur complement is singular");
  }
  s_full_ = s_.selfadjointView<Eigen::Lower>();
  factored_active_.assign(active.begin(), active.end());
}

void AdmissibleProjector::solve_fixed(std::span<const double> mu0, std::span<const double> m0,
                                      std::span<const double> mu_k, std::span<const std::int8_t> active,
                                      std::span<double> phi, std::span<double> lambda) {
  const int faces = grid_.num_faces();
  check(mu0.size(), static_cast<std::size_t>(n_ * cells_), "admissible prox mu0");
  check(m0.size(), static_cast<std::size_t>(n_ * faces), "admissible prox m0");
  check(mu_k.size(), static_cast<std::size_t>(n_ * cells_), "admissible prox mu_k");
  check(active.size(), static_cast<std::size_t>(p_ * cells_), "admissible prox active");
  if (!analyzed_ || !std::equal(active.begin(), active.end(), factored_active_.begin(), factored_active_.end())) {
    factorize(active);
  }
  const int dim = (n_ + p_) * cells_;
  Eigen::VectorXd rhs(dim);
  std::vector<double> div(static_cast<std::size_t>(cells_));
  for (int a = 0; a < n_; ++a) {
    divergence(grid_, m0.subspan(static_cast<std::size_t>(a * faces), static_cast<std::size_t>(faces)), div);
    for (int i = 0; i < cells_; ++i) rhs(a * cells_ + i) = mu0[a * cells_ + i] + div[i] - mu_k[a * cells_ + i];
  }
  for (int b = 0; b < p_; ++b) {
    for (int i = 0; i < cells_; ++i) {
      const std::int8_t s = active[b * cells_ + i];
      double r = 0.0;
      if (s != 0) r = row_value(box_, b, mu0, cells_, i) - (s < 0 ? box_.lower[b] : box_.upper[b]);
      rhs((n_ + b) * cells_ + i) = r;
    }
  }
  Eigen::VectorXd v = ldlt_.solve(rhs);
  const double rnorm = std::max(rhs.norm(), 1e-300);
  for (int it = 0; it < 3; ++it) {
    const Eigen::VectorXd r = rhs - s_full_ * v;
    if (r.norm() <= 1e-15 * rnorm) break;
    v += ldlt_.solve(r);
  }
  for (int k = 0; k < n_ * cells_; ++k) phi[k] = v(k);
  for (int k = 0; k < p_ * cells_; ++k) lambda[k] = active[k] != 0 ? v(n_ * cells_ + k) : 0.0;
}

void AdmissibleProjector::recover(std::span<const double> mu0, std::span<const double> m0,
                                  std::span<const double> phi, std::span<const double> lambda,
                                  std::span<double> mu, std::span<double> m) const {
  const int faces = grid_.num_faces();
  for (int k = 0; k < n_ * cells_; ++k) mu[k] = mu0[k] - phi[k];
  for (int b = 0; b < p_; ++b) {
    for (int a = 0; a < n_; ++a) {
      const double c = box_.coupling(b, a);
      if (c == 0.0) continue;
      for (int i = 0; i < cells_; ++i) mu[a * cells_ + i] -= c * lambda[b * cells_ + i];
    }
  }
  std::vector<double> grad(static_cast<std::size_t>(faces));
  for (int a = 0; a < n_; ++a) {
    gradient(grid_, phi.subspan(static_cast<std::size_t>(a * cells_), static_cast<std::size_t>(cells_)), grad);
    auto out = m.subspan(static_cast<std::size_t>(a * faces), static_cast<std::size_t>(faces));
    for (int f = 0; f < faces; ++f) out[f] = m0[a * faces + f] + grad[f];
    clamp_boundary(grid_, out);
  }
}

AdmissibleReport AdmissibleProjector::project(std::span<const double> mu0, std::span<const double> m0,
                                              std::span<const double> mu_k, std::span<double> mu,
                                              std::span<double> m, ActiveSetState* state, int max_outer) {
  const std::size_t np = static_cast<std::size_t>(p_ * cells_);
  std::vector<std::int8_t> active(np, 0);
  if (state && state->active.size() == np) {
    active = state->active;
  } else {
    for (int b = 0; b < p_; ++b) {
      for (int i = 0; i < cells_; ++i) {
        const double v = row_value(box_, b, mu0, cells_, i);
        if (v < box_.lower[b]) active[b * cells_ + i] = -1;
        else if (v > box_.upper[b]) active[b * cells_ + i] = 1;
      }
    }
  }
  std::vector<double> phi(static_cast<std::size_t>(n_ * cells_));
  std::vector<double> lambda(np);
  std::vector<std::vector<std::int8_t>> seen;
  AdmissibleReport rep;
  std::vector<std::int8_t> next(np);

  struct Candidate {
    double score = kInf;
    std::vector<double> mu, m, phi, lambda;
    std::vector<std::int8_t> active;
  } best;

  for (int outer = 1; outer <= max_outer; ++outer) {
    rep.outer_iterations = outer;
    solve_fixed(mu0, m0, mu_k, active, phi, lambda);
    recover(mu0, m0, phi, lambda, mu, m);
    if (p_ == 0) {
      rep.converged = true;
      break;
    }
    bool same = true;
    for (int b = 0; b < p_; ++b) {
      for (int i = 0; i < cells_; ++i) {
        const int k = b * cells_ + i;
        const double t = lambda[k] + row_value(box_, b, mu, cells_, i);
        std::int8_t s = 0;
        if (t < box_.lower[b]) s = -1;
        else if (t > box_.upper[b]) s = 1;
        next[k] = s;
        same = same && s == active[k];
      }
    }
    if (same) {
      rep.converged = true;
      break;
    }
    // Cycling guard: keep the best iterate and stop on a repeated pattern.
    const double viol = box_.max_violation(grid_, mu);
    const auto comp = complementary_residual(grid_, mu, lambda, box_);
    const double score = viol + (comp.empty() ? 0.0 : *std::max_element(comp.begin(), comp.end()));
    if (score < best.score) {
      best = {score, {mu.begin(), mu.end()}, {m.begin(), m.end()}, phi, lambda, active};
    }
    seen.push_back(active);
    if (std::find(seen.begin(), seen.end(), next) != seen.end()) {
      rep.cycled = true;
      std::copy(best.mu.begin(), best.mu.end(), mu.begin());
      std::copy(best.m.begin(), best.m.end(), m.begin());
      phi = best.phi;
      lambda = best.lambda;
      active = best.active;
      break;
    }
    active = next;
  }
  rep.regularized = regularized_;
  if (p_ > 0 && (!rep.converged || regularized_)) {
    if (primal_active_set(mu0, m0, mu_k, mu, m, phi, lambda, active)) {
      rep.converged = true;
      rep.fallback = true;
    }
  }
  rep.continuity_residual = continuity_residual(grid_, n_, mu, m, mu_k);
  rep.box_violation = box_.max_violation(grid_, mu);
  const auto comp = complementary_residual(grid_, mu, lambda, box_);
  rep.complementarity = comp.empty() ? 0.0 : *std::max_element(comp.begin(), comp.end());
  if (state) {
    state->phi = phi;
    state->lambda = lambda;
    state->active = active;
  }
  return rep;
}

bool AdmissibleProjector::primal_active_set(std::span<const double> mu0, std::span<const double> m0,
                                            std::span<const double> mu_k, std::span<double> mu,
                                            std::span<double> m, std::vector<double>& phi,
                                            std::vector<double>& lambda, std::vector<std::int8_t>& active) {
  if (box_.max_violation(grid_, mu_k) > 0.0) return false;
  const std::size_t nmu = static_cast<std::size_t>(n_ * cells_);
  const std::size_t nm = static_cast<std::size_t>(n_ * grid_.num_faces());
  std::vector<double> x_mu(mu_k.begin(), mu_k.end()), x_m(nm, 0.0);
  std::vector<double> t_mu(nmu), t_m(nm), d_mu(nmu);
  std::fill(active.begin(), active.end(), 0);
  double scale = 1.0;
  for (double v : mu0) scale = std::max(scale, std::abs(v));
  for (double v : m0) scale = std::max(scale, std::abs(v));

  const int budget = 4 * p_ * cells_ + 50;
  for (int it = 0; it < budget; ++it) {
    // minimizer over the current working set, then step towards it
    solve_fixed(mu0, m0, mu_k, active, phi, lambda);
    recover(mu0, m0, phi, lambda, t_mu, t_m);
    double step = 0.0;
    for (std::size_t k = 0; k < nmu; ++k) {
      d_mu[k] = t_mu[k] - x_mu[k];
      step = std::max(step, std::abs(d_mu[k]));
    }
    for (std::size_t k = 0; k < nm; ++k) step = std::max(step, std::abs(t_m[k] - x_m[k]));

    if (step > 1e-13 * scale) {
      double alpha = 1.0;
      int block = -1;
      std::int8_t side = 0;
      for (int b = 0; b < p_; ++b) {
        const double floor = 1e-12 * step * box_.coupling.row(b).cwiseAbs().sum();
        for (int i = 0; i < cells_; ++i) {
          const int k = b * cells_ + i;
          if (active[k] != 0) continue;
          const double g = row_value(box_, b, d_mu, cells_, i);
          const double v = row_value(box_, b, x_mu, cells_, i);
          if (g > floor && std::isfinite(box_.upper[b])) {
            const double r = std::max(0.0, (box_.upper[b] - v) / g);
            if (r < alpha) alpha = r, block = k, side = 1;
          } else if (g < -floor && std::isfinite(box_.lower[b])) {
            const double r = std::max(0.0, (box_.lower[b] - v) / g);
            if (r < alpha) alpha = r, block = k, side = -1;
          }
        }
      }
      if (block >= 0) {
        for (std::size_t k = 0; k < nmu; ++k) x_mu[k] += alpha * d_mu[k];
        for (std::size_t k = 0; k < nm; ++k) x_m[k] += alpha * (t_m[k] - x_m[k]);
        active[block] = side;
        continue;
      }
    }
    x_mu = t_mu;
    x_m = t_m;
    // drop the working row with the most negative multiplier, if any
    int worst = -1;
    double most = -1e-12 * scale;
    for (int k = 0; k < p_ * cells_; ++k) {
      const double signed_lambda = active[k] * lambda[k];
      if (active[k] != 0 && signed_lambda < most) most = signed_lambda, worst = k;
    }
    if (worst < 0) {
      std::copy(t_mu.begin(), t_mu.end(), mu.begin());
      std::copy(t_m.begin(), t_m.end(), m.begin());
      return true;
    }
    active[worst] = 0;
  }
  return false;
}

std::pair<std::vector<double>, std::vector<double>> prox_admissible(
    const Grid& grid, std::span<const double> mu0, std::span<const double> m0,
    std::span<const double> mu_k, const BoxConstraint& box, AdmissibleReport* report) {
  const int n = static_cast<int>(box.coupling.cols());
  AdmissibleProjector proj(grid, n, box);
  std::vector<double> mu(mu0.size());
  std::vector<double> m(m0.size());
  const auto rep = proj.project(mu0, m0, mu_k, mu, m);
  if (report) *report = rep;
  if (!rep.converged && !report) {
    std::ostringstream os;
    os << "admissible prox: active sets did not settle after " << rep.outer_iterations
       << " iterations (box violation " << rep.box_violation << ", complementarity " << rep.complementarity << ")";
    throw ConstraintError(os.str());
  }
  return {std::move(mu), std::move(m)};
}

std::vector<double> complementary_residual(const Grid& grid, std::span<const double> mu,
                                           std::span<const double> lambda, const BoxConstraint& box) {
  const int cells = grid.num_cells();
  check(lambda.size(), static_cast<std::size_t>(box.rows() * cells), "complementary_residual lambda");
  std::vector<double> out(static_cast<std::size_t>(box.rows()), 0.0);
  for (int b = 0; b < box.rows(); ++b) {
    for (int i = 0; i < cells; ++i) {
      const double l = lambda[b * cells + i];
      const double v = row_value(box, b, mu, cells, i);
      const double lo = std::min(l + (v - box.lower[b]), 0.0);
      const double hi = std::max(l + (v - box.upper[b]), 0.0);
      out[b] = std::max(out[b], std::abs(l - lo - hi));
    }
  }
  return out;
}

double continuity_residual(const Grid& grid, int species, std::span<const double> mu,
                           std::span<const double> m, std::span<const double> mu_k) {
  const int cells = grid.num_cells();
  const int faces = grid.num_faces();
  std::vector<double> div(static_cast<std::size_t>(cells));
  double r = 0.0;
  for (int a = 0; a < species; ++a) {
    divergence(grid, m.subspan(static_cast<std::size_t>(a * faces), static_cast<std::size_t>(faces)), div);
    for (int i = 0; i < cells; ++i) r = std::max(r, std::abs(mu[a * cells + i] - mu_k[a * cells + i] + div[i]));
  }
  return r;
}

}  // namespace crossdiff
