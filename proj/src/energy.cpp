#include "crossdiff/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace crossdiff {

namespace {

/// Roundoff tolerated below a bound before a state counts as infeasible.
constexpr double kDomainSlack = 1e-12;

double combine(const EnergyTerm& t, std::span<const double> mu, int cells, int i) {
  double w = 0.0;
  for (std::size_t a = 0; a < t.weights.size(); ++a) {
    if (t.weights[a] != 0.0) w += t.weights[a] * mu[a * cells + i];
  }
  return w;
}

std::vector<double> combined_field(const EnergyTerm& t, std::span<const double> mu, int cells) {
  std::vector<double> w(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) w[i] = combine(t, mu, cells, i);
  return w;
}

double weight_norm2(const EnergyTerm& t) {
  double s = 0.0;
  for (double k : t.weights) s += k * k;
  return s;
}

void check_state(const EnergySpec& spec, const Grid& g, std::span<const double> mu) {
  if (mu.size() != static_cast<std::size_t>(spec.species * g.num_cells())) {
    std::ostringstream os;
    os << "energy: expected " << spec.species * g.num_cells() << " values, got " << mu.size();
    throw GeometryError(os.str());
  }
}

double entropy_prox(double v, double tau, double sigma) {
  if (tau == 0.0) return std::max(v, 0.0);
  // tau log w + sigma (w - v) = 0, solved for s = log w. G(s) is convex and
  // increasing, so Newton from a point with G >= 0 decreases monotonically.
  const double ratio = sigma * v / tau;
  double s = ratio;
  if (v > 0.0) s = std::min(ratio, std::max(0.0, std::log(v)));
  for (int it = 0; it < 200; ++it) {
    const double e = std::exp(s);
    const double g = tau * s + sigma * (e - v);
    const double dg = tau + sigma * e;
    const double step = g / dg;
    s -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(s))) break;
  }
  return std::exp(s);
}

struct LjObjective {
  double eps, v, tau, sigma;
  double g(double w) const { return tau * lj_d1(eps, w) + sigma * (w - v); }
  double dg(double w) const { return tau * lj_d2(eps, w) + sigma; }
  double f(double w) const { return tau * lj_value(eps, w) + 0.5 * sigma * (w - v) * (w - v); }
};

/// Root of the increasing-through-zero function on [lo, hi] with g(lo) < 0 < g(hi).
double bracketed_root(const LjObjective& obj, double lo, double hi) {
  double w = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double g = obj.g(w);
    if (g == 0.0) return w;
    if (g < 0.0) lo = w; else hi = w;
    const double dg = obj.dg(w);
    double next = (dg > 0.0) ? w - g / dg : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - w) <= 1e-16 * w || hi - lo <= 4e-16 * hi) return next;
    w = next;
  }
  return w;
}

double lj_prox(double eps, double v, double tau, double sigma) {
  if (tau == 0.0) return std::max(v, std::numeric_limits<double>::min());
  const LjObjective obj{eps, v, tau, sigma};
  double lo = eps;
  while (obj.g(lo) >= 0.0) lo *= 0.5;
  double hi = std::max(2.0 * eps, std::abs(v) + eps);
  while (obj.g(hi) <= 0.0) hi *= 2.0;
  const double weak = 0.47 / (eps * eps);
  if (sigma > tau * weak * 1.0001) return bracketed_root(obj, lo, hi);

  // Not convex: locate every sign change on a log grid and keep the
  // stationary point with the smallest objective.
  constexpr int kSamples = 800;
  const double ratio = std::pow(hi / lo, 1.0 / kSamples);
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_f = std::numeric_limits<double>::infinity();
  double a = lo;
  double ga = obj.g(a);
  for (int k = 1; k <= kSamples; ++k) {
    const double b = (k == kSamples) ? hi : a * ratio;
    const double gb = obj.g(b);
    if (ga < 0.0 && gb >= 0.0) {
      const double r = bracketed_root(obj, a, b);
      const double fr = obj.f(r);
      if (fr < best_f) {
        best_f = fr;
        best = r;
      }
    }
    a = b;
    ga = gb;
  }
  if (!std::isfinite(best)) throw ProxError("Lennard-Jones prox: no stationary point found");
  return best;
}

}  // namespace

std::string to_string(TermKind kind) {
  switch (kind) {
    case TermKind::Entropy: return "entropy";
    case TermKind::HalfSquare: return "half_square";
    case TermKind::LennardJones: return "lennard_jones";
    case TermKind::Dirichlet: return "dirichlet";
  }
  return "unknown";
}

double lj_value(double eps, double r) {
  const double x2 = (eps / r) * (eps / r);
  return x2 * x2 * x2 * x2 / 8.0 - x2 / 2.0;
}

double lj_d1(double eps, double r) {
  const double x2 = (eps / r) * (eps / r);
  return (-x2 * x2 * x2 * x2 + x2) / r;
}

double lj_d2(double eps, double r) {
  const double x2 = (eps / r) * (eps / r);
  return (9.0 * x2 * x2 * x2 * x2 - 3.0 * x2) / (r * r);
}

void EnergySpec::validate() const {
  if (species < 1) throw std::invalid_argument("EnergySpec: species must be positive");
  for (const auto& t : terms) {
    if (static_cast<int>(t.weights.size()) != species) {
      throw std::invalid_argument("EnergySpec: term " + to_string(t.kind) + " has wrong weight count");
    }
    if (t.kind == TermKind::LennardJones && !(t.param > 0.0)) {
      throw std::invalid_argument("EnergySpec: Lennard-Jones eps must be positive");
    }
  }
  if (!potentials.empty() && static_cast<int>(potentials.size()) != species) {
    throw std::invalid_argument("EnergySpec: potentials must be empty or one per species");
  }
}

double term_value(const Grid& g, const EnergyTerm& t, std::span<const double> w) {
  double s = 0.0;
  switch (t.kind) {
    case TermKind::Entropy:
      for (double x : w) {
        if (x > 0.0) {
          s += x * (std::log(x) - 1.0);
        } else if (x < -kDomainSlack) {
          throw DomainError("entropy evaluated at a negative density");
        }
      }
      return s;
    case TermKind::HalfSquare:
      for (double x : w) s += 0.5 * t.param * x * x;
      return s;
    case TermKind::LennardJones:
      for (double x : w) {
        if (!(x > 0.0)) throw DomainError("Lennard-Jones potential evaluated at a nonpositive gap");
        s += lj_value(t.param, x);
      }
      return s;
    case TermKind::Dirichlet: {
      std::vector<double> faces(static_cast<std::size_t>(g.num_faces()));
      gradient(g, w, faces);
      for (double f : faces) s += 0.5 * t.param * f * f;
      return s;
    }
  }
  return s;
}

void term_gradient(const Grid& g, const EnergyTerm& t, std::span<const double> w,
                   std::span<double> out) {
  switch (t.kind) {
    case TermKind::Entropy:
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0.0)) throw DomainError("entropy gradient at a nonpositive density");
        out[i] = std::log(w[i]);
      }
      return;
    case TermKind::HalfSquare:
      for (std::size_t i = 0; i < w.size(); ++i) out[i] = t.param * w[i];
      return;
    case TermKind::LennardJones:
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0.0)) throw DomainError("Lennard-Jones gradient at a nonpositive gap");
        out[i] = lj_d1(t.param, w[i]);
      }
      return;
    case TermKind::Dirichlet:
      neumann_laplacian(g, w, out);
      for (double& x : out) x *= -t.param;
      return;
  }
}

double normalized_energy(const EnergySpec& spec, const Grid& g, std::span<const double> mu) {
  check_state(spec, g, mu);
  const int cells = g.num_cells();
  double e = 0.0;
  for (const auto& t : spec.terms) e += term_value(g, t, combined_field(t, mu, cells));
  for (std::size_t a = 0; a < spec.potentials.size(); ++a) {
    if (!spec.potentials[a]) continue;
    for (int i = 0; i < cells; ++i) e += spec.potentials[a](g.cell_center(i)) * mu[a * cells + i];
  }
  return e;
}

double discrete_energy(const EnergySpec& spec, const Grid& g, std::span<const double> mu) {
  return g.cell_volume() * normalized_energy(spec, g, mu);
}

void energy_gradient(const EnergySpec& spec, const Grid& g, std::span<const double> mu,
                     std::span<double> out) {
  check_state(spec, g, mu);
  const int cells = g.num_cells();
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> gw(static_cast<std::size_t>(cells));
  for (const auto& t : spec.terms) {
    term_gradient(g, t, combined_field(t, mu, cells), gw);
    for (int a = 0; a < spec.species; ++a) {
      if (t.weights[a] == 0.0) continue;
      for (int i = 0; i < cells; ++i) out[a * cells + i] += t.weights[a] * gw[i];
    }
  }
  for (std::size_t a = 0; a < spec.potentials.size(); ++a) {
    if (!spec.potentials[a]) continue;
    for (int i = 0; i < cells; ++i) out[a * cells + i] += spec.potentials[a](g.cell_center(i));
  }
}

// --- DirichletSolver ----------------------------------------------------------

DirichletSolver::DirichletSolver(const Grid& g, double sigma, double tau_coeff)
    : grid_(g), sigma_(sigma), tau_coeff_(tau_coeff) {
  if (!(sigma > 0.0)) throw ProxError("Dirichlet prox: sigma must be positive");
  if (tau_coeff < 0.0) throw ProxError("Dirichlet prox: tau * coeff must be nonnegative");
  const int n = g.num_cells();
  const int nx = g.cells[0];
  const int ny = g.dim == 2 ? g.cells[1] : 1;
  const double c = tau_coeff / (g.h * g.h);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * n));
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int i = g.cell_index(ix, iy);
      double diag = sigma;
      auto link = [&](int j) {
        trip.emplace_back(i, j, -c);
        diag += c;
      };
      if (ix > 0) link(i - 1);
      if (ix + 1 < nx) link(i + 1);
      if (g.dim == 2) {
        if (iy > 0) link(i - nx);
        if (iy + 1 < ny) link(i + nx);
      }
      trip.emplace_back(i, i, diag);
    }
  }
  a_.resize(n, n);
  a_.setFromTriplets(trip.begin(), trip.end());
  ldlt_.compute(a_);
  if (ldlt_.info() != Eigen::Success) throw ProxError("Dirichlet prox: factorization failed");
}

bool DirichletSolver::matches(const Grid& g, double sigma, double tau_coeff) const {
  return g == grid_ && sigma == sigma_ && tau_coeff == tau_coeff_;
}

void DirichletSolver::solve(std::span<const double> rhs, std::span<double> out) const {
  const int n = grid_.num_cells();
  if (rhs.size() != static_cast<std::size_t>(n) || out.size() != static_cast<std::size_t>(n)) {
    throw GeometryError("Dirichlet prox: size mismatch");
  }
  Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
  Eigen::Map<Eigen::VectorXd> x(out.data(), n);
  x = ldlt_.solve(b);
  // normwise backward error, |A|_inf = sigma + 2 * (number of neighbours) * tau c / h^2
  const double anorm = sigma_ + 4.0 * grid_.dim * tau_coeff_ / (grid_.h * grid_.h);
  auto scale = [&] { return std::max(anorm * x.norm() + b.norm(), std::numeric_limits<double>::min()); };
  for (int it = 0; it < 3; ++it) {
    const Eigen::VectorXd r = b - a_ * x;
    if (r.norm() <= 1e-15 * scale()) break;
    x += ldlt_.solve(r);
  }
  if ((b - a_ * x).norm() > 1e-12 * scale()) throw ProxError("Dirichlet prox: backward error above 1e-12");
}

ScalarField prox_dirichlet(const ScalarField& nu0, double sigma, double tau, double coeff) {
  ScalarField out(nu0.grid());
  if (tau * coeff == 0.0) {
    if (!(sigma > 0.0)) throw ProxError("Dirichlet prox: sigma must be positive");
    for (std::size_t i = 0; i < nu0.size(); ++i) out[i] = nu0[i] / sigma;
    return out;
  }
  DirichletSolver(nu0.grid(), sigma, tau * coeff).solve(nu0.values(), out.values());
  return out;
}

double scalar_prox(TermKind kind, double param, double v, double tau, double sigma) {
  if (!(sigma > 0.0)) throw ProxError("prox: sigma must be positive");
  if (tau < 0.0) throw ProxError("prox: tau must be nonnegative");
  switch (kind) {
    case TermKind::Entropy: return entropy_prox(v, tau, sigma);
    case TermKind::HalfSquare: return sigma * v / (tau * param + sigma);
    case TermKind::LennardJones: return lj_prox(param, v, tau, sigma);
    case TermKind::Dirichlet: break;
  }
  throw ProxError("scalar_prox: Dirichlet terms are not cellwise");
}

// --- ConvexSplit ----------------------------------------------------------------

ConvexSplit::ConvexSplit(EnergySpec spec, const Grid& grid) : spec_(std::move(spec)), grid_(grid) {
  spec_.validate();
  for (int t = 0; t < static_cast<int>(spec_.terms.size()); ++t) {
    (spec_.terms[t].preconditioned ? precond_ : remainder_).push_back(t);
  }
  potential_values_.assign(static_cast<std::size_t>(spec_.species), {});
  for (std::size_t a = 0; a < spec_.potentials.size(); ++a) {
    if (!spec_.potentials[a]) continue;
    auto& vals = potential_values_[a];
    vals.resize(static_cast<std::size_t>(grid_.num_cells()));
    for (int i = 0; i < grid_.num_cells(); ++i) vals[i] = spec_.potentials[a](grid_.cell_center(i));
  }
  dirichlet_cache_.resize(precond_.size());
}

void ConvexSplit::apply_k(std::span<const double> mu, std::span<double> nu) const {
  const int cells = grid_.num_cells();
  for (int r = 0; r < rows(); ++r) {
    const auto& t = row_term(r);
    for (int i = 0; i < cells; ++i) nu[r * cells + i] = combine(t, mu, cells, i);
  }
}

void ConvexSplit::add_kt(std::span<const double> nu, std::span<double> mu) const {
  const int cells = grid_.num_cells();
  for (int r = 0; r < rows(); ++r) {
    const auto& t = row_term(r);
    for (int a = 0; a < species(); ++a) {
      const double k = t.weights[a];
      if (k == 0.0) continue;
      for (int i = 0; i < cells; ++i) mu[a * cells + i] += k * nu[r * cells + i];
    }
  }
}

double ConvexSplit::value_u(std::span<const double> mu) const {
  check_state(spec_, grid_, mu);
  double e = 0.0;
  for (int t : precond_) e += term_value(grid_, spec_.terms[t], combined_field(spec_.terms[t], mu, grid_.num_cells()));
  return e;
}

double ConvexSplit::value_v(std::span<const double> mu) const {
  check_state(spec_, grid_, mu);
  const int cells = grid_.num_cells();
  double e = 0.0;
  for (int t : remainder_) e += term_value(grid_, spec_.terms[t], combined_field(spec_.terms[t], mu, cells));
  for (int a = 0; a < species(); ++a) {
    const auto& vals = potential_values_[a];
    for (std::size_t i = 0; i < vals.size(); ++i) e += vals[i] * mu[a * cells + i];
  }
  return e;
}

void ConvexSplit::gradient_v(std::span<const double> mu, std::span<double> out) const {
  check_state(spec_, grid_, mu);
  const int cells = grid_.num_cells();
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> gw(static_cast<std::size_t>(cells));
  for (int ti : remainder_) {
    const auto& t = spec_.terms[ti];
    term_gradient(grid_, t, combined_field(t, mu, cells), gw);
    for (int a = 0; a < species(); ++a) {
      if (t.weights[a] == 0.0) continue;
      for (int i = 0; i < cells; ++i) out[a * cells + i] += t.weights[a] * gw[i];
    }
  }
  for (int a = 0; a < species(); ++a) {
    const auto& vals = potential_values_[a];
    for (std::size_t i = 0; i < vals.size(); ++i) out[a * cells + i] += vals[i];
  }
}

double ConvexSplit::lipschitz_v(std::span<const double> mu) const {
  const int cells = grid_.num_cells();
  double lip = 0.0;
  for (int ti : remainder_) {
    const auto& t = spec_.terms[ti];
    const double k2 = weight_norm2(t);
    switch (t.kind) {
      case TermKind::HalfSquare: lip += std::abs(t.param) * k2; break;
      case TermKind::Dirichlet: lip += std::abs(t.param) * k2 * 4.0 * grid_.dim / (grid_.h * grid_.h); break;
      case TermKind::Entropy: {
        double m = 0.0;
        for (int i = 0; i < cells; ++i) {
          const double w = combine(t, mu, cells, i);
          if (w > 0.0) m = std::max(m, 1.0 / w);
        }
        lip += m * k2;
        break;
      }
      case TermKind::LennardJones: {
        double m = 0.0;
        for (int i = 0; i < cells; ++i) {
          const double w = combine(t, mu, cells, i);
          if (w > 0.0) m = std::max(m, std::abs(lj_d2(t.param, w)));
        }
        lip += m * k2;
        break;
      }
    }
  }
  return lip;
}

double ConvexSplit::weak_convexity() const {
  double rho = 0.0;
  for (int r = 0; r < rows(); ++r) {
    const auto& t = row_term(r);
    // min over r > 0 of eps^2 * P''(r) is attained at r = 7.5^(1/6) eps.
    if (t.kind == TermKind::LennardJones) {
      const double rmin = std::pow(7.5, 1.0 / 6.0) * t.param;
      rho = std::max(rho, -lj_d2(t.param, rmin));
    }
    if (t.kind == TermKind::HalfSquare && t.param < 0.0) rho = std::max(rho, -t.param);
  }
  return rho;
}

void ConvexSplit::prox_row(int r, std::span<const double> v, double tau, double sigma,
                           std::span<double> w) const {
  const auto& t = row_term(r);
  const int cells = grid_.num_cells();
  if (t.kind == TermKind::Dirichlet) {
    const double tc = tau * t.param;
    if (tc == 0.0) {
      std::copy(v.begin(), v.end(), w.begin());
      return;
    }
    auto& cached = dirichlet_cache_[r];
    if (!cached || !cached->matches(grid_, sigma, tc)) {
      cached = std::make_shared<DirichletSolver>(grid_, sigma, tc);
    }
    std::vector<double> rhs(v.begin(), v.end());
    for (double& x : rhs) x *= sigma;
    cached->solve(rhs, w);
    return;
  }
  for (int i = 0; i < cells; ++i) w[i] = scalar_prox(t.kind, t.param, v[i], tau, sigma);
}

std::vector<double> energy_gradient_remainder(const ConvexSplit& split, std::span<const double> mu) {
  std::vector<double> out(mu.size());
  split.gradient_v(mu, out);
  return out;
}

std::vector<double> prox_preconditioner(const ConvexSplit& split, std::span<const double> nu0,
                                        double sigma, double tau) {
  if (!(sigma > 0.0)) throw ProxError("prox_preconditioner: sigma must be positive");
  const int cells = split.grid().num_cells();
  if (nu0.size() != static_cast<std::size_t>(split.rows() * cells)) {
    throw GeometryError("prox_preconditioner: size mismatch");
  }
  std::vector<double> out(nu0.begin(), nu0.end());
  std::vector<double> v(static_cast<std::size_t>(cells));
  std::vector<double> w(static_cast<std::size_t>(cells));
  for (int r = 0; r < split.rows(); ++r) {
    for (int i = 0; i < cells; ++i) v[i] = nu0[r * cells + i] / sigma;
    split.prox_row(r, v, tau, sigma, w);
    for (int i = 0; i < cells; ++i) out[r * cells + i] -= sigma * w[i];
  }
  return out;
}

}  // namespace crossdiff
