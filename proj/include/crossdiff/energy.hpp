/// @file energy.hpp
/// @brief Discrete free energies, their convex splitting and the preconditioner prox.
///
/// An energy is a list of terms. Each term acts on the cell field
/// w = sum_a k_a mu_a for a fixed weight vector k, plus cell-sampled linear
/// potentials V_a(x) mu_a. All values here are normalized (no h^d factor):
///
///     E_hat[mu] = sum_terms T(k . mu) + sum_{a,i} V_a(x_i) mu_{a,i},
///     E_h       = h^d E_hat.
///
/// Terms flagged `preconditioned` form U[K mu] (one row of K per term); the
/// others, together with the potentials, form the remainder V.
#pragma once

#include "crossdiff/grid.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossdiff {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ProxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TermKind {
  Entropy,       ///< w (log w - 1), w >= 0
  HalfSquare,    ///< param / 2 * w^2
  LennardJones,  ///< eps^8 / (8 w^8) - eps^2 / (2 w^2), w > 0, param = eps
  Dirichlet,     ///< param / 2 * |d_h w|^2 summed over faces
};

std::string to_string(TermKind kind);

struct EnergyTerm {
  TermKind kind = TermKind::HalfSquare;
  std::vector<double> weights;  ///< k, one entry per species
  double param = 1.0;
  bool preconditioned = false;
};

/// V_a(x) for one species.
using Potential = std::function<double(const std::array<double, 2>&)>;

struct EnergySpec {
  int species = 1;
  std::vector<EnergyTerm> terms;
  std::vector<Potential> potentials;  ///< empty, or one per species (null = none)

  void validate() const;
};

/// Cached solver for (sigma I - tau coeff lap_h) w = rhs.
class DirichletSolver {
 public:
  DirichletSolver(const Grid& grid, double sigma, double tau_coeff);
  bool matches(const Grid& grid, double sigma, double tau_coeff) const;
  void solve(std::span<const double> rhs, std::span<double> out) const;

 private:
  Grid grid_;
  double sigma_;
  double tau_coeff_;
  Eigen::SparseMatrix<double> a_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// Split view of an energy on a fixed grid: K (r x n, cellwise), the
/// preconditioned terms, and the remainder V.
class ConvexSplit {
 public:
  ConvexSplit(EnergySpec spec, const Grid& grid);

  const EnergySpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }
  int species() const { return spec_.species; }
  /// Number of preconditioner rows r.
  int rows() const { return static_cast<int>(precond_.size()); }
  const EnergyTerm& row_term(int r) const { return spec_.terms[precond_[r]]; }

  /// nu = K mu, stored row-major (r blocks of num_cells).
  void apply_k(std::span<const double> mu, std::span<double> nu) const;
  /// mu += K^T nu.
  void add_kt(std::span<const double> nu, std::span<double> mu) const;

  double value_u(std::span<const double> mu) const;
  double value_v(std::span<const double> mu) const;
  /// grad V, overwrites `out` (species-major).
  void gradient_v(std::span<const double> mu, std::span<double> out) const;
  /// Upper bound on the Lipschitz constant of grad V, evaluated at `mu` for
  /// terms whose curvature is unbounded.
  double lipschitz_v(std::span<const double> mu) const;
  /// Largest negative curvature over preconditioned rows (0 when all rows
  /// are convex). The prox of row r is a convex problem when
  /// sigma > tau * weak_convexity().
  double weak_convexity() const;

  /// argmin_w tau U_r(w) + sigma/2 |w - v|^2 for row r (cell field).
  void prox_row(int r, std::span<const double> v, double tau, double sigma,
                std::span<double> w) const;

 private:
  EnergySpec spec_;
  Grid grid_;
  std::vector<int> precond_;
  std::vector<int> remainder_;
  std::vector<std::vector<double>> potential_values_;  ///< per species, sampled
  mutable std::vector<std::shared_ptr<DirichletSolver>> dirichlet_cache_;
};

/// Normalized energy density of a single term evaluated on the field w.
double term_value(const Grid& grid, const EnergyTerm& term, std::span<const double> w);
/// dT/dw for a single term.
void term_gradient(const Grid& grid, const EnergyTerm& term, std::span<const double> w,
                   std::span<double> out);

/// E_h (with the h^d factor).
double discrete_energy(const EnergySpec& spec, const Grid& grid, std::span<const double> mu);
/// E_hat = E_h / h^d.
double normalized_energy(const EnergySpec& spec, const Grid& grid, std::span<const double> mu);
/// Variational derivative of E_hat (species-major).
void energy_gradient(const EnergySpec& spec, const Grid& grid, std::span<const double> mu,
                     std::span<double> out);

/// grad V of the split at mu.
std::vector<double> energy_gradient_remainder(const ConvexSplit& split, std::span<const double> mu);

/// prox of the conjugate term tau U*(nu / tau) with step sigma, via Moreau:
///     nu0 - sigma * argmin_w { tau U(w) + sigma/2 |w - nu0/sigma|^2 }.
std::vector<double> prox_preconditioner(const ConvexSplit& split, std::span<const double> nu0,
                                        double sigma, double tau);

/// Solves (sigma I - tau coeff lap_h) nu = nu0.
ScalarField prox_dirichlet(const ScalarField& nu0, double sigma, double tau, double coeff);

/// Scalar cell prox argmin_w tau T(w) + sigma/2 (w - v)^2 for cellwise kinds.
double scalar_prox(TermKind kind, double param, double v, double tau, double sigma);

/// Lennard-Jones potential and derivatives.
double lj_value(double eps, double r);
double lj_d1(double eps, double r);
double lj_d2(double eps, double r);

}  // namespace crossdiff
