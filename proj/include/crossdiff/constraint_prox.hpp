/// @file constraint_prox.hpp
/// @brief Projection onto the admissible set H by the primal-dual active-set method.
///
/// H is the set of (mu, m) with
///     mu_a - mu^k_a + div m_a = 0          for every species a,
///     b0_b <= (C mu_i)_b <= b1_b           for every cell i and row b,
/// where C is the p x n coupling matrix. The projection minimizes
/// 1/2 |mu - mu0|^2 + 1/2 |m - m0|^2 over H. Each active-set iteration solves
/// the equality-constrained problem through the Schur complement J J^T of
/// the constraint Jacobian, factored by a sparse LDL^T. When the predicted
/// active rows are linearly dependent (a species pinned in every cell) the
/// primal-dual iteration can cycle; the projection is then finished by a
/// primal active-set method started from the feasible point (mu^k, 0).
#pragma once

#include "crossdiff/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace crossdiff {

class ConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct BoxConstraint {
  Eigen::MatrixXd coupling;   ///< p x n
  std::vector<double> lower;  ///< b0, -inf allowed
  std::vector<double> upper;  ///< b1, +inf allowed

  int rows() const { return static_cast<int>(coupling.rows()); }
  /// No rows at all.
  static BoxConstraint none(int species);
  /// Rows of the identity with the given bounds.
  static BoxConstraint identity(std::vector<double> lower, std::vector<double> upper);
  void validate(int species) const;
  /// min over cells and finite bounds of the slack (+inf when unconstrained).
  double min_slack(const Grid& grid, std::span<const double> mu) const;
  /// max over cells and finite bounds of the violation (0 when feasible).
  double max_violation(const Grid& grid, std::span<const double> mu) const;
};

/// Multipliers and active flags, kept between calls for warm starts.
struct ActiveSetState {
  std::vector<double> phi;       ///< n * cells
  std::vector<double> lambda;    ///< p * cells
  std::vector<std::int8_t> active;  ///< p * cells: -1 lower, +1 upper, 0 inactive
};

struct AdmissibleReport {
  int outer_iterations = 0;
  double continuity_residual = 0.0;  ///< max |mu - mu^k + div m|
  double box_violation = 0.0;
  double complementarity = 0.0;      ///< max_b |C_b|
  bool converged = false;
  bool cycled = false;
  bool regularized = false;          ///< Tikhonov shift was needed
  bool fallback = false;             ///< finished by the primal active-set method
};

/// Reusable projector; caches the symbolic analysis and the last factorization.
class AdmissibleProjector {
 public:
  AdmissibleProjector(const Grid& grid, int species, BoxConstraint box);

  const Grid& grid() const { return grid_; }
  int species() const { return n_; }
  const BoxConstraint& box() const { return box_; }

  /// mu0, mu_k: n * cells; m0, m: n * num_faces (species-major).
  /// `state` is used as warm start and updated; may be null.
  AdmissibleReport project(std::span<const double> mu0, std::span<const double> m0,
                           std::span<const double> mu_k, std::span<double> mu, std::span<double> m,
                           ActiveSetState* state = nullptr, int max_outer = 50);

  /// One equality-constrained solve for fixed active flags:
  /// u = u0 - J^T v, (J J^T) v = J u0 - c. Returns phi and lambda (zero on
  /// inactive rows).
  void solve_fixed(std::span<const double> mu0, std::span<const double> m0,
                   std::span<const double> mu_k, std::span<const std::int8_t> active,
                   std::span<double> phi, std::span<double> lambda);

  /// Recover (mu, m) from multipliers: mu = mu0 - phi - C^T lambda, m = m0 - div^T phi.
  void recover(std::span<const double> mu0, std::span<const double> m0, std::span<const double> phi,
               std::span<const double> lambda, std::span<double> mu, std::span<double> m) const;

  bool last_regularized() const { return regularized_; }

 private:
  void factorize(std::span<const std::int8_t> active);
  /// Feasible-start active-set solve; false if mu_k violates the box or the
  /// iteration budget runs out.
  bool primal_active_set(std::span<const double> mu0, std::span<const double> m0, std::span<const double> mu_k,
                         std::span<double> mu, std::span<double> m, std::vector<double>& phi,
                         std::vector<double>& lambda, std::vector<std::int8_t>& active);

  Grid grid_;
  int n_;
  int p_;
  int cells_;
  BoxConstraint box_;
  std::vector<std::pair<int, int>> links_;  ///< neighbouring cell pairs
  Eigen::SparseMatrix<double> s_;       ///< lower triangle
  Eigen::SparseMatrix<double> s_full_;  ///< both triangles, for refinement
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool analyzed_ = false;
  bool regularized_ = false;
  std::vector<std::int8_t> factored_active_;
};

/// One-shot projection (no warm start).
std::pair<std::vector<double>, std::vector<double>> prox_admissible(
    const Grid& grid, std::span<const double> mu0, std::span<const double> m0,
    std::span<const double> mu_k, const BoxConstraint& box, AdmissibleReport* report = nullptr);

/// Per-row max over cells of |C_b(mu, lambda_b)| with eps0 = 1.
std::vector<double> complementary_residual(const Grid& grid, std::span<const double> mu,
                                           std::span<const double> lambda, const BoxConstraint& box);

/// max over species and cells of |mu - mu^k + div m|.
double continuity_residual(const Grid& grid, int species, std::span<const double> mu,
                           std::span<const double> m, std::span<const double> mu_k);

}  // namespace crossdiff
