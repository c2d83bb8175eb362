/// @file test_constraint_prox.cpp
/// @brief Active-set projection onto the admissible set against dense oracles.
#include "crossdiff/constraint_prox.hpp"
#include "qp_oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>

using namespace crossdiff;
using crossdiff::testing::random_vector;

namespace {

/// Dense continuity operator [I, D] on (mu, interior fluxes) in 1D, species-major.
struct Dense1d {
  int n, cells;
  double h;
  int interior() const { return cells - 1; }
  int size() const { return n * cells + n * interior(); }

  Eigen::MatrixXd operator_matrix() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n * cells, size());
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < cells; ++i) {
        a(s * cells + i, s * cells + i) = 1.0;
        // face j sits between cells j and j + 1
        if (i < cells - 1) a(s * cells + i, n * cells + s * interior() + i) = 1.0 / h;
        if (i > 0) a(s * cells + i, n * cells + s * interior() + i - 1) = -1.0 / h;
      }
    }
    return a;
  }

  Eigen::VectorXd pack(const std::vector<double>& mu, const std::vector<double>& m) const {
    Eigen::VectorXd x(size());
    for (int k = 0; k < n * cells; ++k) x[k] = mu[k];
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < interior(); ++j) x[n * cells + s * interior() + j] = m[s * (cells + 1) + j + 1];
    return x;
  }
};

/// Dykstra iteration between the affine continuity set and a cellwise box.
Eigen::VectorXd dykstra(const Dense1d& d, const Eigen::VectorXd& x0, const std::vector<double>& mu_k,
                        const std::function<void(double*, double*)>& cell_projection) {
  const Eigen::MatrixXd a = d.operator_matrix();
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(mu_k.data(), d.n * d.cells);
  const Eigen::LDLT<Eigen::MatrixXd> aat((a * a.transpose()).eval());
  auto affine = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return x - a.transpose() * aat.solve(a * x - c);
  };
  Eigen::VectorXd x = x0, p = Eigen::VectorXd::Zero(x0.size()), q = p;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd y = affine(x + p);
    p = x + p - y;
    Eigen::VectorXd z = y + q;
    for (int i = 0; i < d.cells; ++i) cell_projection(&z[i], &z[d.cells + i]);
    q = y + q - z;
    const double change = (z - x).norm();
    x = z;
    if (change < 1e-14 && it > 10) break;
  }
  return x;
}

/// Exact Euclidean projection onto {x >= 0, y >= 0, x + y <= 1}.
void project_triangle(double* x, double* y) {
  double bx = std::max(*x, 0.0), by = std::max(*y, 0.0);
  if (bx + by <= 1.0) {
    *x = bx;
    *y = by;
    return;
  }
  const double t = (*x - *y + 1.0) / 2.0;  // foot on the hypotenuse
  *x = std::clamp(t, 0.0, 1.0);
  *y = 1.0 - *x;
}

BoxConstraint saturation_box() {
  BoxConstraint box;
  box.coupling = Eigen::MatrixXd(3, 2);
  box.coupling << 1, 0, 0, 1, 1, 1;
  box.lower = {0, 0, -kInf};
  box.upper = {kInf, kInf, 1};
  return box;
}

std::vector<double> random_flux(std::mt19937_64& rng, const Grid& g, int n, double scale) {
  auto m = random_vector(rng, static_cast<std::size_t>(n * g.num_faces()), -scale, scale);
  for (int s = 0; s < n; ++s)
    clamp_boundary(g, std::span<double>(m).subspan(static_cast<std::size_t>(s * g.num_faces()),
                                                   static_cast<std::size_t>(g.num_faces())));
  return m;
}

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(BoxConstraint, SlackAndViolation) {
  const Grid g = Grid::line(3, 0, 1);
  const auto box = saturation_box();
  const std::vector<double> mu{0.2, 0.5, 0.1, 0.3, 0.4, 0.6};
  // species-major: sums per cell are 0.5, 0.9, 0.7
  EXPECT_NEAR(box.min_slack(g, mu), 0.1, 1e-15);
  EXPECT_NEAR(box.min_slack(g, std::vector<double>{0.2, 0.5, 0.1, 0.3, 0.5, 0.6}), 0.0, 1e-15);
  EXPECT_EQ(box.max_violation(g, mu), 0.0);
  const std::vector<double> bad{-0.1, 0.5, 0.8, 0.3, 0.4, 0.6};
  EXPECT_NEAR(box.max_violation(g, bad), 0.4, 1e-15);
  EXPECT_EQ(BoxConstraint::none(2).min_slack(g, mu), kInf);
  EXPECT_EQ(BoxConstraint::none(2).max_violation(g, bad), 0.0);
}

TEST(BoxConstraint, Validation) {
  EXPECT_NO_THROW(saturation_box().validate(2));
  EXPECT_THROW(saturation_box().validate(3), ConstraintError);
  EXPECT_THROW(BoxConstraint::identity({1.0}, {0.0}).validate(1), ConstraintError);
  BoxConstraint zero;
  zero.coupling = Eigen::MatrixXd::Zero(1, 2);
  zero.lower = {0};
  zero.upper = {1};
  EXPECT_THROW(zero.validate(2), ConstraintError);
}

TEST(ContinuityResidual, Example) {
  const Grid g = Grid::line(2, 0, 1);  // h = 0.5
  // faces 0, 1, 2 with m = (0, 0.25, 0): div = (0.5, -0.5)
  const std::vector<double> m{0, 0.25, 0};
  EXPECT_NEAR(continuity_residual(g, 1, std::vector<double>{0.5, 1.5}, m, std::vector<double>{1, 1}), 0.0, 1e-15);
  EXPECT_NEAR(continuity_residual(g, 1, std::vector<double>{1, 1}, m, std::vector<double>{1, 1}), 0.5, 1e-15);
}

TEST(AdmissibleProjection, EqualityOnlyMatchesClosedForm) {
  std::mt19937_64 rng(41);
  const Grid g = Grid::line(9, 0, 1);
  const Dense1d d{2, 9, g.h};
  const Eigen::MatrixXd a = d.operator_matrix();
  for (int trial = 0; trial < 5; ++trial) {
    const auto mu_k = random_vector(rng, 18, 0.1, 1.0);
    const auto mu0 = random_vector(rng, 18, -1.0, 2.0);
    const auto m0 = random_flux(rng, g, 2, 1.0);
    AdmissibleReport rep;
    const auto [mu, m] = prox_admissible(g, mu0, m0, mu_k, BoxConstraint::none(2), &rep);
    EXPECT_TRUE(rep.converged);
    const Eigen::VectorXd x0 = d.pack(mu0, m0);
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(mu_k.data(), 18);
    const Eigen::VectorXd oracle = x0 - a.transpose() * (a * a.transpose()).ldlt().solve(a * x0 - c);
    EXPECT_LE(max_abs_diff(d.pack(mu, m), oracle), 1e-12);
    for (int s = 0; s < 2; ++s) {
      EXPECT_EQ(m[s * 10], 0.0);
      EXPECT_EQ(m[s * 10 + 9], 0.0);
    }
  }
}

TEST(AdmissibleProjection, NonnegativeBoxMatchesDykstra) {
  std::mt19937_64 rng(42);
  const Grid g = Grid::line(8, 0, 1);
  const Dense1d d{2, 8, g.h};
  const auto box = BoxConstraint::identity({0, 0}, {kInf, kInf});
  for (int trial = 0; trial < 4; ++trial) {
    const auto mu_k = random_vector(rng, 16, 0.0, 1.0);
    const auto mu0 = random_vector(rng, 16, -1.0, 1.0);
    const auto m0 = random_flux(rng, g, 2, 0.5);
    AdmissibleReport rep;
    const auto [mu, m] = prox_admissible(g, mu0, m0, mu_k, box, &rep);
    ASSERT_TRUE(rep.converged);
    const auto oracle = dykstra(d, d.pack(mu0, m0), mu_k, [](double* x, double* y) {
      *x = std::max(*x, 0.0);
      *y = std::max(*y, 0.0);
    });
    EXPECT_LE(max_abs_diff(d.pack(mu, m), oracle), 1e-8);
    EXPECT_LE(rep.continuity_residual, 1e-12);
    EXPECT_LE(rep.box_violation, 1e-12);
  }
}

TEST(AdmissibleProjection, SaturationBoxMatchesDykstra) {
  std::mt19937_64 rng(43);
  const Grid g = Grid::line(8, 0, 1);
  const Dense1d d{2, 8, g.h};
  for (int trial = 0; trial < 4; ++trial) {
    auto mu_k = random_vector(rng, 16, 0.0, 0.5);
    const auto mu0 = random_vector(rng, 16, -0.5, 1.5);
    const auto m0 = random_flux(rng, g, 2, 0.5);
    AdmissibleReport rep;
    const auto [mu, m] = prox_admissible(g, mu0, m0, mu_k, saturation_box(), &rep);
    ASSERT_TRUE(rep.converged);
    const auto oracle = dykstra(d, d.pack(mu0, m0), mu_k, project_triangle);
    EXPECT_LE(max_abs_diff(d.pack(mu, m), oracle), 1e-8);
    EXPECT_LE(rep.box_violation, 1e-12);
    EXPECT_LE(rep.complementarity, 1e-10);
  }
}

TEST(AdmissibleProjection, Properties2d) {
  std::mt19937_64 rng(44);
  const Grid g = Grid::square(6, 0, 1);
  const int nc = g.num_cells(), nf = g.num_faces();
  const auto box = saturation_box();
  AdmissibleProjector proj(g, 2, box);
  const auto mu_k = random_vector(rng, 2 * nc, 0.0, 0.5);
  auto project = [&](const std::vector<double>& mu0, const std::vector<double>& m0) {
    std::vector<double> mu(mu0.size()), m(m0.size());
    const auto rep = proj.project(mu0, m0, mu_k, mu, m);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.continuity_residual, 1e-12);
    EXPECT_LE(rep.box_violation, 1e-12);
    return std::pair{mu, m};
  };

  const auto mu0 = random_vector(rng, 2 * nc, -0.5, 1.5);
  const auto m0 = random_flux(rng, g, 2, 1.0);
  const auto [mu, m] = project(mu0, m0);

  // mass of each species is that of mu_k
  for (int s = 0; s < 2; ++s) {
    double a = 0, b = 0;
    for (int i = 0; i < nc; ++i) {
      a += mu[s * nc + i];
      b += mu_k[s * nc + i];
    }
    EXPECT_NEAR(a, b, 1e-12);
  }

  // idempotent
  const auto [mu2, m2] = project(mu, m);
  for (int k = 0; k < 2 * nc; ++k) EXPECT_NEAR(mu2[k], mu[k], 1e-12);
  for (int k = 0; k < 2 * nf; ++k) EXPECT_NEAR(m2[k], m[k], 1e-12);

  // variational inequality against other feasible points
  for (int trial = 0; trial < 10; ++trial) {
    const auto [zu, zm] = project(random_vector(rng, 2 * nc, -1, 2), random_flux(rng, g, 2, 1.0));
    double ip = 0;
    for (int k = 0; k < 2 * nc; ++k) ip += (mu0[k] - mu[k]) * (zu[k] - mu[k]);
    for (int k = 0; k < 2 * nf; ++k) ip += (m0[k] - m[k]) * (zm[k] - m[k]);
    EXPECT_LE(ip, 1e-10);
  }
}

TEST(AdmissibleProjection, WarmStartReusesActiveSet) {
  std::mt19937_64 rng(45);
  const Grid g = Grid::square(5, 0, 1);
  const int nc = g.num_cells();
  AdmissibleProjector proj(g, 2, saturation_box());
  const auto mu_k = random_vector(rng, 2 * nc, 0.0, 0.5);
  const auto mu0 = random_vector(rng, 2 * nc, -0.5, 1.5);
  const auto m0 = random_flux(rng, g, 2, 1.0);
  std::vector<double> mu(2 * nc), m(m0.size()), mu_w(2 * nc), m_w(m0.size());
  ActiveSetState state;
  const auto cold = proj.project(mu0, m0, mu_k, mu, m, &state);
  const auto warm = proj.project(mu0, m0, mu_k, mu_w, m_w, &state);
  EXPECT_TRUE(cold.converged);
  EXPECT_TRUE(warm.converged);
  EXPECT_EQ(warm.outer_iterations, 1);
  for (int k = 0; k < 2 * nc; ++k) EXPECT_NEAR(mu_w[k], mu[k], 1e-12);
}

TEST(AdmissibleProjection, FeasibleInputIsFixed) {
  std::mt19937_64 rng(46);
  const Grid g = Grid::line(12, 0, 1);
  const auto mu_k = random_vector(rng, 24, 0.1, 0.4);
  const std::vector<double> m0(24 + 2, 0.0);
  const auto [mu, m] = prox_admissible(g, mu_k, m0, mu_k, saturation_box());
  for (int k = 0; k < 24; ++k) EXPECT_NEAR(mu[k], mu_k[k], 1e-13);
  for (double v : m) EXPECT_NEAR(v, 0.0, 1e-13);
}

TEST(AdmissibleProjection, SizeMismatchThrows) {
  const Grid g = Grid::line(4, 0, 1);
  EXPECT_THROW(prox_admissible(g, std::vector<double>(7), std::vector<double>(10), std::vector<double>(8),
                               BoxConstraint::none(2)),
               GeometryError);
}

TEST(AdmissibleProjection, MatchesBruteForceQp) {
  std::mt19937_64 rng(47);
  struct Case {
    Grid grid;
    int species;
    BoxConstraint box;
    double hi;
  };
  const std::vector<Case> cases{{Grid::line(3, 0, 1), 2, saturation_box(), 0.5},
                                {Grid::square(2, 0, 1), 1, BoxConstraint::identity({0}, {0.3}), 0.3}};
  for (const auto& c : cases) {
    const crossdiff::testing::AdmissibleLayout layout(c.grid, c.species);
    ASSERT_LE(layout.unknowns(), 12);
    for (int trial = 0; trial < 50; ++trial) {
      const int nc = c.grid.num_cells();
      const auto mu_k = random_vector(rng, static_cast<std::size_t>(c.species * nc), 0.0, c.hi);
      const auto mu0 = random_vector(rng, mu_k.size(), -0.5, 1.0);
      const auto m0 = random_flux(rng, c.grid, c.species, 0.5);
      AdmissibleReport rep;
      const auto [mu, m] = prox_admissible(c.grid, mu0, m0, mu_k, c.box, &rep);
      EXPECT_TRUE(rep.converged);
      const auto oracle = crossdiff::testing::brute_force_qp(layout.build(c.box, mu_k), layout.pack(mu0, m0));
      ASSERT_EQ(oracle.size(), layout.unknowns());
      EXPECT_LE(max_abs_diff(layout.pack(mu, m), oracle), 1e-8);
    }
  }
}

TEST(AdmissibleProjection, PinnedSpeciesFallsBack) {
  // every cell predicted at the upper bound while the mass forbids it
  const Grid g = Grid::square(2, 0, 1);
  const std::vector<double> mu_k{0.1, 0.2, 0.0, 0.1};
  const std::vector<double> mu0(4, 0.9);
  const std::vector<double> m0(static_cast<std::size_t>(g.num_faces()), 0.0);
  AdmissibleReport rep;
  const auto box = BoxConstraint::identity({0}, {0.3});
  const auto [mu, m] = prox_admissible(g, mu0, m0, mu_k, box, &rep);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.continuity_residual, 1e-12);
  EXPECT_LE(rep.box_violation, 1e-12);
  EXPECT_TRUE(rep.fallback);
  const crossdiff::testing::AdmissibleLayout layout(g, 1);
  const auto oracle = crossdiff::testing::brute_force_qp(layout.build(box, mu_k), layout.pack(mu0, m0));
  EXPECT_LE(max_abs_diff(layout.pack(mu, m), oracle), 1e-10);
}
