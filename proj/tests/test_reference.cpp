/// @file test_reference.cpp
/// @brief Backward-Euler reference scheme.
#include "crossdiff/reference.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crossdiff;
using crossdiff::testing::random_vector;

namespace {

/// Hand-written residual for the entropy/SKT system in 1D.
std::vector<double> skt_residual_oracle(const Grid& g, const std::vector<double>& mu_k, const std::vector<double>& mu,
                                        double tau) {
  const int nc = g.num_cells();
  auto mob = [&](int i) {
    const double u = mu[i], v = mu[nc + i];
    return std::array<double, 4>{u * (2 * u + v), u * v, u * v, v * (u + 2 * v)};
  };
  std::vector<double> flux(2 * static_cast<std::size_t>(nc + 1), 0.0);
  for (int f = 1; f < nc; ++f) {
    const auto a = mob(f - 1), b = mob(f);
    const double d0 = (std::log(mu[f]) - std::log(mu[f - 1])) / g.h;
    const double d1 = (std::log(mu[nc + f]) - std::log(mu[nc + f - 1])) / g.h;
    flux[f] = 0.5 * ((a[0] + b[0]) * d0 + (a[1] + b[1]) * d1);
    flux[nc + 1 + f] = 0.5 * ((a[2] + b[2]) * d0 + (a[3] + b[3]) * d1);
  }
  std::vector<double> r(2 * static_cast<std::size_t>(nc));
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < nc; ++i) {
      const double div = (flux[s * (nc + 1) + i + 1] - flux[s * (nc + 1) + i]) / g.h;
      r[s * nc + i] = mu[s * nc + i] - mu_k[s * nc + i] - tau * div;
    }
  return r;
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Reference, ResidualMatchesHandOracle) {
  std::mt19937_64 rng(71);
  const auto m = skt_model(1);
  const Grid g = Grid::line(12, -5, 5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto mu_k = random_vector(rng, 24, 0.1, 1.0);
    const auto mu = random_vector(rng, 24, 0.1, 1.0);
    const auto r = reference_residual(m, g, mu_k, mu, 0.3);
    const auto o = skt_residual_oracle(g, mu_k, mu, 0.3);
    for (int k = 0; k < 24; ++k) EXPECT_NEAR(r[k], o[k], 1e-12 * std::max(1.0, std::abs(o[k])));
  }
}

TEST(Reference, StepSolvesResidualAndConservesMass) {
  for (const auto& name : model_names()) {
    const auto m = make_model(name, 1);
    const Grid g = Grid::line(32, m.domain_lo, m.domain_hi);
    const auto mu0 = m.initial(g);
    const double tau = name == "two_layer_film" ? 1e-4 : 1e-2;
    ReferenceStepReport rep;
    const auto mu1 = backward_euler_step(mu0, m, g, tau, {}, &rep);
    EXPECT_LE(max_abs(reference_residual(m, g, mu0, mu1, tau)), 1e-11) << name;
    EXPECT_LE(rep.residual, 1e-11) << name;
    for (int s = 0; s < 2; ++s) {
      double a = 0, b = 0;
      for (int i = 0; i < 32; ++i) {
        a += mu0[s * 32 + i];
        b += mu1[s * 32 + i];
      }
      EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a))) << name;
    }
  }
}

TEST(Reference, ConstantStateIsFixed) {
  const auto m = skt_model(1);
  const Grid g = Grid::line(16, -5, 5);
  const std::vector<double> c(32, 0.4);
  ReferenceStepReport rep;
  const auto mu = backward_euler_step(c, m, g, 0.5, {}, &rep);
  for (double v : mu) EXPECT_NEAR(v, 0.4, 1e-14);
  EXPECT_EQ(rep.newton_iterations, 0);
}

TEST(Reference, FirstOrderInTime) {
  const auto m = skt_model(1);
  const Grid g = Grid::line(20, -5, 5);
  const auto mu0 = m.initial(g);
  const double t = 0.4;
  ReferenceConfig fine;
  fine.tau = t / 256;
  const auto exact = reference_run(mu0, m, g, t, fine);
  std::vector<double> errs;
  for (double tau : {0.1, 0.05, 0.025}) {
    ReferenceConfig c;
    c.tau = tau;
    errs.push_back(relative_error(reference_run(mu0, m, g, t, c), exact));
  }
  for (int k = 1; k < 3; ++k) {
    const double order = std::log2(errs[k - 1] / errs[k]);
    EXPECT_GT(order, 0.8);
    EXPECT_LT(order, 1.3);
  }
}

TEST(Reference, RunShortensLastStepAndSnapshots) {
  const auto m = skt_model(1);
  const Grid g = Grid::line(10, -5, 5);
  const auto mu0 = m.initial(g);
  ReferenceConfig c;
  c.tau = 0.1;
  std::vector<std::vector<double>> snaps;
  const auto out = reference_run(mu0, m, g, 0.25, c, &snaps, 2);
  auto manual = backward_euler_step(mu0, m, g, 0.1);
  manual = backward_euler_step(manual, m, g, 0.1);
  const auto at2 = manual;
  manual = backward_euler_step(manual, m, g, 0.05);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out[k], manual[k], 1e-13);
  ASSERT_GE(snaps.size(), 2u);
  EXPECT_EQ(snaps[0], std::vector<double>(mu0.begin(), mu0.end()));
  for (std::size_t k = 0; k < at2.size(); ++k) EXPECT_NEAR(snaps[1][k], at2[k], 1e-13);
}

TEST(Reference, RelativeError) {
  EXPECT_DOUBLE_EQ(relative_error(std::vector<double>{3, 4}, std::vector<double>{0, 5}), std::sqrt(9.0 + 1.0) / 5.0);
  EXPECT_EQ(relative_error(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0);
  EXPECT_THROW(relative_error(std::vector<double>{1}, std::vector<double>{1, 2}), GeometryError);
  EXPECT_THROW(relative_error(std::vector<double>{1}, std::vector<double>{0}), std::domain_error);
}
