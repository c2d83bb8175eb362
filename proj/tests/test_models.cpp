/// @file test_models.cpp
/// @brief Shipped mobilities, energies, boxes and initial data.
#include "crossdiff/models.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crossdiff;

namespace {

/// Random cell state inside the model's natural domain.
std::array<double, 2> sample_state(std::mt19937_64& rng, const std::string& name) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (name == "two_layer_film") {
    const double a = 0.1 + u(rng);
    return {a, a + 0.05 + u(rng)};
  }
  if (name == "saturation_fp") {
    double x = u(rng), y = u(rng);
    if (x + y > 1.0) {
      x = 1.0 - x;
      y = 1.0 - y;
    }
    return {x, y};
  }
  return {0.05 + 2 * u(rng), 0.05 + 2 * u(rng)};
}

}  // namespace

TEST(Models, SktValues) {
  const auto m = skt_model(1);
  const double u[2] = {1.0, 1.0};
  const Mat mob = m.mobility->evaluate(u);
  EXPECT_DOUBLE_EQ(mob(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(mob(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(mob(1, 1), 3.0);
  const Mat d0 = m.mobility->partial(u, 0);
  EXPECT_DOUBLE_EQ(d0(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(d0(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(d0(1, 1), 1.0);
  const double du[2] = {1.0, 1.0};
  const Mat dir = m.mobility->directional(u, du);
  EXPECT_DOUBLE_EQ(dir(0, 0), 6.0);
  EXPECT_DOUBLE_EQ(dir(1, 1), 6.0);
}

TEST(Models, PartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(51);
  for (const auto& name : model_names()) {
    const auto m = make_model(name, 1);
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = sample_state(rng, name);
      for (int a = 0; a < 2; ++a) {
        const double h = 1e-6;
        double p[2] = {s[0], s[1]}, q[2] = {s[0], s[1]};
        p[a] += h;
        q[a] -= h;
        const Mat fd = (m.mobility->evaluate(p) - m.mobility->evaluate(q)) / (2 * h);
        const double u[2] = {s[0], s[1]};
        EXPECT_LE((fd - m.mobility->partial(u, a)).cwiseAbs().maxCoeff(), 1e-7) << name << " a=" << a;
      }
    }
  }
}

TEST(Models, MobilitySymmetricPositiveSemidefinite) {
  std::mt19937_64 rng(52);
  for (const auto& name : model_names()) {
    const auto m = make_model(name, 1);
    for (int trial = 0; trial < 200; ++trial) {
      const auto s = sample_state(rng, name);
      const double u[2] = {s[0], s[1]};
      const Mat mob = m.mobility->evaluate(u);
      EXPECT_EQ(mob(0, 1), mob(1, 0)) << name;
      const auto e = eig_sym(SymMat(mob));
      EXPECT_GE(e.values.minCoeff(), -1e-12 * std::max(1.0, e.values.maxCoeff())) << name;
    }
  }
}

TEST(Models, InitialDataAdmissible) {
  for (const auto& name : model_names()) {
    const auto m = make_model(name, 1);
    const Grid g = m.default_grid();
    const auto mu = m.initial(g);
    ASSERT_EQ(mu.size(), static_cast<std::size_t>(2 * g.num_cells())) << name;
    EXPECT_EQ(m.box.max_violation(g, mu), 0.0) << name;
    EXPECT_TRUE(std::isfinite(discrete_energy(m.energy, g, mu))) << name;
  }
  const auto skt2 = skt_model(2);
  const Grid g2 = Grid::square(16, -5, 5);
  const auto mu2 = skt2.initial(g2);
  for (double v : mu2) EXPECT_GT(v, 0.0);
}

TEST(Models, DefaultGrids) {
  const auto skt = skt_model(1).default_grid();
  EXPECT_DOUBLE_EQ(skt.h, 0.1);
  EXPECT_DOUBLE_EQ(surfactant_model().default_grid().h, 1.0 / 128);
  EXPECT_EQ(skt_model(2).default_grid().dim, 2);
}

TEST(Models, MobilityField) {
  const auto m = skt_model(1);
  const std::vector<double> mu{1, 2, 1, 3};
  const auto f = mobility_field(*m.mobility, mu, 2);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_DOUBLE_EQ(f[1](0, 0), 2 * (4 + 3));
  EXPECT_DOUBLE_EQ(f[1](0, 1), 6.0);
  EXPECT_DOUBLE_EQ(f[1](1, 1), 3 * (2 + 6));
}

TEST(Models, FactoryErrors) {
  try {
    make_model("nope", 1);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    const std::string msg = e.what();
    for (const auto& n : model_names()) EXPECT_NE(msg.find(n), std::string::npos) << n;
  }
  EXPECT_THROW(make_model("skt", 1, {{"eps", 1.0}}), ModelError);
  EXPECT_THROW(make_model("surfactant", 2), ModelError);
  EXPECT_THROW(make_model("skt", 3), ModelError);
  EXPECT_THROW(make_model("two_layer_film", 1, {{"eps", -1.0}}), ModelError);
}

TEST(Models, ParameterProvenance) {
  EXPECT_TRUE(make_model("saturation_fp", 1).parameters.at("a").published);
  EXPECT_FALSE(make_model("saturation_fp", 1, {{"a", 0.5}}).parameters.at("a").published);
  EXPECT_TRUE(make_model("saturation_fp", 1, {{"a", 0.2}}).parameters.at("a").published);
  EXPECT_FALSE(make_model("surfactant", 1).parameters.at("eps").published);
  EXPECT_TRUE(make_model("two_layer_film", 1).parameters.at("eps").published);
  EXPECT_FALSE(make_model("two_layer_film", 1).parameters.at("sigma").published);
  EXPECT_DOUBLE_EQ(make_model("saturation_fp", 1, {{"sigma1", 3.0}}).parameters.at("sigma1").value, 3.0);
}
