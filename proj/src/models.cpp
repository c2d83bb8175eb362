/// @file models.cpp
/// @brief The four shipped mobility/energy/box systems.
#include "crossdiff/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace crossdiff {

Mat Mobility::directional(const double* mu, const double* dmu) const {
  const int n = species();
  Mat out = Mat::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    if (dmu[a] != 0.0) out += dmu[a] * partial(mu, a);
  }
  return out;
}

Grid ModelSpec::default_grid() const {
  return dim == 1 ? Grid::line(cells, domain_lo, domain_hi) : Grid::square(cells, domain_lo, domain_hi);
}

std::vector<Mat> mobility_field(const Mobility& mob, std::span<const double> mu, int cells) {
  const int n = mob.species();
  std::vector<Mat> out(static_cast<std::size_t>(cells));
  double v[8];
  for (int i = 0; i < cells; ++i) {
    gather_cell(mu, n, cells, i, v);
    out[i] = mob.evaluate(v);
  }
  return out;
}

namespace {

Mat sym2(double a, double b, double c) {
  Mat m(2, 2);
  m << a, b, b, c;
  return m;
}

double sq_norm(const std::array<double, 2>& x) { return x[0] * x[0] + x[1] * x[1]; }

double gaussian(double r2) { return std::exp(-0.5 * r2) / std::sqrt(2.0 * std::numbers::pi); }

EnergyTerm term(TermKind kind, std::vector<double> k, double param, bool precond) {
  return EnergyTerm{kind, std::move(k), param, precond};
}

}  // namespace

ModelSpec skt_model(int dim) {
  if (dim != 1 && dim != 2) throw ModelError("skt: dimension must be 1 or 2");
  ModelSpec m;
  m.name = "skt";
  m.dim = dim;
  m.mobility = std::make_shared<FunctionMobility>(
      2,
      [](const double* u) {
        return sym2(u[0] * (2 * u[0] + u[1]), u[0] * u[1], u[1] * (u[0] + 2 * u[1]));
      },
      [](const double* u, int a) {
        return a == 0 ? sym2(4 * u[0] + u[1], u[1], u[1]) : sym2(u[0], u[0], u[0] + 4 * u[1]);
      });
  m.energy.species = 2;
  m.energy.terms = {term(TermKind::Entropy, {1, 0}, 1, true), term(TermKind::Entropy, {0, 1}, 1, true)};
  m.box = BoxConstraint::identity({0, 0}, {kInf, kInf});
  m.initial = [dim](const Grid& g) {
    const int nc = g.num_cells();
    std::vector<double> mu(2 * static_cast<std::size_t>(nc));
    for (int i = 0; i < nc; ++i) {
      const auto x = g.cell_center(i);
      if (dim == 1) {
        mu[i] = gaussian((x[0] - 0.5) * (x[0] - 0.5));
        mu[nc + i] = gaussian((x[0] + 0.5) * (x[0] + 0.5));
      } else {
        mu[i] = gaussian(x[0] * x[0] + (x[1] + 0.5) * (x[1] + 0.5));
        mu[nc + i] = gaussian(x[0] * x[0] + (x[1] - 0.5) * (x[1] - 0.5));
      }
    }
    return mu;
  };
  m.domain_lo = -5;
  m.domain_hi = 5;
  m.cells = dim == 1 ? 100 : 256;
  m.tau = 0.1;
  m.steps = 10;
  return m;
}

ModelSpec surfactant_model(double eps) {
  ModelSpec m;
  m.name = "surfactant";
  m.mobility = std::make_shared<FunctionMobility>(
      2,
      [eps](const double* u) {
        return sym2(u[0] * u[0] * u[0] / 3, u[0] * u[0] * u[1] / 2, u[0] * u[1] * u[1] + eps * u[1]);
      },
      [eps](const double* u, int a) {
        return a == 0 ? sym2(u[0] * u[0], u[0] * u[1], u[1] * u[1])
                      : sym2(0, u[0] * u[0] / 2, 2 * u[0] * u[1] + eps);
      });
  m.energy.species = 2;
  m.energy.terms = {term(TermKind::Dirichlet, {1, 0}, 1, true), term(TermKind::Entropy, {0, 1}, 1, true)};
  m.box = BoxConstraint::identity({-kInf, 0}, {kInf, kInf});
  m.initial = [](const Grid& g) {
    const int nc = g.num_cells();
    std::vector<double> mu(2 * static_cast<std::size_t>(nc));
    for (int i = 0; i < nc; ++i) {
      const double x = g.cell_center(i)[0];
      mu[i] = 1.0;
      mu[nc + i] = 0.5 * (1.0 - std::tanh(10.0 * std::abs(x) - 5.0));
    }
    return mu;
  };
  m.parameters["eps"] = {eps, false};
  m.domain_lo = -4;
  m.domain_hi = 4;
  m.cells = 1024;
  m.tau = 0.1;
  m.steps = 10;
  return m;
}

ModelSpec two_layer_film_model(double eps, double sigma) {
  if (!(eps > 0)) throw ModelError("two_layer_film: eps must be positive");
  ModelSpec m;
  m.name = "two_layer_film";
  m.mobility = std::make_shared<FunctionMobility>(
      2,
      [](const double* u) {
        const double a = u[0], b = u[1], d = b - a;
        return sym2(a * a * a / 3, a * a * a / 3 + a * a * d / 2, d * d * d / 3 + a * b * d + a * a * a / 3);
      },
      [](const double* u, int k) {
        const double a = u[0], b = u[1], d = b - a;
        if (k == 0) return sym2(a * a, -a * a / 2 + a * b, -d * d + b * d - a * b + a * a);
        return sym2(0, a * a / 2, d * d + a * d + a * b);
      });
  m.energy.species = 2;
  m.energy.terms = {term(TermKind::LennardJones, {-1, 1}, eps, true),
                    term(TermKind::Dirichlet, {1, 0}, sigma, false),
                    term(TermKind::Dirichlet, {0, 1}, 1, false)};
  m.box = BoxConstraint::none(2);
  m.initial = [eps](const Grid& g) {
    const int nc = g.num_cells();
    std::vector<double> mu(2 * static_cast<std::size_t>(nc));
    for (int i = 0; i < nc; ++i) {
      const double x = g.cell_center(i)[0];
      mu[i] = 0.75 - 0.25 * std::cos(std::numbers::pi * x / 2);
      mu[nc + i] = 1.0 + eps;
    }
    return mu;
  };
  m.parameters["eps"] = {eps, true};
  m.parameters["sigma"] = {sigma, false};
  m.domain_lo = -1;
  m.domain_hi = 1;
  m.cells = 100;
  m.tau = 1e-4;
  m.steps = 200;
  return m;
}

ModelSpec saturation_fp_model(double a, double sigma1, double sigma2) {
  ModelSpec m;
  m.name = "saturation_fp";
  m.mobility = std::make_shared<FunctionMobility>(
      2,
      [](const double* u) {
        const double s = 1 - u[0] - u[1];
        return sym2(u[0] * s, 0, u[1] * s);
      },
      [](const double* u, int k) {
        const double s = 1 - u[0] - u[1];
        return k == 0 ? sym2(s - u[0], 0, -u[1]) : sym2(-u[0], 0, s - u[1]);
      });
  m.energy.species = 2;
  m.energy.terms = {term(TermKind::HalfSquare, {1, 1}, a, false)};
  m.energy.potentials = {[sigma1](const std::array<double, 2>& x) { return 0.5 * sigma1 * sq_norm(x); },
                         [sigma2](const std::array<double, 2>& x) { return 0.5 * sigma2 * sq_norm(x); }};
  BoxConstraint box;
  box.coupling = Eigen::MatrixXd(3, 2);
  box.coupling << 1, 0, 0, 1, 1, 1;
  box.lower = {0, 0, -kInf};
  box.upper = {kInf, kInf, 1};
  m.box = box;
  m.initial = [](const Grid& g) {
    const int nc = g.num_cells();
    const double omega = 8 * std::numbers::pi;
    std::vector<double> mu(2 * static_cast<std::size_t>(nc));
    for (int i = 0; i < nc; ++i) {
      const double x = g.cell_center(i)[0];
      const double f = 0.4 * (1 - (4 * x / 3) * (4 * x / 3));
      mu[i] = std::max(0.0, f * (1 - 0.5 * std::cos(omega * x)));
      mu[nc + i] = std::max(0.0, f * (1 + 0.5 * std::cos(omega * x)));
    }
    return mu;
  };
  m.parameters["a"] = {a, true};
  m.parameters["sigma1"] = {sigma1, true};
  m.parameters["sigma2"] = {sigma2, true};
  m.domain_lo = -1;
  m.domain_hi = 1;
  m.cells = 400;
  m.tau = 0.1;
  m.steps = 50;
  return m;
}

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"skt", "surfactant", "two_layer_film", "saturation_fp"};
  return names;
}

ModelSpec make_model(const std::string& name, int dim, const std::map<std::string, double>& overrides) {
  auto get = [&](const std::string& key, double fallback) {
    auto it = overrides.find(key);
    return it == overrides.end() ? fallback : it->second;
  };
  auto check = [&](std::initializer_list<const char*> known) {
    for (const auto& [key, value] : overrides) {
      (void)value;
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
        throw ModelError("unknown parameter '" + key + "' for model '" + name + "'");
      }
    }
  };
  if (name != "skt" && dim != 1) throw ModelError("model '" + name + "' is one-dimensional");
  ModelSpec m;
  if (name == "skt") {
    check({});
    m = skt_model(dim);
  } else if (name == "surfactant") {
    check({"eps"});
    m = surfactant_model(get("eps", 1e-2));
    if (overrides.count("eps")) m.parameters["eps"].published = false;
  } else if (name == "two_layer_film") {
    check({"eps", "sigma"});
    m = two_layer_film_model(get("eps", 0.01), get("sigma", 1.0));
  } else if (name == "saturation_fp") {
    check({"a", "sigma1", "sigma2"});
    m = saturation_fp_model(get("a", 0.2), get("sigma1", 4.0), get("sigma2", 2.0));
  } else {
    std::ostringstream os;
    os << "unknown model '" << name << "'; valid models:";
    for (const auto& n : model_names()) os << ' ' << n;
    throw ModelError(os.str());
  }
  for (const auto& [key, value] : overrides) {
    if (key == "eps" && name == "two_layer_film" && value != 0.01) m.parameters[key].published = false;
    if (name == "saturation_fp") {
      static const std::map<std::string, double> published{{"a", 0.2}, {"sigma1", 4.0}, {"sigma2", 2.0}};
      if (published.at(key) != value) m.parameters[key].published = false;
    }
  }
  m.energy.validate();
  m.box.validate(m.species);
  return m;
}

}  // namespace crossdiff
