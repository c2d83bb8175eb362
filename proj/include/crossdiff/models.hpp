/// @file models.hpp
/// @brief Mobility interface and the four shipped two-species systems.
#pragma once

#include "crossdiff/cone.hpp"
#include "crossdiff/constraint_prox.hpp"
#include "crossdiff/energy.hpp"
#include "crossdiff/grid.hpp"

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace crossdiff {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Cellwise mobility M(mu) with its partial derivatives dM/dmu_a.
class Mobility {
 public:
  virtual ~Mobility() = default;
  virtual int species() const = 0;
  /// `mu` points at `species()` values.
  virtual Mat evaluate(const double* mu) const = 0;
  virtual Mat partial(const double* mu, int alpha) const = 0;

  /// DM(mu)[dmu] = sum_a dmu_a dM/dmu_a.
  Mat directional(const double* mu, const double* dmu) const;
};

/// Mobility given by a callable pair; used for the shipped models and tests.
class FunctionMobility final : public Mobility {
 public:
  using Eval = std::function<Mat(const double*)>;
  using Partial = std::function<Mat(const double*, int)>;
  FunctionMobility(int species, Eval eval, Partial partial)
      : n_(species), eval_(std::move(eval)), partial_(std::move(partial)) {}
  int species() const override { return n_; }
  Mat evaluate(const double* mu) const override { return eval_(mu); }
  Mat partial(const double* mu, int alpha) const override { return partial_(mu, alpha); }

 private:
  int n_;
  Eval eval_;
  Partial partial_;
};

/// Initial data on a grid, species-major (n * cells).
using InitialData = std::function<std::vector<double>(const Grid&)>;

struct ModelParameter {
  double value = 0.0;
  bool published = true;  ///< false when the value is a default we chose
};

struct ModelSpec {
  std::string name;
  int species = 2;
  int dim = 1;
  std::shared_ptr<const Mobility> mobility;
  EnergySpec energy;
  BoxConstraint box;
  InitialData initial;
  std::map<std::string, ModelParameter> parameters;

  /// Settings used for runs unless overridden.
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  int cells = 10;
  double tau = 0.1;
  int steps = 10;

  Grid default_grid() const;
};

ModelSpec skt_model(int dim = 1);
ModelSpec surfactant_model(double eps = 1e-2);
ModelSpec two_layer_film_model(double eps = 0.01, double sigma = 1.0);
ModelSpec saturation_fp_model(double a = 0.2, double sigma1 = 4.0, double sigma2 = 2.0);

/// Names accepted by make_model.
const std::vector<std::string>& model_names();
/// Builds a model by name with parameter overrides. Unknown names or
/// parameters throw ModelError.
ModelSpec make_model(const std::string& name, int dim, const std::map<std::string, double>& overrides = {});

/// Cellwise mobility evaluated at every cell of a species-major field.
std::vector<Mat> mobility_field(const Mobility& mob, std::span<const double> mu, int cells);

/// Gather the species vector of one cell.
inline void gather_cell(std::span<const double> mu, int species, int cells, int i, double* out) {
  for (int a = 0; a < species; ++a) out[a] = mu[a * cells + i];
}

}  // namespace crossdiff
