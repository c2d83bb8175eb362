/// @file bindings.cpp
/// @brief pybind11 module exposing grids, models, the JKO driver and the reference solver.
#include "crossdiff/jko.hpp"
#include "crossdiff/reference.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace crossdiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array to_array2(const std::vector<std::vector<double>>& rows) {
  const py::ssize_t cols = rows.empty() ? 0 : static_cast<py::ssize_t>(rows.front().size());
  Array out({static_cast<py::ssize_t>(rows.size()), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), out.mutable_data(r, 0));
  return out;
}

Mat to_mat(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  if (a.shape(0) > kMaxNd || a.shape(1) > kMaxNd) throw py::value_error("matrix too large");
  Mat m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = *a.data(i, j);
  return m;
}

Array from_mat(const Mat& m) {
  Array out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) *out.mutable_data(i, j) = m(i, j);
  return out;
}

py::dict trajectory_dict(const Trajectory& t) {
  std::vector<double> energy, time, residual;
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<std::vector<double>> mass;
  for (const auto& d : t.diagnostics) {
    energy.push_back(d.energy);
    time.push_back(d.time);
    mass.push_back(d.mass);
    iterations.push_back(d.pdfb_iterations);
    converged.push_back(d.converged);
  }
  py::dict out;
  out["snapshot_steps"] = t.snapshot_steps;
  out["snapshots"] = to_array2(t.snapshots);
  out["final_state"] = to_array(t.final_state);
  out["energy"] = to_array(energy);
  out["time"] = to_array(time);
  out["mass"] = to_array2(mass);
  out["iterations"] = iterations;
  out["converged"] = converged;
  out["completed"] = t.completed;
  out["failed_step"] = t.failed_step;
  out["error"] = t.error;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Structure-preserving JKO solver for cross-diffusion systems";

  py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);

  py::class_<Grid>(m, "Grid")
      .def_static("line", &Grid::line, py::arg("n"), py::arg("lo"), py::arg("hi"))
      .def_static("square", &Grid::square, py::arg("n"), py::arg("lo"), py::arg("hi"))
      .def_readonly("dim", &Grid::dim)
      .def_readonly("h", &Grid::h)
      .def_property_readonly("shape", [](const Grid& g) {
        if (g.dim == 1) return py::tuple(py::make_tuple(g.cells[0]));
        return py::tuple(py::make_tuple(g.cells[1], g.cells[0]));
      })
      .def_property_readonly("num_cells", &Grid::num_cells)
      .def_property_readonly("num_faces", py::overload_cast<>(&Grid::num_faces, py::const_))
      .def_property_readonly("cell_volume", &Grid::cell_volume)
      .def("centers", [](const Grid& g, int axis) {
        std::vector<double> c(static_cast<std::size_t>(g.num_cells()));
        for (int i = 0; i < g.num_cells(); ++i) c[i] = g.cell_center(i)[axis];
        return to_array(c);
      }, py::arg("axis") = 0)
      .def("__repr__", [](const Grid& g) {
        return "Grid(dim=" + std::to_string(g.dim) + ", cells=" + std::to_string(g.num_cells()) +
               ", h=" + std::to_string(g.h) + ")";
      });

  py::class_<ModelSpec>(m, "Model")
      .def_readonly("name", &ModelSpec::name)
      .def_readonly("species", &ModelSpec::species)
      .def_readonly("dim", &ModelSpec::dim)
      .def_readonly("tau", &ModelSpec::tau)
      .def_readonly("steps", &ModelSpec::steps)
      .def_readonly("cells", &ModelSpec::cells)
      .def_property_readonly("domain", [](const ModelSpec& s) { return py::make_tuple(s.domain_lo, s.domain_hi); })
      .def_property_readonly("parameters", [](const ModelSpec& s) {
        std::map<std::string, double> p;
        for (const auto& [k, v] : s.parameters) p[k] = v.value;
        return p;
      })
      .def("default_grid", &ModelSpec::default_grid)
      .def("initial", [](const ModelSpec& s, const Grid& g) { return to_array(s.initial(g)); }, py::arg("grid"))
      .def("box_violation", [](const ModelSpec& s, const Grid& g, const Array& mu) {
        return s.box.max_violation(g, to_vector(mu));
      })
      .def("__repr__", [](const ModelSpec& s) { return "Model('" + s.name + "', dim=" + std::to_string(s.dim) + ")"; });

  m.def("model_names", &model_names);
  m.def("make_model", &make_model, py::arg("name"), py::arg("dim") = 1,
        py::arg("params") = std::map<std::string, double>{});

  m.def("energy", [](const ModelSpec& s, const Grid& g, const Array& mu) {
    return discrete_energy(s.energy, g, to_vector(mu));
  }, py::arg("model"), py::arg("grid"), py::arg("mu"), "Discrete energy E_h including the h^d factor.");

  m.def("run_flow",
        [](const ModelSpec& s, std::optional<Grid> grid, std::optional<Array> mu0, std::optional<double> tau,
           std::optional<int> steps, double tol, int max_iter, int output_every) {
          const Grid g = grid ? *grid : s.default_grid();
          JkoConfig cfg;
          cfg.tau = tau.value_or(s.tau);
          cfg.steps = steps.value_or(s.steps);
          cfg.output_every = output_every;
          cfg.pdfb.tol = tol;
          cfg.pdfb.max_iter = max_iter;
          const auto start = mu0 ? to_vector(*mu0) : s.initial(g);
          Trajectory t;
          {
            py::gil_scoped_release release;
            t = run_flow(start, s, g, cfg);
          }
          return trajectory_dict(t);
        },
        py::arg("model"), py::arg("grid") = py::none(), py::arg("mu0") = py::none(), py::arg("tau") = py::none(),
        py::arg("steps") = py::none(), py::arg("tol") = 1e-6, py::arg("max_iter") = 20000,
        py::arg("output_every") = 1);

  m.def("reference_run",
        [](const ModelSpec& s, double t_final, std::optional<Grid> grid, std::optional<Array> mu0, double tau) {
          const Grid g = grid ? *grid : s.default_grid();
          ReferenceConfig cfg;
          cfg.tau = tau;
          const auto start = mu0 ? to_vector(*mu0) : s.initial(g);
          std::vector<double> out;
          {
            py::gil_scoped_release release;
            out = reference_run(start, s, g, t_final, cfg);
          }
          return to_array(out);
        },
        py::arg("model"), py::arg("t_final"), py::arg("grid") = py::none(), py::arg("mu0") = py::none(),
        py::arg("tau") = 1e-3);

  m.def("relative_error", [](const Array& a, const Array& b) { return relative_error(to_vector(a), to_vector(b)); });

  m.def("project_cone",
        [](const Array& Q0, const Array& q0, const std::string& method) {
          const SymMat Q(to_mat(Q0));
          const Mat q = to_mat(q0);
          if (method != "newton" && method != "admm") throw py::value_error("method must be 'newton' or 'admm'");
          const DualPair p = method == "newton" ? proj_K_newton(Q, q) : proj_K_admm(Q, q);
          return py::make_tuple(from_mat(p.Q.mat()), from_mat(p.q));
        },
        py::arg("Q0"), py::arg("q0"), py::arg("method") = "newton",
        "Euclidean projection onto {(Q, q): Q + q q^T / 2 <= 0}.");

  m.def("action", [](const Array& M, const Array& mom) { return action_value(SymMat(to_mat(M)), to_mat(mom)); },
        py::arg("M"), py::arg("m"), "Action m^T M^+ m / 2, infinite when inadmissible.");
}
