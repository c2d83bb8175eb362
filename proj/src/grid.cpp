#include "crossdiff/grid.hpp"

#include <numeric>
#include <sstream>

namespace crossdiff {

namespace {

void check_size(std::size_t got, int want, const char* what) {
  if (got != static_cast<std::size_t>(want)) {
    std::ostringstream os;
    os << what << ": expected " << want << " values, got " << got;
    throw GeometryError(os.str());
  }
}

int ny_of(const Grid& g) { return g.dim == 1 ? 1 : g.cells[1]; }

}  // namespace

Grid Grid::line(int n, double lo, double hi) {
  if (n < 1 || !(hi > lo)) throw GeometryError("Grid::line: need n >= 1 and hi > lo");
  Grid g;
  g.dim = 1;
  g.cells = {n, 1};
  g.h = (hi - lo) / n;
  g.origin = {lo, 0.0};
  return g;
}

Grid Grid::square(int n, double lo, double hi) {
  if (n < 1 || !(hi > lo)) throw GeometryError("Grid::square: need n >= 1 and hi > lo");
  Grid g;
  g.dim = 2;
  g.cells = {n, n};
  g.h = (hi - lo) / n;
  g.origin = {lo, lo};
  return g;
}

int Grid::num_faces(int axis) const {
  if (axis == 0) return (cells[0] + 1) * ny_of(*this);
  if (axis == 1 && dim == 2) return cells[0] * (cells[1] + 1);
  throw GeometryError("num_faces: invalid axis");
}

std::array<double, 2> Grid::cell_center(int c) const {
  const int ix = c % cells[0];
  const int iy = c / cells[0];
  return {center(0, ix), dim == 2 ? center(1, iy) : 0.0};
}

int Grid::face_index(int axis, int k, int other) const {
  if (axis == 0) return k + (cells[0] + 1) * other;
  return face_offset(1) + other + cells[0] * k;
}

bool Grid::is_boundary_face(int face) const {
  if (face < num_faces(0)) {
    const int k = face % (cells[0] + 1);
    return k == 0 || k == cells[0];
  }
  const int local = face - face_offset(1);
  const int k = local / cells[0];
  return k == 0 || k == cells[1];
}

void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw GeometryError("fields live on different grids");
}

void divergence(const Grid& g, std::span<const double> faces, std::span<double> out) {
  check_size(faces.size(), g.num_faces(), "divergence(faces)");
  check_size(out.size(), g.num_cells(), "divergence(out)");
  const int nx = g.cells[0];
  const int ny = ny_of(g);
  const double inv_h = 1.0 / g.h;
  for (int iy = 0; iy < ny; ++iy) {
    const double* fx = faces.data() + (nx + 1) * iy;
    double* o = out.data() + nx * iy;
    for (int ix = 0; ix < nx; ++ix) o[ix] = (fx[ix + 1] - fx[ix]) * inv_h;
  }
  if (g.dim == 2) {
    const double* fy = faces.data() + g.face_offset(1);
    for (int iy = 0; iy < ny; ++iy) {
      double* o = out.data() + nx * iy;
      const double* lo = fy + nx * iy;
      const double* hi = fy + nx * (iy + 1);
      for (int ix = 0; ix < nx; ++ix) o[ix] += (hi[ix] - lo[ix]) * inv_h;
    }
  }
}

void divergence_adjoint(const Grid& g, std::span<const double> cells, std::span<double> out) {
  gradient(g, cells, out);
  for (double& v : out) v = -v;
}

void partial_derivative(const Grid& g, std::span<const double> cells, int axis,
                        std::span<double> out) {
  if (axis < 0 || axis >= g.dim) throw GeometryError("partial_derivative: invalid axis");
  check_size(cells.size(), g.num_cells(), "partial_derivative(cells)");
  check_size(out.size(), g.num_faces(axis), "partial_derivative(out)");
  const int nx = g.cells[0];
  const int ny = ny_of(g);
  const double inv_h = 1.0 / g.h;
  if (axis == 0) {
    for (int iy = 0; iy < ny; ++iy) {
      const double* c = cells.data() + nx * iy;
      double* o = out.data() + (nx + 1) * iy;
      o[0] = 0.0;
      o[nx] = 0.0;
      for (int k = 1; k < nx; ++k) o[k] = (c[k] - c[k - 1]) * inv_h;
    }
  } else {
    for (int ix = 0; ix < nx; ++ix) {
      out[ix] = 0.0;
      out[ix + nx * ny] = 0.0;
    }
    for (int k = 1; k < ny; ++k) {
      const double* lo = cells.data() + nx * (k - 1);
      const double* hi = cells.data() + nx * k;
      double* o = out.data() + nx * k;
      for (int ix = 0; ix < nx; ++ix) o[ix] = (hi[ix] - lo[ix]) * inv_h;
    }
  }
}

void gradient(const Grid& g, std::span<const double> cells, std::span<double> out) {
  check_size(out.size(), g.num_faces(), "gradient(out)");
  partial_derivative(g, cells, 0, out.subspan(0, static_cast<std::size_t>(g.num_faces(0))));
  if (g.dim == 2) {
    partial_derivative(g, cells, 1, out.subspan(static_cast<std::size_t>(g.face_offset(1))));
  }
}

void interpolate(const Grid& g, std::span<const double> faces, std::span<double> out) {
  check_size(faces.size(), g.num_faces(), "interpolate(faces)");
  check_size(out.size(), g.dim * g.num_cells(), "interpolate(out)");
  const int nx = g.cells[0];
  const int ny = ny_of(g);
  for (int iy = 0; iy < ny; ++iy) {
    const double* fx = faces.data() + (nx + 1) * iy;
    double* o = out.data() + nx * iy;
    for (int ix = 0; ix < nx; ++ix) o[ix] = 0.5 * (fx[ix] + fx[ix + 1]);
  }
  if (g.dim == 2) {
    const double* fy = faces.data() + g.face_offset(1);
    double* oy = out.data() + g.num_cells();
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        oy[ix + nx * iy] = 0.5 * (fy[ix + nx * iy] + fy[ix + nx * (iy + 1)]);
      }
    }
  }
}

void interpolate_adjoint(const Grid& g, std::span<const double> cellvec, std::span<double> out) {
  check_size(cellvec.size(), g.dim * g.num_cells(), "interpolate_adjoint(cells)");
  check_size(out.size(), g.num_faces(), "interpolate_adjoint(out)");
  const int nx = g.cells[0];
  const int ny = ny_of(g);
  for (int iy = 0; iy < ny; ++iy) {
    const double* w = cellvec.data() + nx * iy;
    double* o = out.data() + (nx + 1) * iy;
    o[0] = 0.0;
    o[nx] = 0.0;
    for (int k = 1; k < nx; ++k) o[k] = 0.5 * (w[k - 1] + w[k]);
  }
  if (g.dim == 2) {
    const double* wy = cellvec.data() + g.num_cells();
    double* oy = out.data() + g.face_offset(1);
    for (int ix = 0; ix < nx; ++ix) {
      oy[ix] = 0.0;
      oy[ix + nx * ny] = 0.0;
    }
    for (int k = 1; k < ny; ++k) {
      for (int ix = 0; ix < nx; ++ix) {
        oy[ix + nx * k] = 0.5 * (wy[ix + nx * (k - 1)] + wy[ix + nx * k]);
      }
    }
  }
}

void neumann_laplacian(const Grid& g, std::span<const double> cells, std::span<double> out) {
  std::vector<double> faces(static_cast<std::size_t>(g.num_faces()));
  gradient(g, cells, faces);
  divergence(g, faces, out);
}

void clamp_boundary(const Grid& g, std::span<double> faces) {
  check_size(faces.size(), g.num_faces(), "clamp_boundary");
  const int nx = g.cells[0];
  const int ny = ny_of(g);
  for (int iy = 0; iy < ny; ++iy) {
    faces[static_cast<std::size_t>((nx + 1) * iy)] = 0.0;
    faces[static_cast<std::size_t>((nx + 1) * iy + nx)] = 0.0;
  }
  if (g.dim == 2) {
    const std::size_t off = static_cast<std::size_t>(g.face_offset(1));
    for (int ix = 0; ix < nx; ++ix) {
      faces[off + ix] = 0.0;
      faces[off + ix + static_cast<std::size_t>(nx * ny)] = 0.0;
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw GeometryError("dot: size mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// --- typed fields -----------------------------------------------------------

ScalarField::ScalarField(const Grid& g, std::vector<double> values)
    : grid_(g), values_(std::move(values)) {
  check_size(values_.size(), g.num_cells(), "ScalarField");
}

FluxField::FluxField(const Grid& g, std::vector<double> values, bool boundary_clamped)
    : grid_(g), values_(std::move(values)), clamped_(boundary_clamped) {
  check_size(values_.size(), g.num_faces(), "FluxField");
  if (clamped_) clamp_boundary(grid_, values_);
}

std::span<const double> FluxField::axis(int a) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(grid_.face_offset(a)),
                                                  static_cast<std::size_t>(grid_.num_faces(a)));
}

CellVectorField::CellVectorField(const Grid& g, std::vector<double> values)
    : grid_(g), values_(std::move(values)) {
  check_size(values_.size(), g.dim * g.num_cells(), "CellVectorField");
}

ScalarField divergence(const FluxField& s) {
  ScalarField out(s.grid());
  divergence(s.grid(), s.values(), out.values());
  return out;
}

FluxField divergence_adjoint(const ScalarField& phi) {
  FluxField out(phi.grid(), true);
  divergence_adjoint(phi.grid(), phi.values(), out.values());
  return out;
}

CellVectorField interpolate(const FluxField& s) {
  CellVectorField out(s.grid());
  interpolate(s.grid(), s.values(), out.values());
  return out;
}

FluxField interpolate_adjoint(const CellVectorField& w) {
  FluxField out(w.grid(), true);
  interpolate_adjoint(w.grid(), w.values(), out.values());
  return out;
}

std::vector<double> partial_derivative(const ScalarField& u, int axis) {
  if (axis < 0 || axis >= u.grid().dim) throw GeometryError("partial_derivative: invalid axis");
  std::vector<double> out(static_cast<std::size_t>(u.grid().num_faces(axis)));
  partial_derivative(u.grid(), u.values(), axis, out);
  return out;
}

ScalarField neumann_laplacian(const ScalarField& u) {
  ScalarField out(u.grid());
  neumann_laplacian(u.grid(), u.values(), out.values());
  return out;
}

}  // namespace crossdiff
