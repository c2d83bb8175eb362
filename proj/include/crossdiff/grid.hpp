/// @file grid.hpp
/// @brief Uniform staggered grid in one or two dimensions and its difference operators.
///
/// Cell values live on the index set of boxes; face values live on the faces
/// orthogonal to each axis. Faces are stored direction-major: all faces normal
/// to axis 0 first, then all faces normal to axis 1. Along its own axis a face
/// block has cells+1 entries, so the first and last entry of every face line
/// lie on the domain boundary.
///
/// Sign conventions:
///   (div s)_i   = (1/h) sum_q (s_{i+1/2 e_q} - s_{i-1/2 e_q})
///   (grad u)_j  = (u_right - u_left) / h   on interior faces, 0 on boundary faces
///   div^T       = -grad                     (restricted to interior faces)
///   lap         = div o grad                (Neumann)
#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossdiff {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform box grid. All axes share the spacing h.
struct Grid {
  int dim = 1;
  std::array<int, 2> cells{1, 1};
  double h = 1.0;
  std::array<double, 2> origin{0.0, 0.0};

  /// [lo, hi] split into n cells.
  static Grid line(int n, double lo, double hi);
  /// [lo, hi]^2 split into n x n cells.
  static Grid square(int n, double lo, double hi);

  int num_cells() const { return dim == 1 ? cells[0] : cells[0] * cells[1]; }
  int num_faces(int axis) const;
  int face_offset(int axis) const { return axis == 0 ? 0 : num_faces(0); }
  int num_faces() const { return dim == 1 ? num_faces(0) : num_faces(0) + num_faces(1); }
  /// h^d, the cell volume.
  double cell_volume() const { return dim == 1 ? h : h * h; }

  int cell_index(int ix, int iy = 0) const { return ix + cells[0] * iy; }
  /// Center coordinate of cell (ix, iy) along `axis`.
  double center(int axis, int idx) const { return origin[axis] + (idx + 0.5) * h; }
  /// Coordinates of cell `c` (flat index).
  std::array<double, 2> cell_center(int c) const;

  /// Global index of face number k along `axis`, for the face line through
  /// the other coordinate `other` (ignored in 1D).
  int face_index(int axis, int k, int other = 0) const;
  /// True when the face (flat index) lies on the domain boundary.
  bool is_boundary_face(int face) const;

  bool operator==(const Grid&) const = default;
};

void require_same_grid(const Grid& a, const Grid& b);

// ---------------------------------------------------------------------------
// Raw operators on contiguous storage. Sizes are checked.
// ---------------------------------------------------------------------------

void divergence(const Grid& g, std::span<const double> faces, std::span<double> out);
void divergence_adjoint(const Grid& g, std::span<const double> cells, std::span<double> out);
/// Face-to-center average. `out` has dim * num_cells entries, axis-major.
void interpolate(const Grid& g, std::span<const double> faces, std::span<double> out);
void interpolate_adjoint(const Grid& g, std::span<const double> cellvec, std::span<double> out);
/// Centered difference on the faces normal to `axis`; boundary faces get 0.
/// `out` has num_faces(axis) entries.
void partial_derivative(const Grid& g, std::span<const double> cells, int axis,
                        std::span<double> out);
/// Centered difference on all faces (both axes).
void gradient(const Grid& g, std::span<const double> cells, std::span<double> out);
void neumann_laplacian(const Grid& g, std::span<const double> cells, std::span<double> out);
/// Zero every boundary face.
void clamp_boundary(const Grid& g, std::span<double> faces);

// ---------------------------------------------------------------------------
// Typed fields.
// ---------------------------------------------------------------------------

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& g, double value = 0.0)
      : grid_(g), values_(static_cast<std::size_t>(g.num_cells()), value) {}
  ScalarField(const Grid& g, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

class FluxField {
 public:
  FluxField() = default;
  /// Zero flux; `boundary_clamped` pins boundary faces to zero.
  explicit FluxField(const Grid& g, bool boundary_clamped = true)
      : grid_(g), values_(static_cast<std::size_t>(g.num_faces()), 0.0), clamped_(boundary_clamped) {}
  FluxField(const Grid& g, std::vector<double> values, bool boundary_clamped);

  const Grid& grid() const { return grid_; }
  bool boundary_clamped() const { return clamped_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  /// Faces normal to `axis`.
  std::span<const double> axis(int axis) const;
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
  bool clamped_ = true;
};

/// d values per cell, stored axis-major (all x components, then all y components).
class CellVectorField {
 public:
  CellVectorField() = default;
  explicit CellVectorField(const Grid& g, double value = 0.0)
      : grid_(g), values_(static_cast<std::size_t>(g.dim * g.num_cells()), value) {}
  CellVectorField(const Grid& g, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double component(int axis, int cell) const {
    return values_[static_cast<std::size_t>(axis * grid_.num_cells() + cell)];
  }
  std::size_t size() const { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

ScalarField divergence(const FluxField& s);
FluxField divergence_adjoint(const ScalarField& phi);
CellVectorField interpolate(const FluxField& s);
FluxField interpolate_adjoint(const CellVectorField& w);
/// Faces normal to `axis` only.
std::vector<double> partial_derivative(const ScalarField& u, int axis);
ScalarField neumann_laplacian(const ScalarField& u);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace crossdiff
