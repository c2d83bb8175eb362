/// @file cone.hpp
/// @brief Small-matrix kernels evaluated cell by cell.
///
/// The action f(M, m) = 1/2 m : M^+ m (extended by +inf off its domain) is the
/// support function of the closed convex set
///
///     K = { (Q, q) in Sym(n) x R^{n x d} : Q + q q^T / 2 <= 0 }.
///
/// This header provides the symmetric eigensolver, the projection onto the
/// PSD cone with its directional derivative, the action itself, the dual
/// recovery pair attaining the support value, and two projections onto K
/// (semismooth Newton and ADMM).
#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace crossdiff {

inline constexpr int kMaxSpecies = 4;
inline constexpr int kMaxNd = 8;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxNd, kMaxNd>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxNd, 1>;
/// n x d momentum / dual block.
using RectMat = Mat;

class ConeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Symmetric n x n matrix. The constructor symmetrizes its argument.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int n) : a_(Mat::Zero(n, n)) {}
  explicit SymMat(const Mat& a) : a_(0.5 * (a + a.transpose())) {}

  static SymMat identity(int n) { return SymMat(Mat(Mat::Identity(n, n))); }
  static SymMat diag(const Vec& d) { return SymMat(Mat(d.asDiagonal())); }

  int size() const { return static_cast<int>(a_.rows()); }
  const Mat& mat() const { return a_; }
  double operator()(int i, int j) const { return a_(i, j); }

  SymMat operator+(const SymMat& o) const { return SymMat(Mat(a_ + o.a_)); }
  SymMat operator-(const SymMat& o) const { return SymMat(Mat(a_ - o.a_)); }
  SymMat operator*(double s) const { return SymMat(Mat(a_ * s)); }

 private:
  Mat a_;
};

/// Frobenius inner product A : B.
inline double frob(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

struct EigenDecomp {
  Mat vectors;  ///< orthonormal, column k belongs to values(k)
  Vec values;   ///< descending
};

/// (Q, q) pair in Sym(n) x R^{n x d}.
struct DualPair {
  SymMat Q;
  RectMat q;
};

/// Largest eigenvalue of Q + q q^T / 2; (Q, q) lies in K iff this is <= 0.
double cone_violation(const SymMat& Q, const RectMat& q);

/// Closed form for n <= 2, cyclic Jacobi (30 sweeps) otherwise. Eigenvectors
/// are sign-normalized so that the first nonzero component is positive.
EigenDecomp eig_sym(const SymMat& s);

SymMat proj_psd(const SymMat& s);
/// Negative part, s - proj_psd(s).
SymMat proj_nsd(const SymMat& s);

/// Directional derivative of proj_psd at Y in direction Z:
/// V [A o (V^T Z V)] V^T with A the divided differences of max(0, .) on the
/// eigenvalues of Y (indicator of positivity on ties).
SymMat dproj_psd(const SymMat& y, const SymMat& z);

/// Action f(M, m). Returns +infinity when M has an eigenvalue below
/// -tol_eig or m has a component above tol_kernel in the kernel of M.
double action_value(const SymMat& M, const RectMat& m);

/// Q* = -1/2 M^+ m m^T M^+, q* = M^+ m. Throws ConeError on inadmissible input.
DualPair support_recovery_pair(const SymMat& M, const RectMat& m);

/// Dual pairs in K along which M : Q + m : q grows without bound when (M, m)
/// is inadmissible. `scale` is the sequence index. Throws on admissible input.
DualPair unboundedness_witness(const SymMat& M, const RectMat& m, double scale);

struct ProjectionStats {
  int iterations = 0;        ///< Newton or ADMM iterations taken
  int first_feasible = -1;   ///< ADMM: first iteration with violation <= 1e-12
  double residual = 0.0;     ///< final |dF1| (Newton) or fixed-point change (ADMM)
  bool converged = false;
  bool used_fallback = false;
  int gamma_halvings = 0;    ///< ADMM: step reductions after stalls
};

struct NewtonOptions {
  double tol = 1e-12;   ///< on |dF1| relative to max(1, |q0|)
  int max_iter = 50;
  int max_halvings = 30;
};

struct AdmmOptions {
  double gamma = 1.0;
  double tol = 1e-14;   ///< on the change of the multiplier, relative
  int max_iter = 20000;
  /// gamma is halved when, over this many iterations, the multiplier change
  /// has not reached a new minimum or its increments keep flipping direction
  /// (the update oscillates for large gamma)
  int stall_window = 100;
};

/// Euclidean projection of (Q0, q0) onto K by semismooth Newton on
/// F1(q) = 1/2 |q - q0|^2 + 1/2 |proj_psd(Q0 + q q^T / 2)|^2. Falls back to
/// ADMM when Newton stagnates. `q_init` overrides the starting point q0.
DualPair proj_K_newton(const SymMat& Q0, const RectMat& q0, const NewtonOptions& opt = {},
                       ProjectionStats* stats = nullptr, const RectMat* q_init = nullptr);

/// Euclidean projection of (Q0, q0) onto K by the multiplier iteration
///   Q = Q0 - Z,  q = (I + Z)^{-1} q0,  Z <- proj_psd(Z + gamma (Q + q q^T / 2)).
DualPair proj_K_admm(const SymMat& Q0, const RectMat& q0, const AdmmOptions& opt = {},
                     ProjectionStats* stats = nullptr);

/// Gradient of F1 at q (used by tests and diagnostics).
RectMat newton_gradient(const SymMat& Q0, const RectMat& q0, const RectMat& q);

}  // namespace crossdiff
