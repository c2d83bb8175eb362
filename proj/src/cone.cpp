#include "crossdiff/cone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace crossdiff {

namespace {

constexpr double kTolKernel = 1e-10;
constexpr double kFeasibleViolation = 1e-12;

void normalize_signs(Mat& v) {
  for (int k = 0; k < v.cols(); ++k) {
    for (int i = 0; i < v.rows(); ++i) {
      if (v(i, k) != 0.0) {
        if (v(i, k) < 0.0) v.col(k) *= -1.0;
        break;
      }
    }
  }
}

void sort_descending(EigenDecomp& e) {
  const int n = static_cast<int>(e.values.size());
  std::array<int, kMaxNd> idx{};
  std::iota(idx.begin(), idx.begin() + n, 0);
  std::stable_sort(idx.begin(), idx.begin() + n,
                   [&](int a, int b) { return e.values(a) > e.values(b); });
  EigenDecomp out{Mat(n, n), Vec(n)};
  for (int k = 0; k < n; ++k) {
    out.values(k) = e.values(idx[k]);
    out.vectors.col(k) = e.vectors.col(idx[k]);
  }
  e = std::move(out);
}

EigenDecomp eig_2x2(const Mat& s) {
  const double a = s(0, 0);
  const double b = 0.5 * (s(0, 1) + s(1, 0));
  const double c = s(1, 1);
  EigenDecomp e{Mat(2, 2), Vec(2)};
  if (b == 0.0) {
    if (a >= c) {
      e.vectors << 1.0, 0.0, 0.0, 1.0;
      e.values << a, c;
    } else {
      e.vectors << 0.0, 1.0, 1.0, 0.0;
      e.values << c, a;
    }
    return e;
  }
  // Half-angle form; each branch avoids cancellation in the eigenvector.
  const double half = 0.5 * (a - c);
  const double r = std::hypot(half, b);
  const double mean = 0.5 * (a + c);
  double vx, vy;
  if (half >= 0.0) {
    vx = half + r;
    vy = b;
  } else {
    vx = b;
    vy = r - half;
  }
  const double len = std::hypot(vx, vy);
  vx /= len;
  vy /= len;
  e.vectors << vx, -vy, vy, vx;
  e.values << mean + r, mean - r;
  normalize_signs(e.vectors);
  return e;
}

EigenDecomp eig_jacobi(const Mat& s) {
  const int n = static_cast<int>(s.rows());
  Mat a = 0.5 * (s + s.transpose());
  Mat v = Mat::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  bool done = false;
  for (int sweep = 0; sweep < 30 && !done; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-17 * scale) {
      done = true;
      break;
    }
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (!done) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) > 1e-13 * scale) throw ConeError("eig_sym: Jacobi did not converge in 30 sweeps");
  }
  EigenDecomp e{v, a.diagonal()};
  sort_descending(e);
  normalize_signs(e.vectors);
  return e;
}

Mat reconstruct(const EigenDecomp& e, const Vec& values) {
  return e.vectors * values.asDiagonal() * e.vectors.transpose();
}

Mat psd_part(const EigenDecomp& e) {
  return reconstruct(e, e.values.cwiseMax(0.0));
}

Mat dproj_with(const EigenDecomp& e, const Mat& z) {
  const int n = static_cast<int>(e.values.size());
  const Mat b = e.vectors.transpose() * z * e.vectors;
  Mat w(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double li = e.values(i);
      const double lj = e.values(j);
      double coeff;
      if (li == lj) {
        coeff = li > 0.0 ? 1.0 : 0.0;
      } else {
        coeff = (std::max(li, 0.0) - std::max(lj, 0.0)) / (li - lj);
      }
      w(i, j) = coeff * b(i, j);
    }
  }
  return e.vectors * w * e.vectors.transpose();
}

double tol_eig(const SymMat& m) { return 1e-12 * std::max(1.0, m.mat().cwiseAbs().maxCoeff()); }

}  // namespace

double cone_violation(const SymMat& Q, const RectMat& q) {
  const Mat r = Q.mat() + 0.5 * q * q.transpose();
  return eig_sym(SymMat(r)).values(0);
}

EigenDecomp eig_sym(const SymMat& s) {
  const int n = s.size();
  if (n == 0) return {};
  if (n == 1) {
    EigenDecomp e{Mat::Ones(1, 1), Vec(1)};
    e.values(0) = s(0, 0);
    return e;
  }
  if (n == 2) return eig_2x2(s.mat());
  return eig_jacobi(s.mat());
}

SymMat proj_psd(const SymMat& s) {
  const EigenDecomp e = eig_sym(s);
  if (e.values.minCoeff() >= 0.0) return s;
  if (e.values.maxCoeff() <= 0.0) return SymMat(s.size());
  return SymMat(psd_part(e));
}

SymMat proj_nsd(const SymMat& s) {
  const EigenDecomp e = eig_sym(s);
  if (e.values.maxCoeff() <= 0.0) return s;
  if (e.values.minCoeff() >= 0.0) return SymMat(s.size());
  return SymMat(reconstruct(e, e.values.cwiseMin(0.0)));
}

SymMat dproj_psd(const SymMat& y, const SymMat& z) {
  const EigenDecomp e = eig_sym(y);
  if (e.values.minCoeff() > 0.0) return z;
  if (e.values.maxCoeff() <= 0.0) return SymMat(y.size());
  return SymMat(dproj_with(e, z.mat()));
}

double action_value(const SymMat& M, const RectMat& m) {
  const double teig = tol_eig(M);
  const EigenDecomp e = eig_sym(M);
  const Mat rot = e.vectors.transpose() * m;
  double f = 0.0;
  for (int a = 0; a < M.size(); ++a) {
    const double lam = e.values(a);
    const double r2 = rot.row(a).squaredNorm();
    if (lam < -teig) return std::numeric_limits<double>::infinity();
    if (lam <= teig) {
      if (std::sqrt(r2) > kTolKernel) return std::numeric_limits<double>::infinity();
      continue;
    }
    f += 0.5 * r2 / lam;
  }
  return f;
}

DualPair support_recovery_pair(const SymMat& M, const RectMat& m) {
  if (!std::isfinite(action_value(M, m))) {
    throw ConeError("support_recovery_pair: (M, m) is not admissible");
  }
  const double teig = tol_eig(M);
  const EigenDecomp e = eig_sym(M);
  Vec inv(M.size());
  for (int a = 0; a < M.size(); ++a) inv(a) = e.values(a) > teig ? 1.0 / e.values(a) : 0.0;
  const Mat pinv = reconstruct(e, inv);
  const RectMat qs = pinv * m;
  return {SymMat(Mat(-0.5 * qs * qs.transpose())), qs};
}

DualPair unboundedness_witness(const SymMat& M, const RectMat& m, double scale) {
  const double teig = tol_eig(M);
  const EigenDecomp e = eig_sym(M);
  const int n = M.size();
  const int last = n - 1;
  if (e.values(last) < -teig) {
    const Vec v = e.vectors.col(last);
    return {SymMat(Mat(-scale * v * v.transpose())), RectMat::Zero(n, m.cols())};
  }
  const Mat rot = e.vectors.transpose() * m;
  for (int a = 0; a < n; ++a) {
    if (e.values(a) <= teig && rot.row(a).norm() > kTolKernel) {
      const Vec v = e.vectors.col(a);
      const double r2 = rot.row(a).squaredNorm();
      DualPair p;
      p.Q = SymMat(Mat(-0.5 * scale * scale * r2 * v * v.transpose()));
      p.q = scale * v * rot.row(a);
      return p;
    }
  }
  throw ConeError("unboundedness_witness: (M, m) is admissible");
}

RectMat newton_gradient(const SymMat& Q0, const RectMat& q0, const RectMat& q) {
  const Mat y = Q0.mat() + 0.5 * q * q.transpose();
  return q - q0 + psd_part(eig_sym(SymMat(y))) * q;
}

namespace {

/// Objective value and spectral data of F1 at q.
struct NewtonPoint {
  EigenDecomp e;
  double f = 0.0;
};

NewtonPoint newton_point(const SymMat& Q0, const RectMat& q0, const RectMat& q) {
  NewtonPoint p;
  p.e = eig_sym(SymMat(Mat(Q0.mat() + 0.5 * q * q.transpose())));
  p.f = 0.5 * (q - q0).squaredNorm() + 0.5 * p.e.values.cwiseMax(0.0).squaredNorm();
  return p;
}

/// Generalized Hessian of F1 in the eigenbasis of y; unknowns ordered
/// column-major as (row, column) of the rotated q.
Mat rotated_hessian(const EigenDecomp& e, const RectMat& qt) {
  const int n = static_cast<int>(qt.rows());
  const int d = static_cast<int>(qt.cols());
  Mat gam(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double la = e.values(a), lb = e.values(b);
      gam(a, b) = la == lb ? (la > 0.0 ? 1.0 : 0.0) : (std::max(la, 0.0) - std::max(lb, 0.0)) / (la - lb);
    }
  }
  // t(i, j, c) = sum_b gam(i, b) qt(b, j) qt(b, c)
  Mat h = Mat::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const int col = i + n * j;
      for (int c = 0; c < d; ++c) {
        double t = 0.0;
        for (int b = 0; b < n; ++b) t += gam(i, b) * qt(b, j) * qt(b, c);
        h(i + n * c, col) += 0.5 * t;
      }
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < d; ++c) h(a + n * c, col) += 0.5 * gam(a, i) * qt(a, j) * qt(i, c);
      h(col, col) += 1.0 + std::max(e.values(i), 0.0);
    }
  }
  return h;
}

}  // namespace

DualPair proj_K_newton(const SymMat& Q0, const RectMat& q0, const NewtonOptions& opt,
                       ProjectionStats* stats, const RectMat* q_init) {
  const int n = Q0.size();
  const int d = static_cast<int>(q0.cols());
  const int nd = n * d;
  const double tol = opt.tol * std::max(1.0, q0.norm());
  ProjectionStats local;
  RectMat q = q0;
  NewtonPoint pt = newton_point(Q0, q0, q);
  if (q_init && pt.e.values(0) > 0.0) {
    // (Q0, q0) outside K: start from the supplied guess instead
    q = *q_init;
    pt = newton_point(Q0, q0, q);
  }
  bool converged = false;
  for (int it = 0;; ++it) {
    const EigenDecomp& e = pt.e;
    const Vec lp = e.values.cwiseMax(0.0);
    const RectMat qt = e.vectors.transpose() * q;
    // gradient q - q0 + Y_+ q, rotated
    const RectMat gt = e.vectors.transpose() * (q - q0) + lp.asDiagonal() * qt;
    const double gnorm = gt.norm();
    // Gradient evaluation cannot beat roundoff in its own terms.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (q0.norm() + q.norm() * (1.0 + lp.norm()));
    local.iterations = it;
    local.residual = gnorm;
    if (gnorm <= std::max(tol, floor)) {
      converged = true;
      break;
    }
    if (it >= opt.max_iter) break;

    const Mat h = rotated_hessian(e, qt);
    const Vec rhs = Eigen::Map<const Vec>(gt.data(), nd);
    Vec step = h.ldlt().solve(rhs);
    if (!step.allFinite()) step = h.fullPivLu().solve(rhs);
    const RectMat dir = e.vectors * Eigen::Map<const RectMat>(step.data(), n, d);

    const double slope = rhs.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k) {
      const RectMat trial = q - t * dir;
      NewtonPoint pt_trial = newton_point(Q0, q0, trial);
      if (pt_trial.f <= pt.f - 1e-4 * t * slope + 1e-15 * std::max(1.0, pt.f)) {
        q = trial;
        pt = std::move(pt_trial);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  if (converged) {
    local.converged = true;
    DualPair out{SymMat(Mat(reconstruct(pt.e, pt.e.values.cwiseMin(0.0)) - 0.5 * q * q.transpose())), q};
    if (stats) *stats = local;
    return out;
  }
  ProjectionStats admm_stats;
  DualPair out = proj_K_admm(Q0, q0, AdmmOptions{}, &admm_stats);
  local.used_fallback = true;
  local.converged = admm_stats.converged;
  local.residual = admm_stats.residual;
  if (stats) *stats = local;
  if (!admm_stats.converged) throw ConeError("proj_K_newton: Newton and ADMM fallback both failed");
  return out;
}

DualPair proj_K_admm(const SymMat& Q0, const RectMat& q0, const AdmmOptions& opt,
                     ProjectionStats* stats) {
  if (!(opt.gamma > 0.0)) throw ConeError("proj_K_admm: gamma must be positive");
  const int n = Q0.size();
  ProjectionStats local;
  Mat z = Mat::Zero(n, n);
  SymMat Q;
  RectMat q;
  double gamma = opt.gamma;
  double best_change = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int window_count = 0;
  int flips = 0;
  Mat last_dz = Mat::Zero(n, n);
  for (int it = 1; it <= opt.max_iter; ++it) {
    Q = SymMat(Mat(Q0.mat() - z));
    if (z.isZero(0.0)) {
      q = q0;
    } else {
      const EigenDecomp ez = eig_sym(SymMat(z));
      const Vec inv = (ez.values.array() + 1.0).inverse().matrix();
      q = reconstruct(ez, inv) * q0;
    }
    const SymMat r(Mat(Q.mat() + 0.5 * q * q.transpose()));
    const double viol = eig_sym(r).values(0);
    if (viol <= kFeasibleViolation && local.first_feasible < 0) local.first_feasible = it;
    const Mat znew = proj_psd(SymMat(Mat(z + gamma * r.mat()))).mat();
    const Mat dz = znew - z;
    const double change = dz.norm();
    z = znew;
    if (frob(dz, last_dz) < 0.0) ++flips;
    last_dz = dz;
    ++window_count;
    if (change < best_change) {
      best_change = change;
      since_best = 0;
    } else {
      ++since_best;
    }
    // Stalled or persistently alternating multiplier: gamma is too large.
    const bool stalled = since_best >= opt.stall_window;
    const bool alternating = window_count >= opt.stall_window && flips * 10 >= window_count * 9;
    if (stalled || alternating) {
      gamma *= 0.5;
      ++local.gamma_halvings;
      best_change = std::numeric_limits<double>::infinity();
      since_best = 0;
    }
    if (window_count >= opt.stall_window) {
      window_count = 0;
      flips = 0;
    }
    local.iterations = it;
    // Scaled by gamma so that step reductions cannot fake convergence.
    local.residual = change / gamma;
    if (viol <= kFeasibleViolation && local.residual <= opt.tol * std::max(1.0, z.norm())) {
      local.converged = true;
      break;
    }
  }
  if (stats) *stats = local;
  if (!local.converged && !stats) {
    throw ConeError("proj_K_admm: iteration cap exceeded, last multiplier change " +
                    std::to_string(local.residual));
  }
  return {Q, q};
}

}  // namespace crossdiff
