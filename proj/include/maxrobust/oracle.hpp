#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "maxrobust/models.hpp"
#include "maxrobust/prox.hpp"

namespace maxrobust {

struct OracleSolution {
  Vector w;                       // min_i y_i <w, x_i> = 1
  NormKind attack = NormKind::L2;
  NormKind weight_norm = NormKind::L2;  // dual(attack)
  double objective = std::numeric_limits<double>::infinity();  // ||w||_weight, an upper bound on the optimum
  double lower_bound = 0.0;       // dual certificate
  double max_margin = 0.0;        // 1 / objective
  double kkt_residual = std::numeric_limits<double>::infinity();  // (objective - lower_bound) / objective
  long iterations = 0;
  bool converged = false;
};

struct OracleOptions {
  long max_iterations = 1'000'000;
  double tolerance = 1e-8;
  double rho = 1.0;
  double relaxation = 1.6;
  long balance_every = 50;
  long polish_every = 200;
};

namespace detail {

// min ||w|| s.t. A w >= 1 written as min f(w) + g(z) s.t. z = A w and solved
// by over-relaxed graph-form ADMM. Bounds are tracked throughout: any w with
// min(Aw) > 0 gives ||w|| / min(Aw) >= OPT, and any lambda >= 0 gives
// 1'lambda / ||A'lambda||_attack <= OPT (weak duality).
class MinNormSolver {
 public:
  MinNormSolver(const Matrix& A, NormKind weight, const OracleOptions& opt)
      : A_(A), weight_(weight), attack_(dual(weight)), opt_(opt), n_(A.rows()), d_(A.cols()) {
    wide_ = n_ <= d_;
    if (wide_) {
      Matrix K = Matrix::Identity(n_, n_) + A_ * A_.transpose();
      chol_.compute(K);
    } else {
      Matrix K = Matrix::Identity(d_, d_) + A_.transpose() * A_;
      chol_.compute(K);
    }
  }

  OracleSolution solve() {
    Vector w = Vector::Zero(d_), z = Vector::Ones(n_);
    Vector wt = Vector::Zero(d_), zt = Vector::Zero(n_);
    Vector lambda = Vector::Zero(n_);
    double rho = opt_.rho;
    const double alpha = opt_.relaxation;
    long it = 0;
    for (; it < opt_.max_iterations; ++it) {
      const Vector wh = prox(weight_, 1.0 / rho, w - wt);
      const Vector zh = (z - zt).cwiseMax(1.0);
      lambda = rho * (zh - z + zt);
      const Vector whr = alpha * wh + (1.0 - alpha) * w;
      const Vector zhr = alpha * zh + (1.0 - alpha) * z;
      Vector wn, zn;
      project_graph(whr + wt, zhr + zt, wn, zn);
      wt += whr - wn;
      zt += zhr - zn;
      const double primal = (wh - wn).norm() + (zh - zn).norm();
      const double dual_res = rho * ((wn - w).norm() + (zn - z).norm());
      w = std::move(wn);
      z = std::move(zn);

      offer_primal(w);
      offer_primal(wh);
      offer_dual(lambda);
      if (done()) break;
      if (it > 0 && it % opt_.polish_every == 0) {
        polish(w, lambda);
        if (done()) break;
      }
      if (it > 0 && it % opt_.balance_every == 0) {
        if (primal > 10.0 * dual_res) {
          rho *= 2.0;
          wt /= 2.0;
          zt /= 2.0;
        } else if (dual_res > 10.0 * primal) {
          rho /= 2.0;
          wt *= 2.0;
          zt *= 2.0;
        }
      }
    }
    if (!done()) polish(w, lambda);

    OracleSolution sol;
    sol.attack = attack_;
    sol.weight_norm = weight_;
    sol.iterations = std::min(it + 1, opt_.max_iterations);
    if (best_w_.size() == 0) {
      sol.w = Vector::Zero(d_);
      return sol;
    }
    sol.w = best_w_;
    sol.objective = upper_;
    sol.lower_bound = lower_;
    sol.max_margin = 1.0 / upper_;
    sol.kkt_residual = gap();
    sol.converged = sol.kkt_residual <= opt_.tolerance;
    return sol;
  }

 private:
  double gap() const { return std::isfinite(upper_) ? (upper_ - lower_) / upper_ : std::numeric_limits<double>::infinity(); }
  bool done() const { return gap() <= opt_.tolerance; }

  // Euclidean projection of (c, e) onto {(w, z) : z = A w}.
  void project_graph(const Vector& c, const Vector& e, Vector& w, Vector& z) const {
    if (wide_) {
      const Vector s = chol_.solve(A_ * c - e);
      w = c - A_.transpose() * s;
    } else {
      w = chol_.solve(c + A_.transpose() * e);
    }
    z = A_ * w;
  }

  void offer_primal(const Vector& w) {
    const double m = (A_ * w).minCoeff();
    if (!(m > 0.0)) return;
    const double u = norm(w, weight_) / m;
    if (u < upper_) {
      upper_ = u;
      best_w_ = w / m;
    }
  }

  void offer_dual(const Vector& lambda) {
    if ((lambda.array() < 0.0).any()) return;
    const double s = lambda.sum();
    if (!(s > 0.0)) return;
    const double denom = norm(A_.transpose() * lambda, attack_);
    if (!(denom > 0.0)) return;
    lower_ = std::max(lower_, s / denom);
  }

  static Vector lstsq(const Matrix& M, const Vector& rhs) {
    if (M.rows() == 0 || M.cols() == 0) return Vector::Zero(M.cols());
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(M).solve(rhs);
  }

  Matrix rows_cols(const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols) const {
    Matrix M(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) M(i, j) = A_(rows[i], cols[j]);
    return M;
  }

  Vector scatter_lambda(const std::vector<Eigen::Index>& S, const Vector& vals) const {
    Vector lam = Vector::Zero(n_);
    for (std::size_t i = 0; i < S.size(); ++i) lam[S[i]] = std::max(vals[i], 0.0);
    return lam;
  }

  // Active-set refinement: guess the constraints that bind at the optimum and
  // the structure of the solution, then solve the resulting square-ish
  // systems by least squares. Every candidate is scored by the bounds, so a
  // wrong guess is harmless.
  void polish(const Vector& w_admm, const Vector& lambda) {
    static constexpr double kTaus[] = {1e-1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    const double mw = (A_ * w_admm).minCoeff();
    const Vector w = mw > 0.0 ? Vector(w_admm / mw) : w_admm;
    const Vector m = A_ * w;
    const double lam_max = lambda.maxCoeff();
    for (double tau : kTaus) {
      std::vector<Eigen::Index> S_primal, S_dual;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (m[i] <= 1.0 + tau) S_primal.push_back(i);
        if (lam_max > 0.0 && lambda[i] > tau * lam_max) S_dual.push_back(i);
      }
      switch (weight_) {
        case NormKind::L2:
          polish_l2(S_primal);
          polish_l2(S_dual);
          break;
        case NormKind::L1: polish_l1(S_primal, w, tau); break;
        case NormKind::Linf:
          polish_linf_from_w(S_primal, w, tau);
          if (lam_max > 0.0) polish_linf_from_lambda(S_dual, lambda, tau);
          break;
        case NormKind::FourierL1:
          polish_fourier(S_primal, w, tau);
          polish_fourier(S_dual, w, tau);
          break;
        case NormKind::FourierLinf: return;
      }
      if (done()) return;
    }
  }

  void polish_l2(const std::vector<Eigen::Index>& S) {
    if (S.empty()) return;
    Matrix AS(S.size(), d_);
    for (std::size_t i = 0; i < S.size(); ++i) AS.row(i) = A_.row(S[i]);
    const Vector mu = lstsq(AS * AS.transpose(), Vector::Ones(S.size()));
    offer_primal(AS.transpose() * mu);
    offer_dual(scatter_lambda(S, mu));
  }

  void polish_l1(const std::vector<Eigen::Index>& S, const Vector& w, double tau) {
    if (S.empty()) return;
    const double top = w.cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> T;
    for (Eigen::Index j = 0; j < d_; ++j)
      if (std::abs(w[j]) > tau * top) T.push_back(j);
    if (T.empty()) return;
    const Matrix M = rows_cols(S, T);
    const Vector wT = lstsq(M, Vector::Ones(S.size()));
    Vector wp = Vector::Zero(d_);
    Vector s(T.size());
    for (std::size_t j = 0; j < T.size(); ++j) {
      wp[T[j]] = wT[j];
      s[j] = w[T[j]] > 0 ? 1.0 : -1.0;
    }
    offer_primal(wp);
    offer_dual(scatter_lambda(S, lstsq(M.transpose(), s)));
  }

  // w = t * s on the saturated set, free elsewhere; unknowns (t, w_free).
  void polish_linf(const std::vector<Eigen::Index>& S, const std::vector<Eigen::Index>& sat, const Vector& s) {
    if (S.empty() || sat.empty()) return;
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0, k = 0; j < d_; ++j) {
      if (k < static_cast<Eigen::Index>(sat.size()) && sat[k] == j) {
        ++k;
        continue;
      }
      free.push_back(j);
    }
    Matrix M(S.size(), 1 + free.size());
    M.col(0) = rows_cols(S, sat) * s;
    if (!free.empty()) M.rightCols(free.size()) = rows_cols(S, free);
    const Vector sol = lstsq(M, Vector::Ones(S.size()));
    Vector wp = Vector::Zero(d_);
    for (std::size_t j = 0; j < sat.size(); ++j) wp[sat[j]] = sol[0] * s[j];
    for (std::size_t j = 0; j < free.size(); ++j) wp[free[j]] = sol[1 + j];
    offer_primal(wp);
    Vector rhs = Vector::Zero(M.cols());
    rhs[0] = 1.0;
    offer_dual(scatter_lambda(S, lstsq(M.transpose(), rhs)));
  }

  void polish_linf_from_w(const std::vector<Eigen::Index>& S, const Vector& w, double tau) {
    const double t = w.cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> sat;
    std::vector<double> sv;
    for (Eigen::Index j = 0; j < d_; ++j) {
      if (std::abs(w[j]) >= t * (1.0 - tau)) {
        sat.push_back(j);
        sv.push_back(w[j] > 0 ? 1.0 : -1.0);
      }
    }
    polish_linf(S, sat, Eigen::Map<Vector>(sv.data(), static_cast<Eigen::Index>(sv.size())));
  }

  void polish_linf_from_lambda(const std::vector<Eigen::Index>& S, const Vector& lambda, double tau) {
    const Vector v = A_.transpose() * lambda;
    const double top = v.cwiseAbs().maxCoeff();
    if (!(top > 0.0)) return;
    std::vector<Eigen::Index> sat;
    std::vector<double> sv;
    for (Eigen::Index j = 0; j < d_; ++j) {
      if (std::abs(v[j]) > tau * top) {
        sat.push_back(j);
        sv.push_back(v[j] > 0 ? 1.0 : -1.0);
      }
    }
    polish_linf(S, sat, Eigen::Map<Vector>(sv.data(), static_cast<Eigen::Index>(sv.size())));
  }

  // Multipliers whose combination A_S' lambda has spectrum equal to the phases
  // of w on its support (the subgradient of the Fourier-l1 norm there).
  void polish_fourier(const std::vector<Eigen::Index>& S, const Vector& w, double tau) {
    if (S.empty()) return;
    const Spectrum wh = dft(w);
    const double top = wh.coeffs.cwiseAbs().maxCoeff();
    if (!(top > 0.0)) return;
    std::vector<Eigen::Index> T;
    for (Eigen::Index i = 0; 2 * i <= d_; ++i)
      if (std::abs(wh.coeffs[i]) > tau * top) T.push_back(i);
    if (T.empty()) return;
    Matrix M(2 * T.size(), S.size());
    Vector rhs(2 * T.size());
    for (std::size_t k = 0; k < S.size(); ++k) {
      const Spectrum r = dft(Vector(A_.row(S[k]).transpose()));
      for (std::size_t t = 0; t < T.size(); ++t) {
        M(2 * t, k) = r.coeffs[T[t]].real();
        M(2 * t + 1, k) = r.coeffs[T[t]].imag();
      }
    }
    for (std::size_t t = 0; t < T.size(); ++t) {
      const Complex ph = wh.coeffs[T[t]] / std::abs(wh.coeffs[T[t]]);
      rhs[2 * t] = ph.real();
      rhs[2 * t + 1] = ph.imag();
    }
    offer_dual(scatter_lambda(S, lstsq(M, rhs)));
  }

  const Matrix& A_;
  NormKind weight_;
  NormKind attack_;
  OracleOptions opt_;
  Eigen::Index n_, d_;
  bool wide_ = true;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  double upper_ = std::numeric_limits<double>::infinity();
  double lower_ = 0.0;
  Vector best_w_;
};

}  // namespace detail

// Maximum-margin classifier against `attack`: min ||w||_{dual(attack)} subject
// to y_i <w, x_i> >= 1. Supported attacks: L1, L2, Linf, FourierLinf.
inline OracleSolution min_norm_solve(const Dataset& ds, NormKind attack, const OracleOptions& opt = {}) {
  if (attack == NormKind::FourierL1) throw InvalidArgument("min_norm_solve: fourier-l1 attacks are not supported");
  if (ds.n() == 0) throw InvalidArgument("min_norm_solve: empty dataset");
  const Matrix A = ds.y.asDiagonal() * ds.X;
  detail::MinNormSolver solver(A, dual(attack), opt);
  OracleSolution sol = solver.solve();
  if (sol.w.size() && sol.objective < std::numeric_limits<double>::infinity()) {
    sol.w /= (A * sol.w).minCoeff();
  }
  return sol;
}

namespace detail {

inline double direction_margin(const Matrix& A, const Vector& v, NormKind weight) {
  const double nv = norm(v, weight);
  if (nv == 0.0) return -std::numeric_limits<double>::infinity();
  return (A * v).minCoeff() / nv;
}

}  // namespace detail

// Grid search over directions for d <= 3: a uniform grid of spacing 2/base on
// the surface of the cube [-1, 1]^d, followed by `levels` zoom passes that
// search a 9^d local grid around the incumbent with half the previous
// spacing, re-centering while the incumbent moves. The value is a maximum
// over a growing point set, so it never decreases as `levels` grows.
inline double brute_force_max_margin(const Dataset& ds, NormKind attack, int levels = 40, int base = 64) {
  const Eigen::Index d = ds.dim();
  if (d < 1 || d > 3) throw InvalidArgument("brute_force_max_margin: needs 1 <= d <= 3");
  if (base < 1 || levels < 0) throw InvalidArgument("brute_force_max_margin: bad grid resolution");
  const NormKind weight = dual(attack);
  const Matrix A = ds.y.asDiagonal() * ds.X;
  double best = -std::numeric_limits<double>::infinity();
  Vector best_v = Vector::Zero(d);
  auto consider = [&](const Vector& v) {
    const double m = detail::direction_margin(A, v, weight);
    if (m > best) {
      best = m;
      best_v = v;
    }
  };

  std::vector<long> idx(static_cast<std::size_t>(d), 0);
  const long side = base + 1;
  long total = 1;
  for (Eigen::Index k = 0; k < d; ++k) total *= side;
  Vector v(d);
  for (long code = 0; code < total; ++code) {
    long c = code;
    bool on_surface = false;
    for (Eigen::Index k = 0; k < d; ++k) {
      const long j = c % side;
      c /= side;
      v[k] = -1.0 + 2.0 * static_cast<double>(j) / base;
      on_surface = on_surface || j == 0 || j == base;
    }
    if (on_surface) consider(v);
  }

  double h = 2.0 / base;
  constexpr int kRadius = 4;
  constexpr long kSide = 2 * kRadius + 1;
  long local_total = 1;
  for (Eigen::Index k = 0; k < d; ++k) local_total *= kSide;
  constexpr int kMaxMoves = 64;
  for (int level = 0; level < levels; ++level) {
    h *= 0.5;
    for (int move = 0; move < kMaxMoves; ++move) {
      const Vector center = best_v;
      for (long code = 0; code < local_total; ++code) {
        long c = code;
        for (Eigen::Index k = 0; k < d; ++k) {
          v[k] = center[k] + h * static_cast<double>(c % kSide - kRadius);
          c /= kSide;
        }
        consider(v);
      }
      if (best_v == center) break;
    }
  }
  return best;
}

}  // namespace maxrobust
