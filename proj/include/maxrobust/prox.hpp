#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "maxrobust/norms.hpp"

namespace maxrobust {

// Euclidean projection onto {u : ||u||_1 <= radius} (sort-based, O(d log d)).
inline Vector project_l1_ball(const Vector& v, double radius) {
  if (radius < 0.0) throw InvalidArgument("project_l1_ball: negative radius");
  if (v.lpNorm<1>() <= radius) return v;
  if (radius == 0.0) return Vector::Zero(v.size());
  std::vector<double> u(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - radius) / static_cast<double>(j + 1);
    if (u[j] > t) theta = t;
  }
  return v.unaryExpr([theta](double x) {
    const double m = std::max(std::abs(x) - theta, 0.0);
    return x >= 0 ? m : -m;
  });
}

inline Vector soft_threshold(const Vector& v, double theta) {
  return v.unaryExpr([theta](double x) {
    const double m = std::max(std::abs(x) - theta, 0.0);
    return x >= 0 ? m : -m;
  });
}

// prox_{theta * ||.||_kind}(w) = argmin_u 1/2 ||u - w||^2 + theta ||u||_kind.
// Supported kinds: L1, L2, Linf, FourierL1.
inline Vector prox(NormKind kind, double theta, const Vector& w) {
  if (theta < 0.0) throw InvalidArgument("prox: negative threshold");
  if (theta == 0.0) return w;
  switch (kind) {
    case NormKind::L1: return soft_threshold(w, theta);
    case NormKind::L2: {
      const double n = w.norm();
      if (n <= theta) return Vector::Zero(w.size());
      return (1.0 - theta / n) * w;
    }
    case NormKind::Linf:
      // Moreau: prox of theta*||.||_inf is the residual of projecting onto the theta l1-ball.
      return w - project_l1_ball(w, theta);
    case NormKind::FourierL1: return idft(complex_soft_threshold(dft(w), theta));
    case NormKind::FourierLinf: break;
  }
  throw InvalidArgument("prox: unsupported regularizer " + to_string(kind));
}

}  // namespace maxrobust
