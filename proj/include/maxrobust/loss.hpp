#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <string_view>

#include "maxrobust/types.hpp"

namespace maxrobust {

// Margin losses zeta(z), z = y * phi(x).
enum class Loss { Exponential, Logistic };

inline std::string to_string(Loss l) { return l == Loss::Exponential ? "exponential" : "logistic"; }

inline Loss parse_loss(std::string_view s) {
  if (s == "exp" || s == "exponential") return Loss::Exponential;
  if (s == "logistic" || s == "log") return Loss::Logistic;
  throw InvalidArgument("unknown loss '" + std::string(s) + "'");
}

// softplus(t) = log(1 + e^t) without overflow.
inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

inline double loss_value(Loss l, double z) {
  return l == Loss::Exponential ? std::exp(-z) : softplus(-z);
}

// d zeta / dz (always negative).
inline double loss_derivative(Loss l, double z) {
  return l == Loss::Exponential ? -std::exp(-z) : -1.0 / (1.0 + std::exp(z));
}

// log zeta(z), finite even where zeta(z) underflows.
inline double log_loss_value(Loss l, double z) {
  if (l == Loss::Exponential) return -z;
  if (z <= 0.0) return std::log(softplus(-z));
  const double u = std::exp(-z);
  return u == 0.0 ? -z : -z + std::log(std::log1p(u) / u);
}

// log |zeta'(z)|.
inline double log_loss_slope(Loss l, double z) {
  return l == Loss::Exponential ? -z : -softplus(z);
}

inline double log_sum_exp(const Vector& a) {
  if (a.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = a.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((a.array() - m).exp().sum());
}

// log sum_i zeta(m_i) for a vector of margins m_i = y_i phi(x_i).
inline double log_risk_from_margins(Loss l, const Vector& margins) {
  return log_sum_exp(margins.unaryExpr([l](double z) { return log_loss_value(l, z); }));
}

inline double risk_from_margins(Loss l, const Vector& margins) {
  return margins.unaryExpr([l](double z) { return loss_value(l, z); }).sum();
}

}  // namespace maxrobust
