#pragma once

#include <array>
#include <string>
#include <string_view>

#include "maxrobust/fourier.hpp"

namespace maxrobust {

enum class NormKind { L1, L2, Linf, FourierL1, FourierLinf };

inline constexpr std::array<NormKind, 5> kAllNorms = {NormKind::L1, NormKind::L2, NormKind::Linf,
                                                      NormKind::FourierL1, NormKind::FourierLinf};

// Attack norms that appear in experiments; each pairs with a weight norm by duality.
inline constexpr std::array<NormKind, 4> kAttackNorms = {NormKind::L1, NormKind::L2, NormKind::Linf,
                                                         NormKind::FourierLinf};

inline constexpr NormKind dual(NormKind k) {
  switch (k) {
    case NormKind::L1: return NormKind::Linf;
    case NormKind::L2: return NormKind::L2;
    case NormKind::Linf: return NormKind::L1;
    case NormKind::FourierL1: return NormKind::FourierLinf;
    case NormKind::FourierLinf: return NormKind::FourierL1;
  }
  return k;
}

inline constexpr bool is_fourier(NormKind k) {
  return k == NormKind::FourierL1 || k == NormKind::FourierLinf;
}

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::L1: return "l1";
    case NormKind::L2: return "l2";
    case NormKind::Linf: return "linf";
    case NormKind::FourierL1: return "fourier-l1";
    case NormKind::FourierLinf: return "fourier-linf";
  }
  return "?";
}

inline NormKind parse_norm_kind(std::string_view s) {
  if (s == "l1" || s == "L1") return NormKind::L1;
  if (s == "l2" || s == "L2") return NormKind::L2;
  if (s == "linf" || s == "Linf" || s == "inf") return NormKind::Linf;
  if (s == "fourier-l1" || s == "FourierL1" || s == "fl1") return NormKind::FourierL1;
  if (s == "fourier-linf" || s == "FourierLinf" || s == "flinf") return NormKind::FourierLinf;
  throw InvalidArgument("unknown norm kind '" + std::string(s) + "'");
}

inline double norm(const Vector& v, NormKind k) {
  if (v.size() == 0) throw InvalidArgument("norm: empty vector");
  detail::require_finite(v, "norm");
  switch (k) {
    case NormKind::L1: return v.lpNorm<1>();
    case NormKind::L2: return v.stableNorm();
    case NormKind::Linf: return v.lpNorm<Eigen::Infinity>();
    case NormKind::FourierL1: return dft(v).coeffs.cwiseAbs().sum();
    case NormKind::FourierLinf: return dft(v).coeffs.cwiseAbs().maxCoeff();
  }
  return 0.0;
}

// A maximizer of <w, delta> over the unit ball of `k`; the maximum equals
// norm(w, dual(k)). Zero input gives the zero vector. Ties resolve to the
// lowest index.
inline Vector dual_witness(const Vector& w, NormKind k) {
  const Eigen::Index d = w.size();
  Vector delta = Vector::Zero(d);
  if (d == 0 || w.isZero(0.0)) return delta;
  switch (k) {
    case NormKind::L1: {
      Eigen::Index i = 0;
      w.cwiseAbs().maxCoeff(&i);
      delta[i] = w[i] > 0 ? 1.0 : -1.0;
      return delta;
    }
    case NormKind::L2: return w / w.stableNorm();
    case NormKind::Linf: return w.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    case NormKind::FourierLinf: {
      // Phase-aligned unit magnitude on every non-negligible bin.
      const Spectrum s = dft(w);
      const double tol = 1e-12 * s.coeffs.norm();
      Spectrum u{ComplexVector::Zero(d), true};
      for (Eigen::Index i = 0; i < d; ++i) {
        const double mag = std::abs(s.coeffs[i]);
        if (mag > tol) u.coeffs[i] = s.coeffs[i] / mag;
      }
      return idft(u);
    }
    case NormKind::FourierL1: {
      // All mass on the largest bin and its mirror.
      const Spectrum s = dft(w);
      Eigen::Index i = 0;
      s.coeffs.cwiseAbs().maxCoeff(&i);
      const Eigen::Index mirror = detail::wrap(-i, d);
      const Complex phase = s.coeffs[i] / std::abs(s.coeffs[i]);
      Spectrum u{ComplexVector::Zero(d), true};
      if (mirror == i) {
        u.coeffs[i] = Complex{phase.real() >= 0 ? 1.0 : -1.0, 0.0};
      } else {
        u.coeffs[i] = 0.5 * phase;
        u.coeffs[mirror] = 0.5 * std::conj(phase);
      }
      return idft(u);
    }
  }
  return delta;
}

}  // namespace maxrobust
