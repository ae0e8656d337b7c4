#pragma once

// Unitary DFT, circular convolution and the per-bin complex operators used by
// Fourier-domain norms, attacks and proximal steps.
//
// Conventions: both directions carry a 1/sqrt(d) factor, and
//   [w * x]_i = 1/sqrt(d) * sum_k w[(-k) mod d] x[(i + k) mod d],
// so that dft(w * x) = dft(w) .* dft(x) holds without extra constants.

#include <algorithm>
#include <cstdio>
#include <map>
#include <utility>
#include <numbers>
#include <vector>

#include "maxrobust/types.hpp"

namespace maxrobust {

// DFT image of a real (or nearly real) vector. `hermitian` asserts
// coeffs[i] == conj(coeffs[(d - i) mod d]).
struct Spectrum {
  ComplexVector coeffs;
  bool hermitian = true;

  Eigen::Index size() const { return coeffs.size(); }
};

// Relative tolerance on the imaginary residue of an inverse transform.
inline constexpr double kImagResidueTol = 1e-8;

namespace detail {

inline bool is_power_of_two(Eigen::Index d) { return d > 0 && (d & (d - 1)) == 0; }

// Twiddle table exp(sign * 2*pi*j*k/d) for k in [0, d).
inline std::vector<Complex> twiddles(Eigen::Index d, double sign) {
  std::vector<Complex> t(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    t[static_cast<std::size_t>(k)] =
        std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(d));
  }
  return t;
}

// O(d^2) reference transform; index products are reduced mod d before the
// table lookup so large d keeps full accuracy.
inline ComplexVector dft_direct(const ComplexVector& x, double sign) {
  const Eigen::Index d = x.size();
  const auto tw = twiddles(d, sign);
  ComplexVector out(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Complex acc{0.0, 0.0};
    for (Eigen::Index j = 0; j < d; ++j) {
      acc += x[j] * tw[static_cast<std::size_t>((j * k) % d)];
    }
    out[k] = acc;
  }
  return out / std::sqrt(static_cast<double>(d));
}

// Iterative radix-2 Cooley-Tukey, d a power of two.
inline ComplexVector fft_radix2(const ComplexVector& x, double sign) {
  const Eigen::Index d = x.size();
  ComplexVector a = x;
  for (Eigen::Index i = 1, j = 0; i < d; ++i) {
    Eigen::Index bit = d >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto tw = twiddles(d, sign);
  for (Eigen::Index len = 2; len <= d; len <<= 1) {
    const Eigen::Index stride = d / len;
    for (Eigen::Index start = 0; start < d; start += len) {
      for (Eigen::Index k = 0; k < len / 2; ++k) {
        const Complex u = a[start + k];
        const Complex v = a[start + k + len / 2] * tw[static_cast<std::size_t>(k * stride)];
        a[start + k] = u + v;
        a[start + k + len / 2] = u - v;
      }
    }
  }
  return a / std::sqrt(static_cast<double>(d));
}

inline constexpr Eigen::Index kMatrixDftMax = 1024;

// Unitary DFT matrix, built once per (size, direction) and thread.
inline const Eigen::MatrixXcd& dft_matrix(Eigen::Index d, double sign) {
  thread_local std::map<std::pair<Eigen::Index, bool>, Eigen::MatrixXcd> cache;
  auto& m = cache[{d, sign > 0}];
  if (m.size() == 0) {
    const auto tw = twiddles(d, sign);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    m.resize(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
      for (Eigen::Index j = 0; j < d; ++j) m(k, j) = scale * tw[static_cast<std::size_t>((j * k) % d)];
  }
  return m;
}

inline ComplexVector transform(const ComplexVector& x, double sign) {
  if (x.size() == 0) throw InvalidArgument("dft: empty vector");
  if (is_power_of_two(x.size())) return fft_radix2(x, sign);
  if (x.size() <= kMatrixDftMax) return dft_matrix(x.size(), sign) * x;
  return dft_direct(x, sign);
}

}  // namespace detail

// Forward unitary DFT of a complex vector (no symmetry assumptions).
inline ComplexVector dft_complex(const ComplexVector& x) { return detail::transform(x, -1.0); }

// Inverse unitary DFT of a complex vector.
inline ComplexVector idft_complex(const ComplexVector& s) { return detail::transform(s, +1.0); }

// The spectrum of a real vector, made exactly conjugate-symmetric: rounding
// in the transform would otherwise let mirrored bins differ in the last bits,
// and thresholding could then keep one bin of a pair but not the other.
inline Spectrum dft(const Vector& v) {
  detail::require_finite(v, "dft");
  ComplexVector c = dft_complex(v.cast<Complex>());
  const Eigen::Index d = c.size();
  for (Eigen::Index i = 0; 2 * i <= d; ++i) {
    const Eigen::Index j = detail::wrap(-i, d);
    if (j == i) {
      c[i] = Complex{c[i].real(), 0.0};
    } else {
      const Complex avg = 0.5 * (c[i] + std::conj(c[j]));
      c[i] = avg;
      c[j] = std::conj(avg);
    }
  }
  return Spectrum{c, true};
}

inline bool is_hermitian(const ComplexVector& c, double tol) {
  const Eigen::Index d = c.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(c[i] - std::conj(c[detail::wrap(-i, d)])) > tol) return false;
  }
  return true;
}

// Real inverse DFT. The imaginary residue must stay below
// kImagResidueTol * ||s||_2; it is discarded after the check.
inline Vector idft(const Spectrum& s) {
  const ComplexVector x = idft_complex(s.coeffs);
  const double residue = x.imag().norm();
  const double tol = kImagResidueTol * s.coeffs.norm();
  if (residue > tol) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "idft: imaginary residue %.3e exceeds tolerance %.3e", residue, tol);
    throw SymmetryError(buf);
  }
  return x.real();
}

// v[(-i) mod d]
inline Vector flip(const Vector& v) {
  const Eigen::Index d = v.size();
  Vector out(d);
  for (Eigen::Index i = 0; i < d; ++i) out[i] = v[detail::wrap(-i, d)];
  return out;
}

// Convolution straight from the definition; O(d^2).
inline Vector circular_convolve_direct(const Vector& w, const Vector& x) {
  detail::require_same_size(w.size(), x.size(), "circular_convolve");
  const Eigen::Index d = w.size();
  if (d == 0) throw InvalidArgument("circular_convolve: empty vectors");
  Vector out = Vector::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) acc += w[detail::wrap(-k, d)] * x[(i + k) % d];
    out[i] = acc;
  }
  return out / std::sqrt(static_cast<double>(d));
}

// Uses the FFT when d is a power of two (d >= 64), the direct sum otherwise.
inline Vector circular_convolve(const Vector& w, const Vector& x) {
  detail::require_same_size(w.size(), x.size(), "circular_convolve");
  const Eigen::Index d = w.size();
  if (d >= 64 && detail::is_power_of_two(d)) {
    const ComplexVector prod = dft_complex(w.cast<Complex>()).cwiseProduct(dft_complex(x.cast<Complex>()));
    return idft_complex(prod).real();
  }
  return circular_convolve_direct(w, x);
}

// Kernel k with k * x == x.
inline Vector identity_kernel(Eigen::Index d) {
  Vector k = Vector::Zero(d);
  k[0] = std::sqrt(static_cast<double>(d));
  return k;
}

inline bool is_symmetric_mask(const Vector& mask) {
  const Eigen::Index d = mask.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (mask[i] != mask[detail::wrap(-i, d)]) return false;
  }
  return true;
}

// Per-bin projection onto {u : |u_i| <= radius_i}: radial shrink, phase kept.
inline Spectrum complex_linf_project(const Spectrum& s, const Vector& radius) {
  detail::require_same_size(s.size(), radius.size(), "complex_linf_project");
  if ((radius.array() < 0.0).any()) throw InvalidArgument("complex_linf_project: negative radius");
  if (!is_symmetric_mask(radius)) {
    throw InvalidArgument("complex_linf_project: radius is not conjugate symmetric");
  }
  Spectrum out = s;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double mag = std::abs(s.coeffs[i]);
    if (mag > radius[i]) out.coeffs[i] = s.coeffs[i] * (radius[i] / mag);
  }
  return out;
}

inline Spectrum complex_linf_project(const Spectrum& s, double radius) {
  return complex_linf_project(s, Vector::Constant(s.size(), radius));
}

// Proximal map of lambda * sum_i |u_i| on complex vectors.
inline Spectrum complex_soft_threshold(const Spectrum& s, double lambda) {
  if (lambda < 0.0) throw InvalidArgument("complex_soft_threshold: negative threshold");
  Spectrum out = s;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double mag = std::abs(s.coeffs[i]);
    out.coeffs[i] = mag > lambda ? s.coeffs[i] * ((mag - lambda) / mag) : Complex{0.0, 0.0};
  }
  return out;
}

}  // namespace maxrobust
