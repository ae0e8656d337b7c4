#pragma once

#include <charconv>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "maxrobust/models.hpp"
#include "maxrobust/prox.hpp"

namespace maxrobust {

enum class AttackMethod {
  ClosedForm,  // exact worst case of the (linear) decision function
  Iterative,   // projected steepest ascent; the Fourier-linf attack for FourierLinf
};

struct AttackConfig {
  NormKind norm = NormKind::Linf;
  double eps = 0.0;
  int steps = 20;
  std::optional<Vector> band_mask;  // per-bin eps multiplier, FourierLinf only
  bool preserve_augmented = false;  // leave the last (bias) coordinate untouched
  bool project = true;              // Fourier attack: re-project onto the ball each step
  AttackMethod method = AttackMethod::ClosedForm;

  void validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("attack eps must be finite and >= 0");
    if (steps < 1) throw InvalidArgument("attack steps must be >= 1");
    if (band_mask) {
      if (norm != NormKind::FourierLinf) throw InvalidArgument("band masks apply to fourier-linf attacks only");
      if ((band_mask->array() < 0.0).any()) throw InvalidArgument("band mask entries must be >= 0");
      if (!is_symmetric_mask(*band_mask)) throw InvalidArgument("band mask must satisfy m[i] = m[(d-i) mod d]");
    }
  }
};

// "low:K" keeps frequencies min(i, d-i) < K, "high:K" keeps the rest, "all"
// keeps every bin. The result is symmetric by construction.
inline Vector parse_band_mask(const std::string& spec, Eigen::Index d) {
  if (spec == "all") return Vector::Ones(d);
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw InvalidArgument("band mask '" + spec + "': expected low:K, high:K or all");
  const std::string kind = spec.substr(0, colon);
  long k = 0;
  const char* first = spec.data() + colon + 1;
  const char* last = spec.data() + spec.size();
  const auto [ptr, ec] = std::from_chars(first, last, k);
  if (ec != std::errc{} || ptr != last || k < 0) throw InvalidArgument("band mask '" + spec + "': bad cutoff");
  if (kind != "low" && kind != "high") throw InvalidArgument("band mask '" + spec + "': unknown band " + kind);
  Vector m(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::Index f = std::min(i, d - i);
    const bool low = f < k;
    m[i] = (kind == "low") == low ? 1.0 : 0.0;
  }
  return m;
}

namespace detail {

// Number of leading coordinates an attack may change.
inline Eigen::Index free_dims(Eigen::Index d, bool preserve_augmented) {
  if (preserve_augmented && d < 2) throw InvalidArgument("preserve_augmented needs at least 2 coordinates");
  return preserve_augmented ? d - 1 : d;
}

inline Vector pad(const Vector& v, Eigen::Index d) {
  Vector out = Vector::Zero(d);
  out.head(v.size()) = v;
  return out;
}

inline Vector sign_of(const Vector& v) {
  return v.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
}

// Euclidean projection onto {delta : ||delta||_kind <= eps}, optionally with a
// per-bin radius for FourierLinf.
inline Vector project_ball(const Vector& delta, NormKind kind, double eps, const std::optional<Vector>& mask) {
  switch (kind) {
    case NormKind::L1: return project_l1_ball(delta, eps);
    case NormKind::L2: {
      const double n = delta.norm();
      return n > eps ? Vector(delta * (eps / n)) : delta;
    }
    case NormKind::Linf: return delta.cwiseMax(-eps).cwiseMin(eps);
    case NormKind::FourierLinf: {
      const Vector radius = mask ? Vector(eps * *mask) : Vector::Constant(delta.size(), eps);
      return idft(complex_linf_project(dft(delta), radius));
    }
    case NormKind::FourierL1: {
      // Unitary DFT: project the magnitudes onto the l1 ball, keep phases.
      Spectrum s = dft(delta);
      const Vector mag = s.coeffs.cwiseAbs();
      if (mag.sum() <= eps) return delta;
      const Vector shrunk = project_l1_ball(mag, eps);
      for (Eigen::Index i = 0; i < mag.size(); ++i) {
        s.coeffs[i] = mag[i] > 0.0 ? s.coeffs[i] * (shrunk[i] / mag[i]) : Complex{0.0, 0.0};
      }
      return idft(s);
    }
  }
  return delta;
}

}  // namespace detail

// Loss-ascent direction at x: -y * d phi / dx. The positive factor |zeta'|
// is dropped; every attack step is invariant to it, and it underflows on
// well-separated points.
inline Vector loss_ascent_direction(const Model& model, const Vector& x, double y) {
  return -y * input_gradient(model, x);
}

// Fourier-linf attack: each step adds the perturbation whose spectrum has
// magnitude eps * mask_i on every bin, phase-aligned with the loss gradient.
// Bins with |g_i| below 1e-12 ||g||_2 get nothing.
inline Vector fourier_linf_attack(const std::function<Vector(const Vector&)>& grad_oracle, const Vector& x,
                                  double eps, int steps, const std::optional<Vector>& band_mask = std::nullopt,
                                  bool project = true, bool preserve_augmented = false) {
  if (steps < 1) throw InvalidArgument("fourier_linf_attack: steps must be >= 1");
  if (eps < 0.0) throw InvalidArgument("fourier_linf_attack: eps must be >= 0");
  const Eigen::Index d = x.size();
  const Eigen::Index k = detail::free_dims(d, preserve_augmented);
  if (band_mask) {
    detail::require_same_size(band_mask->size(), k, "band mask");
    if (!is_symmetric_mask(*band_mask)) throw InvalidArgument("band mask must be symmetric");
  }
  Vector delta = Vector::Zero(k);
  for (int step = 0; step < steps; ++step) {
    const Vector g = grad_oracle(x + detail::pad(delta, d));
    detail::require_same_size(g.size(), d, "gradient oracle");
    const Spectrum gh = dft(Vector(g.head(k)));
    const double tau0 = 1e-12 * gh.coeffs.norm();
    Spectrum dh{ComplexVector::Zero(k), true};
    for (Eigen::Index i = 0; i < k; ++i) {
      const double mag = std::abs(gh.coeffs[i]);
      if (mag == 0.0 || mag < tau0) continue;
      const double r = band_mask ? eps * (*band_mask)[i] : eps;
      dh.coeffs[i] = gh.coeffs[i] * (r / mag);
    }
    delta += idft(dh);
    if (project) delta = detail::project_ball(delta, NormKind::FourierLinf, eps, band_mask);
  }
  return x + detail::pad(delta, d);
}

// Exact worst-case perturbation of a linear decision function:
// y <w, x + delta> = y <w, x> - eps ||w||_{dual(norm)}.
inline Vector linear_worst_case(const Model& model, const Vector& x, double y, NormKind norm_kind, double eps,
                                bool preserve_augmented = false,
                                const std::optional<Vector>& band_mask = std::nullopt) {
  const Eigen::Index d = x.size();
  const Vector w = effective_weight(model);
  detail::require_same_size(w.size(), d, "linear_worst_case");
  const Eigen::Index k = detail::free_dims(d, preserve_augmented);
  const Vector wk = w.head(k);
  if (wk.isZero(0.0)) {
    spdlog::warn("linear_worst_case: zero weight, returning zero perturbation");
    return Vector::Zero(d);
  }
  if (norm_kind == NormKind::FourierLinf) {
    const auto oracle = [&](const Vector&) { return Vector(-y * w); };
    return fourier_linf_attack(oracle, x, eps, 1, band_mask, true, preserve_augmented) - x;
  }
  if (band_mask) throw InvalidArgument("band masks apply to fourier-linf attacks only");
  return detail::pad(-y * eps * dual_witness(wk, norm_kind), d);
}

// Projected steepest ascent on the loss with step 2.5 eps / steps; every
// iterate stays inside the eps-ball. FourierLinf runs the Fourier attack.
inline Vector pgd_attack(const Model& model, const Vector& x, double y, const AttackConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = x.size();
  detail::require_same_size(model_dim(model), d, "pgd_attack");
  if (cfg.eps == 0.0) return x;
  const auto oracle = [&](const Vector& xa) { return loss_ascent_direction(model, xa, y); };
  if (cfg.norm == NormKind::FourierLinf) {
    return fourier_linf_attack(oracle, x, cfg.eps, cfg.steps, cfg.band_mask, cfg.project, cfg.preserve_augmented);
  }
  const Eigen::Index k = detail::free_dims(d, cfg.preserve_augmented);
  const double alpha = 2.5 * cfg.eps / cfg.steps;
  Vector delta = Vector::Zero(k);
  for (int step = 0; step < cfg.steps; ++step) {
    const Vector g = oracle(x + detail::pad(delta, d));
    delta += alpha * dual_witness(Vector(g.head(k)), cfg.norm);
    delta = detail::project_ball(delta, cfg.norm, cfg.eps, std::nullopt);
  }
  return x + detail::pad(delta, d);
}

inline Vector attack_point(const Model& model, const Vector& x, double y, const AttackConfig& cfg) {
  if (cfg.method == AttackMethod::Iterative) return pgd_attack(model, x, y, cfg);
  cfg.validate();
  return x + linear_worst_case(model, x, y, cfg.norm, cfg.eps, cfg.preserve_augmented, cfg.band_mask);
}

// Fraction of points with y * phi(x + delta) <= 0 under the configured attack.
inline double robust_error(const Model& model, const Dataset& ds, const AttackConfig& cfg) {
  detail::require_same_size(model_dim(model), ds.dim(), "robust_error");
  if (ds.n() == 0) return 0.0;
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Vector x = ds.X.row(i).transpose();
    const Vector xa = cfg.eps == 0.0 ? x : attack_point(model, x, ds.y[i], cfg);
    if (ds.y[i] * decision(model, xa) <= 0.0) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ds.n());
}

// Largest eps on the grid {step, 2 step, ...} up to eps_max with zero robust
// error, then refined by four bisections to resolution step / 16. Returns 0
// when eps = step already fails.
inline double max_robust_eps(const Model& model, const Dataset& ds, AttackConfig cfg, double eps_max, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("max_robust_eps: step must be positive");
  if (!(eps_max >= step)) throw InvalidArgument("max_robust_eps: eps_max must be >= step");
  auto robust = [&](double eps) {
    cfg.eps = eps;
    return robust_error(model, ds, cfg) == 0.0;
  };
  double lo = 0.0;
  double hi = eps_max;
  bool failed = false;
  for (long k = 1;; ++k) {
    const double eps = static_cast<double>(k) * step;
    if (eps > eps_max * (1.0 + 1e-12)) break;
    if (!robust(eps)) {
      hi = eps;
      failed = true;
      break;
    }
    lo = eps;
  }
  if (lo == 0.0) return 0.0;
  if (!failed) return lo;
  for (int b = 0; b < 4; ++b) {
    const double mid = 0.5 * (lo + hi);
    (robust(mid) ? lo : hi) = mid;
  }
  return lo;
}

// Default grid: step 2% of the model's margin, eps_max twice the margin.
inline double max_robust_eps(const Model& model, const Dataset& ds, const AttackConfig& cfg) {
  const double m = margin(model, ds, cfg.norm, cfg.preserve_augmented);
  if (!(m > 0.0)) return 0.0;
  return max_robust_eps(model, ds, cfg, 2.0 * m, 0.02 * m);
}

struct AttackReportRow {
  Eigen::Index index = 0;
  double clean = 0.0;
  double adversarial = 0.0;
  bool flipped = false;
  std::array<double, 5> perturbation_norm{};  // by kAllNorms
};

inline std::vector<AttackReportRow> attack_report(const Model& model, const Dataset& ds, const AttackConfig& cfg) {
  detail::require_same_size(model_dim(model), ds.dim(), "attack_report");
  std::vector<AttackReportRow> rows;
  rows.reserve(static_cast<std::size_t>(ds.n()));
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Vector x = ds.X.row(i).transpose();
    const Vector xa = cfg.eps == 0.0 ? x : attack_point(model, x, ds.y[i], cfg);
    AttackReportRow r;
    r.index = i;
    r.clean = decision(model, x);
    r.adversarial = decision(model, xa);
    r.flipped = (r.clean > 0.0) != (r.adversarial > 0.0);
    const Vector delta = xa - x;
    for (std::size_t j = 0; j < kAllNorms.size(); ++j) r.perturbation_norm[j] = norm(delta, kAllNorms[j]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace maxrobust
