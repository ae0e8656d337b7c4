#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <spdlog/spdlog.h>

#include "maxrobust/models.hpp"
#include "maxrobust/prox.hpp"

namespace maxrobust {

struct RegSpec {
  NormKind kind = NormKind::L1;
  double lambda = 0.0;
};

struct AdvSpec {
  double eps = 0.0;
  NormKind attack = NormKind::Linf;
};

struct TrainConfig {
  long steps = 10000;
  double step_size = 0.1;
  std::optional<double> line_search_max;  // Armijo backtracking from this step when set
  Loss loss = Loss::Exponential;
  NormKind norm_kind = NormKind::L2;  // steepest-descent geometry
  std::optional<RegSpec> reg;
  std::optional<AdvSpec> adv;
  long record_every = 100;
  std::uint64_t seed = 0;
  double init_scale = 0.1;  // conv layers only
  int layers = 2;           // conv layers only
  bool accelerate = true;   // FISTA momentum with adaptive restart
  bool backtracking = true; // proximal runs: estimate the Lipschitz constant
  bool normalized = true;   // conv runs: unit-length joint steps

  void validate() const {
    if (steps < 0) throw InvalidArgument("steps must be >= 0");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InvalidArgument("step_size must be positive");
    if (line_search_max && !(*line_search_max > 0.0)) throw InvalidArgument("line search max step must be positive");
    if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
    if (reg && adv) throw InvalidArgument("regularized and adversarial modes are exclusive");
    if (reg && reg->lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
    if (adv && adv->eps < 0.0) throw InvalidArgument("adversarial eps must be >= 0");
    if (!(init_scale > 0.0)) throw InvalidArgument("init_scale must be positive");
    if (layers < 2) throw InvalidArgument("conv nets need at least 2 layers");
  }
};

// Weight norms recorded in traces, in column order.
inline constexpr std::array<NormKind, 4> kWeightNorms = {NormKind::L1, NormKind::L2, NormKind::Linf,
                                                         NormKind::FourierL1};

struct TraceRow {
  long step = 0;
  double log_risk = 0.0;
  std::array<double, 4> margin{};       // by kAttackNorms; NaN while the weight is zero
  std::array<double, 4> weight_norm{};  // by kWeightNorms
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  double wall_clock = 0.0;
  long steps_run = 0;
  Model model = LinearModel{};

  // Margins recorded for `attack`, in step order.
  std::vector<double> margins(NormKind attack) const {
    std::size_t j = 0;
    while (j < kAttackNorms.size() && kAttackNorms[j] != attack) ++j;
    if (j == kAttackNorms.size()) throw InvalidArgument("no trace column for " + to_string(attack));
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.margin[j]);
    return out;
  }
};

// Relative spread (max - min) / max of the recorded margins over the final
// `fraction` of the trace.
inline double tail_margin_drift(const TrainTrace& trace, NormKind attack, double fraction = 0.1) {
  const auto m = trace.margins(attack);
  if (m.empty()) return 0.0;
  const double cutoff = static_cast<double>(trace.steps_run) * (1.0 - fraction);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (static_cast<double>(trace.rows[i].step) < cutoff) continue;
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  if (!std::isfinite(hi) || hi <= 0.0) return std::numeric_limits<double>::infinity();
  return (hi - lo) / hi;
}

inline constexpr double kMarginDriftTol = 0.02;

inline TraceRow make_trace_row(long step, const Vector& w, const Dataset& ds, Loss loss) {
  TraceRow row;
  row.step = step;
  row.log_risk = log_risk_from_margins(loss, functional_margins(ds, w));
  const bool zero = w.isZero(0.0);
  for (std::size_t j = 0; j < kAttackNorms.size(); ++j) {
    row.margin[j] = zero ? std::numeric_limits<double>::quiet_NaN() : margin_of_weight(w, ds, kAttackNorms[j]);
  }
  for (std::size_t j = 0; j < kWeightNorms.size(); ++j) row.weight_norm[j] = norm(w, kWeightNorms[j]);
  return row;
}

// ---------------------------------------------------------------------------
// Gradients and steepest directions

struct StabilizedGradient {
  Vector direction;  // g / ||g||_2, zero if g = 0
  double log_scale;  // log ||g||_2
};

// g = sum_i zeta'(y_i w.x_i) y_i x_i, with the per-point weights |zeta'| formed
// relative to their maximum so the direction survives when every weight
// underflows.
inline StabilizedGradient stabilized_gradient(const Dataset& ds, const Vector& w, Loss loss) {
  detail::require_finite(w, "stabilized_gradient");
  const Vector m = functional_margins(ds, w);
  const Vector a = m.unaryExpr([loss](double z) { return log_loss_slope(loss, z); });
  const double top = a.maxCoeff();
  const Vector p = (a.array() - top).exp().matrix();
  const Vector v = -(ds.X.transpose() * p.cwiseProduct(ds.y));
  const double nv = v.norm();
  if (nv == 0.0) return {Vector::Zero(w.size()), -std::numeric_limits<double>::infinity()};
  return {v / nv, top + std::log(nv)};
}

// argmin_v <g, v> + 1/2 ||v||^2 for the named norm, in closed form.
inline Vector steepest_direction(const Vector& g, NormKind kind) {
  switch (kind) {
    case NormKind::L2: return -g;
    case NormKind::Linf: return -g.lpNorm<1>() * g.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    case NormKind::L1: {
      Vector v = Vector::Zero(g.size());
      if (g.size() == 0) return v;
      Eigen::Index i = 0;
      g.cwiseAbs().maxCoeff(&i);  // first maximal index
      v[i] = -g[i];
      return v;
    }
    default: break;
  }
  throw InvalidArgument("steepest descent: unsupported norm " + to_string(kind));
}

inline Vector steepest_step(const Vector& w, const Vector& g, NormKind kind, double step) {
  detail::require_same_size(w.size(), g.size(), "steepest_step");
  return w + step * steepest_direction(g, kind);
}

// ---------------------------------------------------------------------------
// Line search

struct LineSearchResult {
  double step;
  bool floored;
};

inline constexpr double kArmijoC = 1e-4;
inline constexpr double kMinStep = 1e-12;

// Halve from max_step until f(step) <= f0 + c * step * slope. `slope` is the
// directional derivative at step 0.
inline LineSearchResult backtracking_line_search(const std::function<double(double)>& f, double f0, double slope,
                                                 double max_step) {
  if (!(max_step > 0.0)) throw InvalidArgument("line search: max_step must be positive");
  if (!(slope < 0.0)) {
    spdlog::warn("line search: not a descent direction (slope {}), using minimum step", slope);
    return {kMinStep, true};
  }
  for (double step = max_step; step >= kMinStep; step *= 0.5) {
    const double fs = f(step);
    if (std::isfinite(fs) && fs <= f0 + kArmijoC * step * slope) return {step, false};
  }
  spdlog::warn("line search: Armijo condition never met, using minimum step");
  return {kMinStep, true};
}

// Armijo search on the log empirical risk along `direction`.
inline LineSearchResult backtracking_line_search(const Dataset& ds, const Vector& w, const Vector& direction,
                                                 double max_step, Loss loss = Loss::Exponential) {
  detail::require_same_size(w.size(), direction.size(), "line search");
  const double f0 = log_risk_from_margins(loss, functional_margins(ds, w));
  const StabilizedGradient sg = stabilized_gradient(ds, w, loss);
  const double slope = sg.direction.size() && std::isfinite(sg.log_scale)
                           ? std::exp(sg.log_scale - f0) * sg.direction.dot(direction)
                           : 0.0;
  const Vector dm = functional_margins(ds, direction);
  const Vector m0 = functional_margins(ds, w);
  auto f = [&](double step) { return log_risk_from_margins(loss, m0 + step * dm); };
  return backtracking_line_search(f, f0, slope, max_step);
}

// ---------------------------------------------------------------------------

namespace detail {

inline const double kLogDivergence = std::log(100.0);

class DivergenceGuard {
 public:
  void check(double log_obj, long step) {
    if (std::isnan(log_obj) || log_obj == std::numeric_limits<double>::infinity()) throw DivergenceError("objective is not finite at step " + std::to_string(step));
    if (log_obj > best_ + kLogDivergence) {
      throw DivergenceError("objective grew 100x over its best (log " + std::to_string(best_) + " -> " +
                            std::to_string(log_obj) + ") at step " + std::to_string(step) +
                            "; reduce the step size");
    }
    best_ = std::min(best_, log_obj);
  }

 private:
  double best_ = std::numeric_limits<double>::infinity();
};

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Gradient of the log objective at w, as a unit direction plus log scale, and
// the log objective itself.
struct ObjectiveGradient {
  StabilizedGradient grad;
  double log_obj;
};

// Subgradient of the weight norm dual to `attack`.
inline Vector dual_norm_subgradient(const Vector& w, NormKind attack) {
  const Eigen::Index d = w.size();
  switch (dual(attack)) {
    case NormKind::L1: return w.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    case NormKind::L2: {
      const double n = w.norm();
      return n > 0.0 ? Vector(w / n) : Vector::Zero(d);
    }
    case NormKind::Linf: {
      Vector s = Vector::Zero(d);
      const double top = w.lpNorm<Eigen::Infinity>();
      if (top == 0.0) return s;
      int count = 0;
      for (Eigen::Index i = 0; i < d; ++i) count += std::abs(w[i]) == top;
      for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(w[i]) == top) s[i] = (w[i] > 0 ? 1.0 : -1.0) / count;
      }
      return s;
    }
    case NormKind::FourierL1: return dual_witness(w, NormKind::FourierLinf);
    case NormKind::FourierLinf: break;
  }
  throw InvalidArgument("no subgradient for " + to_string(dual(attack)));
}

// Normalized steepest descent on a linear model; `objective` supplies the
// gradient of the log objective at each iterate.
template <class Objective>
TrainTrace steepest_loop(const Dataset& ds, const TrainConfig& cfg, NormKind geometry, Objective&& objective) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainTrace trace;
  Vector w = Vector::Zero(ds.dim());
  DivergenceGuard guard;
  for (long t = 0; t < cfg.steps; ++t) {
    if (t % cfg.record_every == 0) trace.rows.push_back(make_trace_row(t, w, ds, cfg.loss));
    const ObjectiveGradient og = objective(w);
    guard.check(og.log_obj, t);
    if (!std::isfinite(og.grad.log_scale)) break;
    const Vector& u = og.grad.direction;
    const Vector delta = steepest_direction(u / norm(u, dual(geometry)), geometry);
    double step = cfg.step_size;
    if (cfg.line_search_max) step = backtracking_line_search(ds, w, delta, *cfg.line_search_max, cfg.loss).step;
    w += step * delta;
    trace.steps_run = t + 1;
  }
  trace.rows.push_back(make_trace_row(trace.steps_run, w, ds, cfg.loss));
  trace.model = LinearModel{w};
  trace.wall_clock = elapsed(t0);
  return trace;
}

inline ObjectiveGradient plain_objective(const Dataset& ds, const Vector& w, Loss loss) {
  return {stabilized_gradient(ds, w, loss), log_risk_from_margins(loss, functional_margins(ds, w))};
}

}  // namespace detail

// Steepest descent w.r.t. cfg.norm_kind (L2: GD, Linf: sign GD, L1: coordinate
// descent) on the empirical risk from w_0 = 0, with unit-dual-norm gradients.
inline TrainTrace train_steepest(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.reg || cfg.adv) throw InvalidArgument("train_steepest: config is not in plain mode");
  return detail::steepest_loop(ds, cfg, cfg.norm_kind,
                               [&](const Vector& w) { return detail::plain_objective(ds, w, cfg.loss); });
}

// GD on sum_i zeta(y_i w.x_i - eps ||w||_*), the closed-form inner maximum for
// a linear model. eps = 0 follows train_steepest with L2 exactly.
inline TrainTrace adversarial_training_linear(const Dataset& ds, double eps, NormKind attack, TrainConfig cfg) {
  if (eps < 0.0) throw InvalidArgument("adversarial eps must be >= 0");
  cfg.adv.reset();
  cfg.validate();
  if (cfg.reg) throw InvalidArgument("adversarial_training_linear: regularization is not allowed");
  const Loss loss = cfg.loss;
  auto objective = [&](const Vector& w) -> detail::ObjectiveGradient {
    if (eps == 0.0) return detail::plain_objective(ds, w, loss);
    const Vector m = functional_margins(ds, w).array() - eps * norm(w, dual(attack));
    const Vector a = m.unaryExpr([loss](double z) { return log_loss_slope(loss, z); });
    const double top = a.maxCoeff();
    const Vector p = (a.array() - top).exp().matrix();
    const Vector v = -(ds.X.transpose() * p.cwiseProduct(ds.y)) + eps * p.sum() * detail::dual_norm_subgradient(w, attack);
    const double nv = v.norm();
    StabilizedGradient sg{nv > 0 ? Vector(v / nv) : Vector::Zero(w.size()),
                          nv > 0 ? top + std::log(nv) : -std::numeric_limits<double>::infinity()};
    return {sg, log_risk_from_margins(loss, m)};
  };
  return detail::steepest_loop(ds, cfg, NormKind::L2, objective);
}

// ---------------------------------------------------------------------------
// Proximal gradient

struct ProximalState {
  Vector w;
  double lipschitz = 1.0;
};

namespace detail {

inline Vector risk_gradient(const Dataset& ds, const Vector& m, Loss loss) {
  Vector coef(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) coef[i] = loss_derivative(loss, m[i]) * ds.y[i];
  return ds.X.transpose() * coef;
}

}  // namespace detail

// Proximal gradient (FISTA with adaptive restart, backtracking on the
// Lipschitz estimate) on sum_i zeta(y_i w.x_i) + lambda ||w||_reg, starting
// from `state`, which is updated in place for warm starts.
inline TrainTrace train_proximal(const Dataset& ds, const TrainConfig& cfg, ProximalState& state) {
  cfg.validate();
  if (!cfg.reg) throw InvalidArgument("train_proximal: no regularizer configured");
  const NormKind kind = cfg.reg->kind;
  const double lambda = cfg.reg->lambda;
  if (kind == NormKind::FourierLinf) throw InvalidArgument("train_proximal: unsupported regularizer fourier-linf");
  if (state.w.size() == 0) state.w = Vector::Zero(ds.dim());
  detail::require_same_size(state.w.size(), ds.dim(), "train_proximal");

  const auto t0 = std::chrono::steady_clock::now();
  const Loss loss = cfg.loss;
  auto objective = [&](const Vector& w) {
    return risk_from_margins(loss, functional_margins(ds, w)) + (lambda > 0.0 ? lambda * norm(w, kind) : 0.0);
  };

  TrainTrace trace;
  detail::DivergenceGuard guard;
  Vector w = state.w;
  Vector z = w;
  double tk = 1.0;
  double L = state.lipschitz;
  double obj_w = objective(w);
  for (long t = 0; t < cfg.steps; ++t) {
    if (t % cfg.record_every == 0) trace.rows.push_back(make_trace_row(t, w, ds, loss));
    const Vector mz = functional_margins(ds, z);
    const double fz = risk_from_margins(loss, mz);
    const Vector g = detail::risk_gradient(ds, mz, loss);
    Vector next;
    if (cfg.backtracking) {
      L *= 0.5;
      for (;;) {
        next = prox(kind, lambda / L, z - g / L);
        const Vector dl = next - z;
        const double fn = risk_from_margins(loss, functional_margins(ds, next));
        if (fn <= fz + g.dot(dl) + 0.5 * L * dl.squaredNorm() + 1e-15) break;
        L *= 2.0;
        if (!std::isfinite(L)) throw DivergenceError("proximal backtracking: Lipschitz estimate overflowed");
      }
    } else {
      next = prox(kind, cfg.step_size * lambda, z - cfg.step_size * g);
    }
    const double obj_next = objective(next);
    if (cfg.accelerate) {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      if (obj_next > obj_w) {
        z = next;
        tk = 1.0;
      } else {
        z = next + ((tk - 1.0) / tn) * (next - w);
        tk = tn;
      }
    } else {
      z = next;
    }
    w = next;
    obj_w = obj_next;
    guard.check(std::log(obj_w), t);
    trace.steps_run = t + 1;
  }
  trace.rows.push_back(make_trace_row(trace.steps_run, w, ds, loss));
  state.w = w;
  state.lipschitz = L;
  trace.model = LinearModel{w};
  trace.wall_clock = detail::elapsed(t0);
  return trace;
}

inline TrainTrace train_proximal(const Dataset& ds, const TrainConfig& cfg) {
  ProximalState state;
  return train_proximal(ds, cfg, state);
}

// Regularization path: each lambda warm-starts from the previous solution.
inline std::vector<TrainTrace> proximal_path(const Dataset& ds, NormKind kind, const std::vector<double>& lambdas,
                                             TrainConfig cfg) {
  ProximalState state;
  std::vector<TrainTrace> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    cfg.reg = RegSpec{kind, lambda};
    out.push_back(train_proximal(ds, cfg, state));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear convolutional networks

inline ConvLinearNet init_conv_net(Eigen::Index d, int layers, double scale, std::uint64_t seed) {
  GaussianSampler rng(seed);
  std::vector<Vector> ws;
  for (int l = 0; l < layers; ++l) {
    ws.push_back(scale * rng.normal_vector(d));
  }
  return ConvLinearNet(std::move(ws));
}

// Gradient descent on every layer jointly from a scaled normal init (seeded by
// cfg.seed). With cfg.normalized the concatenated gradient has unit length.
inline TrainTrace train_conv_gd(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.reg || cfg.adv) throw InvalidArgument("train_conv_gd: config is not in plain mode");
  const auto t0 = std::chrono::steady_clock::now();
  ConvLinearNet net = init_conv_net(ds.dim(), cfg.layers, cfg.init_scale, cfg.seed);
  TrainTrace trace;
  detail::DivergenceGuard guard;
  for (long t = 0; t < cfg.steps; ++t) {
    const Vector e = effective_weight(net);
    if (t % cfg.record_every == 0) trace.rows.push_back(make_trace_row(t, e, ds, cfg.loss));
    const Vector m = functional_margins(ds, e);
    const double log_obj = log_risk_from_margins(cfg.loss, m);
    guard.check(log_obj, t);
    std::vector<Vector> grads;
    if (cfg.normalized) {
      const StabilizedGradient sg = stabilized_gradient(ds, e, cfg.loss);
      if (!std::isfinite(sg.log_scale)) break;
      grads = conv_gradients_from_effective(net, sg.direction);
      double sq = 0.0;
      for (const auto& g : grads) sq += g.squaredNorm();
      if (sq == 0.0) break;
      for (auto& g : grads) g /= std::sqrt(sq);
    } else {
      grads = conv_gradients(net, ds, cfg.loss);
    }
    auto& layers = net.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l] -= cfg.step_size * grads[l];
    trace.steps_run = t + 1;
  }
  trace.rows.push_back(make_trace_row(trace.steps_run, effective_weight(net), ds, cfg.loss));
  trace.model = std::move(net);
  trace.wall_clock = detail::elapsed(t0);
  return trace;
}

}  // namespace maxrobust
