#pragma once

#include <string>
#include <variant>
#include <vector>

#include "maxrobust/data.hpp"
#include "maxrobust/loss.hpp"
#include "maxrobust/norms.hpp"

namespace maxrobust {

// Halfspace classifier sign(<w, x>); a bias lives in the augmented coordinate.
struct LinearModel {
  Vector w;

  Eigen::Index dim() const { return w.size(); }
};

// phi(x) = <w_L, w_{L-1} * ( ... (w_1 * x))> with full-length circular kernels.
class ConvLinearNet {
 public:
  explicit ConvLinearNet(std::vector<Vector> layers) : layers_(std::move(layers)) {
    if (layers_.size() < 2) throw InvalidArgument("ConvLinearNet: need at least 2 layers");
    for (const auto& l : layers_) {
      detail::require_same_size(l.size(), layers_.front().size(), "ConvLinearNet layers");
    }
    if (layers_.front().size() == 0) throw InvalidArgument("ConvLinearNet: empty kernels");
  }

  const std::vector<Vector>& layers() const { return layers_; }
  std::vector<Vector>& mutable_layers() { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  Eigen::Index dim() const { return layers_.front().size(); }

 private:
  std::vector<Vector> layers_;
};

using Model = std::variant<LinearModel, ConvLinearNet>;

inline Eigen::Index model_dim(const Model& m) {
  return std::visit([](const auto& x) { return x.dim(); }, m);
}

inline std::string model_kind(const Model& m) {
  return std::holds_alternative<LinearModel>(m) ? "linear" : "conv";
}

namespace detail {

// w_{L-1} * ... * w_1 (the convolutional part), identity kernel when skipping
// every layer. `skip` may be -1.
inline Vector conv_chain(const ConvLinearNet& net, std::ptrdiff_t skip = -1) {
  const auto& layers = net.layers();
  Vector k = identity_kernel(net.dim());
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (static_cast<std::ptrdiff_t>(l) == skip) continue;
    k = circular_convolve(layers[l], k);
  }
  return k;
}

}  // namespace detail

inline double decision(const LinearModel& m, const Vector& x) {
  detail::require_same_size(m.w.size(), x.size(), "decision");
  return m.w.dot(x);
}

// Evaluated layer by layer, not through the effective weight.
inline double decision(const ConvLinearNet& net, const Vector& x) {
  detail::require_same_size(net.dim(), x.size(), "decision");
  Vector v = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) v = circular_convolve(layers[l], v);
  return layers.back().dot(v);
}

inline double decision(const Model& m, const Vector& x) {
  return std::visit([&x](const auto& model) { return decision(model, x); }, m);
}

inline Vector effective_weight(const LinearModel& m) { return m.w; }

// The vector e with decision(net, x) == <e, x> for all x:
//   e = flip(w_{L-1} * ... * w_1) * w_L,
// so dft(e) = dft(w_L) .* conj(dft(w_1) .* ... .* dft(w_{L-1})).
inline Vector effective_weight(const ConvLinearNet& net) {
  return circular_convolve(flip(detail::conv_chain(net)), net.layers().back());
}

inline Vector effective_weight(const Model& m) {
  return std::visit([](const auto& model) { return effective_weight(model); }, m);
}

// d decision / d x.
inline Vector input_gradient(const LinearModel& m, const Vector& x) {
  detail::require_same_size(m.w.size(), x.size(), "input_gradient");
  return m.w;
}

// Back-propagated through the transposed convolutions.
inline Vector input_gradient(const ConvLinearNet& net, const Vector& x) {
  detail::require_same_size(net.dim(), x.size(), "input_gradient");
  const auto& layers = net.layers();
  Vector v = layers.back();
  for (std::size_t l = layers.size() - 1; l-- > 0;) v = circular_convolve(flip(layers[l]), v);
  return v;
}

inline Vector input_gradient(const Model& m, const Vector& x) {
  return std::visit([&x](const auto& model) { return input_gradient(model, x); }, m);
}

// y_i <w, x_i> for every point.
inline Vector functional_margins(const Dataset& ds, const Vector& w) {
  detail::require_same_size(w.size(), ds.dim(), "functional_margins");
  return ds.y.cwiseProduct(ds.X * w);
}

// min_i y_i <w, x_i> / ||w||_{dual(attack)}. With `exclude_bias` on an
// augmented dataset the norm skips the constant column, matching attacks that
// leave that coordinate untouched.
inline double margin_of_weight(const Vector& w, const Dataset& ds, NormKind attack, bool exclude_bias = false) {
  detail::require_same_size(w.size(), ds.dim(), "margin");
  const bool drop = exclude_bias && ds.augmented;
  const Vector scored = drop ? Vector(w.head(w.size() - 1)) : w;
  if (scored.isZero(0.0)) throw UndefinedMarginError("margin: zero weight vector");
  const double denom = norm(scored, dual(attack));
  return functional_margins(ds, w).minCoeff() / denom;
}

inline double margin(const Model& m, const Dataset& ds, NormKind attack, bool exclude_bias = false) {
  return margin_of_weight(effective_weight(m), ds, attack, exclude_bias);
}

// Gradients w.r.t. each layer of a function whose gradient w.r.t. the
// effective weight is `g_eff` (the map is linear in g_eff).
inline std::vector<Vector> conv_gradients_from_effective(const ConvLinearNet& net, const Vector& g_eff) {
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  std::vector<Vector> grads(L);
  const Vector g_flip = flip(g_eff);
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const Vector rest = detail::conv_chain(net, static_cast<std::ptrdiff_t>(l));
    const Vector q = circular_convolve(flip(rest), layers.back());
    grads[l] = circular_convolve(q, g_flip);
  }
  grads[L - 1] = circular_convolve(detail::conv_chain(net), g_eff);
  return grads;
}

// Exact gradients of sum_i zeta(y_i phi(x_i)) w.r.t. every layer.
inline std::vector<Vector> conv_gradients(const ConvLinearNet& net, const Dataset& ds, Loss loss) {
  detail::require_same_size(net.dim(), ds.dim(), "conv_gradients");
  const Vector m = functional_margins(ds, effective_weight(net));
  Vector coef(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) coef[i] = loss_derivative(loss, m[i]) * ds.y[i];
  const Vector g_eff = ds.X.transpose() * coef;
  return conv_gradients_from_effective(net, g_eff);
}

inline double empirical_risk(const Model& m, const Dataset& ds, Loss loss) {
  return risk_from_margins(loss, functional_margins(ds, effective_weight(m)));
}

}  // namespace maxrobust
