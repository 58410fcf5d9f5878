#include "gfi/objectives.hpp"

#include <cmath>

#include "gfi/errors.hpp"
#include "gfi/mask.hpp"

namespace gfi {

double LossBreakdown::weighted_sum() const {
  double s = 0.0;
  for (const auto& [name, value] : components) s += weights.at(name) * value;
  return s;
}

double LossBreakdown::component(const std::string& name) const {
  auto it = components.find(name);
  if (it == components.end()) throw InputError("loss has no component '" + name + "'");
  return it->second;
}

double l1_norm(const MaskWeights& weights) {
  double s = 0.0;
  for (double v : weights.values) s += std::abs(v);
  return s;
}

namespace {

void add_l1_gradient(const MaskWeights& weights, double scale, std::vector<double>& grad) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    grad[i] += scale * static_cast<double>((w > 0.0) - (w < 0.0));
  }
}

// d/dm of a loss given its gradient with respect to a blend whose mask
// coefficient on the image is `sign` (+1 foreground, -1 background).
void accumulate_mask_grad(const Tensor& grad_blend, const Tensor& x, const Tensor& p, double sign,
                          Tensor& grad_mask) {
  const std::size_t plane = x.shape().plane();
  for (int c = 0; c < x.channels(); ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * plane;
    for (std::size_t k = 0; k < plane; ++k) {
      grad_mask[k] += sign * grad_blend[base + k] * (x[base + k] - p[base + k]);
    }
  }
}

}  // namespace

InversionObjective::InversionObjective(const ModelBackend& model, const ImageTensor& x,
                                       const Tensor& base_activations, InversionTarget target,
                                       const BaselineImage& p, double gamma, bool mean_squared)
    : model_(model),
      x_(x),
      base_(base_activations),
      target_(std::move(target)),
      p_(p),
      gamma_(gamma),
      mean_squared_(mean_squared) {
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  require_same_shape(x.shape(), p.normalized.shape(), "inversion objective baseline");
  const Network& net = model.network();
  require_same_shape(target_.features.shape(),
                     net.nodes()[static_cast<std::size_t>(net.index_of(target_.layer))].out_shape,
                     "inversion target");
}

LossBreakdown InversionObjective::evaluate_mask(const Tensor& mask, const MaskWeights& weights,
                                                Tensor* grad_mask) const {
  const Tensor phi = compose_foreground(x_.normalized, mask, p_.normalized);
  const double scale = mean_squared_ ? 1.0 / static_cast<double>(target_.count()) : 1.0;
  double error = 0.0;
  auto seed_for = [&](const Tensor& features) {
    require_same_shape(features.shape(), target_.features.shape(), "inversion target");
    Tensor seed(features.shape());
    for (std::size_t k = 0; k < features.size(); ++k) {
      const double d = features[k] - target_.features[k];
      error += d * d;
      seed[k] = 2.0 * d * scale;
    }
    error *= scale;
    return seed;
  };
  if (grad_mask) {
    const Tensor grad_phi = model_.pullback(phi, target_.layer, seed_for);
    *grad_mask = Tensor(mask.shape());
    accumulate_mask_grad(grad_phi, x_.normalized, p_.normalized, 1.0, *grad_mask);
  } else {
    const auto snap = model_.forward_with_taps(phi, {target_.layer});
    seed_for(snap.at(target_.layer));
  }

  LossBreakdown loss;
  loss.components["inversion_error"] = error;
  loss.components["l1_penalty"] = l1_norm(weights);
  loss.weights["inversion_error"] = 1.0;
  loss.weights["l1_penalty"] = gamma_;
  loss.total = error + gamma_ * loss.components["l1_penalty"];
  return loss;
}

Evaluation InversionObjective::evaluate(const MaskWeights& weights) const {
  MaskPipeline pipeline(base_, x_.normalized.height(), x_.normalized.width());
  Evaluation out;
  out.mask = pipeline.forward(weights);
  Tensor grad_mask;
  out.loss = evaluate_mask(out.mask.grid, weights, &grad_mask);
  out.gradient = pipeline.backward(grad_mask);
  add_l1_gradient(weights, gamma_, out.gradient);
  return out;
}

DifferentiableObjective InversionObjective::as_objective() const {
  return [this](const MaskWeights& w) {
    Evaluation e = evaluate(w);
    return ObjectiveValue{e.loss.total, std::move(e.gradient)};
  };
}

TargetObjective::TargetObjective(const ModelBackend& model, const ImageTensor& x,
                                 const Tensor& base_activations, const BaselineImage& p,
                                 int target_class, double lambda, double delta)
    : model_(model),
      x_(x),
      base_(base_activations),
      p_(p),
      class_(target_class),
      lambda_(lambda),
      delta_(delta) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  model.check_class(target_class);
  require_same_shape(x.shape(), p.normalized.shape(), "target objective baseline");
}

LossBreakdown TargetObjective::evaluate_mask(const Tensor& mask, const MaskWeights& weights,
                                             Tensor* grad_mask) const {
  const Tensor phi = compose_foreground(x_.normalized, mask, p_.normalized);
  const Tensor phi_bg = compose_background(x_.normalized, mask, p_.normalized);
  double fg = 0.0;
  double bg = 0.0;
  if (grad_mask) {
    Tensor g_fg;
    Tensor g_bg;
    fg = model_.class_prob_with_grad(phi, class_, g_fg);
    bg = model_.class_prob_with_grad(phi_bg, class_, g_bg);
    *grad_mask = Tensor(mask.shape());
    // d(−f_c(Φ))/dΦ = −g_fg; d(λ f_c(Φ_bg))/dΦ_bg = λ g_bg.
    for (double& v : g_fg.values()) v = -v;
    for (double& v : g_bg.values()) v *= lambda_;
    accumulate_mask_grad(g_fg, x_.normalized, p_.normalized, 1.0, *grad_mask);
    accumulate_mask_grad(g_bg, x_.normalized, p_.normalized, -1.0, *grad_mask);
  } else {
    fg = model_.class_prob(phi)[static_cast<std::size_t>(class_)];
    bg = model_.class_prob(phi_bg)[static_cast<std::size_t>(class_)];
  }

  LossBreakdown loss;
  loss.components["fg_activation"] = fg;
  loss.components["bg_activation"] = bg;
  loss.components["l1_penalty"] = l1_norm(weights);
  loss.weights["fg_activation"] = -1.0;
  loss.weights["bg_activation"] = lambda_;
  loss.weights["l1_penalty"] = delta_;
  loss.total = -fg + lambda_ * bg + delta_ * loss.components["l1_penalty"];
  return loss;
}

Evaluation TargetObjective::evaluate(const MaskWeights& weights) const {
  MaskPipeline pipeline(base_, x_.normalized.height(), x_.normalized.width());
  Evaluation out;
  out.mask = pipeline.forward(weights);
  Tensor grad_mask;
  out.loss = evaluate_mask(out.mask.grid, weights, &grad_mask);
  out.gradient = pipeline.backward(grad_mask);
  add_l1_gradient(weights, delta_, out.gradient);
  return out;
}

DifferentiableObjective TargetObjective::as_objective() const {
  return [this](const MaskWeights& w) {
    Evaluation e = evaluate(w);
    return ObjectiveValue{e.loss.total, std::move(e.gradient)};
  };
}

InversionTarget make_inversion_target(const ModelBackend& model, const ImageTensor& x,
                                      const std::string& layer) {
  auto snap = model.forward_with_taps(x.normalized, {layer});
  return InversionTarget{layer, std::move(snap.layers.at(layer))};
}

LossBreakdown inversion_loss(const ModelBackend& model, const MaskWeights& weights,
                             const ImageTensor& x, const Tensor& base_activations,
                             const InversionTarget& target, const BaselineImage& p, double gamma) {
  InversionObjective objective(model, x, base_activations, target, p, gamma);
  MaskPipeline pipeline(base_activations, x.normalized.height(), x.normalized.width());
  return objective.evaluate_mask(pipeline.forward(weights).grid, weights);
}

LossBreakdown target_loss(const ModelBackend& model, const MaskWeights& weights,
                          const ImageTensor& x, const Tensor& base_activations,
                          const BaselineImage& p, int target_class, double lambda, double delta) {
  TargetObjective objective(model, x, base_activations, p, target_class, lambda, delta);
  MaskPipeline pipeline(base_activations, x.normalized.height(), x.normalized.width());
  return objective.evaluate_mask(pipeline.forward(weights).grid, weights);
}

}  // namespace gfi
