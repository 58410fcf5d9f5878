#pragma once

#include <map>
#include <string>
#include <vector>

#include "gfi/model.hpp"
#include "gfi/perturbation.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Loss total with its named components and the weight each carries.
struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> components;
  std::map<std::string, double> weights;

  double weighted_sum() const;
  double component(const std::string& name) const;
};

/// Detached representation of the original input at the inversion layer.
struct InversionTarget {
  std::string layer;
  Tensor features;

  std::size_t count() const { return features.size(); }
};

/// One loss evaluation at ω: the breakdown, dL/dω and the mask it used.
struct Evaluation {
  LossBreakdown loss;
  std::vector<double> gradient;
  SaliencyMask mask;
};

/// Σ|ω_i|.
double l1_norm(const MaskWeights& weights);

/// ||f_l0(Φ(x, m(ω))) − f_l0(x)||² + γ ||ω||₁. The squared error is divided by
/// the feature count only when `mean_squared` is set.
class InversionObjective {
 public:
  InversionObjective(const ModelBackend& model, const ImageTensor& x, const Tensor& base_activations,
                     InversionTarget target, const BaselineImage& p, double gamma,
                     bool mean_squared = false);

  Evaluation evaluate(const MaskWeights& weights) const;
  /// Evaluates with a caller-supplied mask in place of m(ω); ω only feeds the
  /// ℓ1 term. If grad_mask is given it receives dL/dm.
  LossBreakdown evaluate_mask(const Tensor& mask, const MaskWeights& weights,
                              Tensor* grad_mask = nullptr) const;
  DifferentiableObjective as_objective() const;

 private:
  const ModelBackend& model_;
  const ImageTensor& x_;
  const Tensor& base_;
  InversionTarget target_;
  const BaselineImage& p_;
  double gamma_;
  bool mean_squared_;
};

/// −p_c(Φ) + λ p_c(Φ_bg) + δ ||ω||₁.
class TargetObjective {
 public:
  TargetObjective(const ModelBackend& model, const ImageTensor& x, const Tensor& base_activations,
                  const BaselineImage& p, int target_class, double lambda, double delta);

  Evaluation evaluate(const MaskWeights& weights) const;
  LossBreakdown evaluate_mask(const Tensor& mask, const MaskWeights& weights,
                              Tensor* grad_mask = nullptr) const;
  DifferentiableObjective as_objective() const;

 private:
  const ModelBackend& model_;
  const ImageTensor& x_;
  const Tensor& base_;
  const BaselineImage& p_;
  int class_;
  double lambda_;
  double delta_;
};

/// Detached inversion-layer features of x.
InversionTarget make_inversion_target(const ModelBackend& model, const ImageTensor& x,
                                      const std::string& layer);

LossBreakdown inversion_loss(const ModelBackend& model, const MaskWeights& weights,
                             const ImageTensor& x, const Tensor& base_activations,
                             const InversionTarget& target, const BaselineImage& p, double gamma);

LossBreakdown target_loss(const ModelBackend& model, const MaskWeights& weights,
                          const ImageTensor& x, const Tensor& base_activations,
                          const BaselineImage& p, int target_class, double lambda, double delta);

}  // namespace gfi
