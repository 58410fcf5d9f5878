#pragma once

#include <vector>

#include "gfi/tensor.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Weighted channel sum Σ_i ω_i A_i of base-layer activations (C, h, w) -> (1, h, w).
Tensor channel_mask(const MaskWeights& weights, const Tensor& base_activations);

/// (g - min g) / (max g - min g). A constant grid maps to all zeros and sets
/// *degenerate when given. Non-finite entries raise InputError.
Tensor minmax_normalize(const Tensor& grid, bool* degenerate = nullptr);

/// Corner-aligned bilinear interpolation of every channel to (height, width).
Tensor upsample_bilinear(const Tensor& grid, int height, int width);

/// Adjoint of upsample_bilinear: maps a gradient on the large grid back to the source grid.
Tensor upsample_bilinear_adjoint(const Tensor& grad, int src_height, int src_width);

/// upsample(minmax_normalize(channel_mask(ω, acts))).
SaliencyMask build_mask(const MaskWeights& weights, const Tensor& base_activations, int height,
                        int width);

/// Entrywise max(ω_i, 0).
MaskWeights clip_nonneg(const MaskWeights& weights);

/// Mask construction with the intermediates needed to pull a gradient on
/// the mask back to the channel weights.
class MaskPipeline {
 public:
  MaskPipeline(const Tensor& base_activations, int height, int width);

  const SaliencyMask& forward(const MaskWeights& weights);
  /// d loss / d ω given d loss / d mask at the last forward point. The
  /// degenerate case has zero gradient.
  std::vector<double> backward(const Tensor& grad_mask) const;

  const SaliencyMask& mask() const { return mask_; }

 private:
  const Tensor& acts_;
  int height_;
  int width_;
  Tensor raw_;
  std::size_t argmin_ = 0;
  std::size_t argmax_ = 0;
  double range_ = 0.0;
  SaliencyMask mask_;
};

}  // namespace gfi
