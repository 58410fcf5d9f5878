#pragma once

#include <span>
#include <string>
#include <vector>

#include "gfi/tensor.hpp"

namespace gfi {

/// Per-channel mean/std used to map [0,1] pixels into model input space.
struct Preprocessing {
  std::vector<double> mean;
  std::vector<double> stddev;

  Tensor normalize(const Tensor& pixels) const;
  Tensor denormalize(const Tensor& normalized) const;
};

/// A preprocessed model input together with its [0,1] pixel-space twin.
struct ImageTensor {
  Tensor normalized;
  Tensor pixels;

  static ImageTensor from_pixels(Tensor pixels, const Preprocessing& prep);
  const Shape& shape() const { return normalized.shape(); }
};

/// Channel weights of the mask parameterization; one entry per base-layer channel.
struct MaskWeights {
  std::vector<double> values;

  MaskWeights() = default;
  explicit MaskWeights(std::vector<double> v) : values(std::move(v)) {}
  static MaskWeights constant(std::size_t n, double value) {
    return MaskWeights(std::vector<double>(n, value));
  }
  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> span() const { return values; }
  bool operator==(const MaskWeights&) const = default;
};

/// Saliency grid in [0,1] at input resolution, shape (1, H, W).
struct SaliencyMask {
  Tensor grid;
  /// Normalized map before upsampling, when produced by the channel pipeline.
  Tensor low_res;
  /// Set when the pre-normalization map was constant and the mask collapsed to zero.
  bool degenerate = false;

  int height() const { return grid.height(); }
  int width() const { return grid.width(); }
  static SaliencyMask filled(int height, int width, double value) {
    return SaliencyMask{Tensor::grid(height, width, value), {}, false};
  }
};

/// Class index with its probability.
struct Prediction {
  int label = -1;
  double probability = 0.0;
};

}  // namespace gfi
