#include "gfi/mask.hpp"

#include <algorithm>
#include <cmath>

#include "gfi/errors.hpp"

namespace gfi {

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Corner-aligned source coordinate for each target index.
std::vector<Tap> taps(int src, int dst) {
  std::vector<Tap> out(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    const double pos = dst > 1 ? static_cast<double>(i) * (src - 1) / (dst - 1) : 0.0;
    int lo = static_cast<int>(std::floor(pos));
    lo = std::clamp(lo, 0, src - 1);
    const int hi = std::min(lo + 1, src - 1);
    out[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
  }
  return out;
}

}  // namespace

Tensor channel_mask(const MaskWeights& weights, const Tensor& base_activations) {
  if (weights.size() != static_cast<std::size_t>(base_activations.channels())) {
    throw InputError("mask weights have length " + std::to_string(weights.size()) + " but the base layer has " +
                     std::to_string(base_activations.channels()) + " channels");
  }
  Tensor out = Tensor::grid(base_activations.height(), base_activations.width());
  for (int c = 0; c < base_activations.channels(); ++c) {
    const double w = weights[static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    auto src = base_activations.channel(c);
    for (std::size_t k = 0; k < src.size(); ++k) out[k] += w * src[k];
  }
  return out;
}

Tensor minmax_normalize(const Tensor& grid, bool* degenerate) {
  if (!grid.all_finite()) throw InputError("minmax_normalize: non-finite entry");
  const double lo = grid.min();
  const double hi = grid.max();
  Tensor out(grid.shape());
  const bool flat = !(hi > lo);
  if (degenerate) *degenerate = flat;
  if (flat) return out;
  const double range = hi - lo;
  for (std::size_t k = 0; k < grid.size(); ++k) out[k] = (grid[k] - lo) / range;
  return out;
}

Tensor upsample_bilinear(const Tensor& grid, int height, int width) {
  if (height < grid.height() || width < grid.width()) {
    throw InputError("upsample target (" + std::to_string(height) + ", " + std::to_string(width) +
                     ") is smaller than source " + grid.shape().str());
  }
  const auto ty = taps(grid.height(), height);
  const auto tx = taps(grid.width(), width);
  Tensor out({grid.channels(), height, width});
  for (int c = 0; c < grid.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < width; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double top = grid.at(c, a.lo, b.lo) * (1 - b.frac) + grid.at(c, a.lo, b.hi) * b.frac;
        const double bot = grid.at(c, a.hi, b.lo) * (1 - b.frac) + grid.at(c, a.hi, b.hi) * b.frac;
        out.at(c, y, x) = top * (1 - a.frac) + bot * a.frac;
      }
    }
  return out;
}

Tensor upsample_bilinear_adjoint(const Tensor& grad, int src_height, int src_width) {
  const auto ty = taps(src_height, grad.height());
  const auto tx = taps(src_width, grad.width());
  Tensor out({grad.channels(), src_height, src_width});
  for (int c = 0; c < grad.channels(); ++c)
    for (int y = 0; y < grad.height(); ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < grad.width(); ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double g = grad.at(c, y, x);
        out.at(c, a.lo, b.lo) += g * (1 - a.frac) * (1 - b.frac);
        out.at(c, a.lo, b.hi) += g * (1 - a.frac) * b.frac;
        out.at(c, a.hi, b.lo) += g * a.frac * (1 - b.frac);
        out.at(c, a.hi, b.hi) += g * a.frac * b.frac;
      }
    }
  return out;
}

SaliencyMask build_mask(const MaskWeights& weights, const Tensor& base_activations, int height,
                        int width) {
  MaskPipeline pipeline(base_activations, height, width);
  return pipeline.forward(weights);
}

MaskWeights clip_nonneg(const MaskWeights& weights) {
  MaskWeights out = weights;
  for (double& v : out.values) v = std::max(v, 0.0);
  return out;
}

MaskPipeline::MaskPipeline(const Tensor& base_activations, int height, int width)
    : acts_(base_activations), height_(height), width_(width) {}

const SaliencyMask& MaskPipeline::forward(const MaskWeights& weights) {
  raw_ = channel_mask(weights, acts_);
  if (!raw_.all_finite()) throw InputError("channel mask has non-finite entries");
  const auto v = raw_.values();
  argmin_ = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  argmax_ = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  range_ = v[argmax_] - v[argmin_];
  bool degenerate = false;
  Tensor low = minmax_normalize(raw_, &degenerate);
  Tensor grid = upsample_bilinear(low, height_, width_);
  mask_ = SaliencyMask{std::move(grid), std::move(low), degenerate};
  return mask_;
}

std::vector<double> MaskPipeline::backward(const Tensor& grad_mask) const {
  require_same_shape(grad_mask.shape(), mask_.grid.shape(), "mask gradient");
  std::vector<double> grad(static_cast<std::size_t>(acts_.channels()), 0.0);
  if (mask_.degenerate) return grad;

  const Tensor g_low = upsample_bilinear_adjoint(grad_mask, raw_.height(), raw_.width());
  // n_j = (r_j - r_min) / (r_max - r_min); the extremes act through their argmin/argmax entries.
  Tensor g_raw(raw_.shape());
  double g_sum = 0.0;
  double g_dot_n = 0.0;
  for (std::size_t k = 0; k < g_low.size(); ++k) {
    g_raw[k] = g_low[k] / range_;
    g_sum += g_low[k];
    g_dot_n += g_low[k] * mask_.low_res[k];
  }
  g_raw[argmin_] += (g_dot_n - g_sum) / range_;
  g_raw[argmax_] -= g_dot_n / range_;

  for (int c = 0; c < acts_.channels(); ++c) {
    auto a = acts_.channel(c);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * g_raw[k];
    grad[static_cast<std::size_t>(c)] = s;
  }
  return grad;
}

}  // namespace gfi
