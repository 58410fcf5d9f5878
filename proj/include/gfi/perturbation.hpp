#pragma once

#include <cstdint>
#include <string>

#include "gfi/tensor.hpp"
#include "gfi/types.hpp"

namespace gfi {

enum class BaselineKind { gray_mean, gaussian_noise, gaussian_blur };

/// Parses "gray", "noise" or "blur" (also the long enum spellings).
BaselineKind parse_baseline_kind(const std::string& text);
std::string to_string(BaselineKind kind);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::gaussian_blur;
  int blur_radius = 11;
  std::uint64_t noise_seed = 0;
};

/// Uninformative replacement content p, in the same normalized space as the input.
struct BaselineImage {
  Tensor normalized;
  Tensor pixels;
};

/// Gaussian standard deviation used for a blur of the given radius.
double blur_sigma(int radius);

/// Blurs each channel with a normalized (2r+1)^2 Gaussian window, reflecting at the borders.
Tensor gaussian_blur(const Tensor& pixels, int radius);

/// gray: per-channel dataset mean; noise: seeded N(mean, std) per pixel clipped
/// to [0,1]; blur: the input's pixel twin blurred with radius blur_radius.
BaselineImage make_baseline(const BaselineConfig& config, const ImageTensor& x,
                            const Preprocessing& prep);

/// x ⊙ m + p ⊙ (1 − m), mask broadcast over channels.
Tensor compose_foreground(const Tensor& x, const Tensor& mask, const Tensor& p);
/// x ⊙ (1 − m) + p ⊙ m.
Tensor compose_background(const Tensor& x, const Tensor& mask, const Tensor& p);

inline Tensor compose_foreground(const ImageTensor& x, const SaliencyMask& m, const BaselineImage& p) {
  return compose_foreground(x.normalized, m.grid, p.normalized);
}
inline Tensor compose_background(const ImageTensor& x, const SaliencyMask& m, const BaselineImage& p) {
  return compose_background(x.normalized, m.grid, p.normalized);
}

}  // namespace gfi
