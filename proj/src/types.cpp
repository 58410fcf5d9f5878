#include "gfi/types.hpp"

#include "gfi/errors.hpp"

namespace gfi {

namespace {
void check_channels(const Preprocessing& prep, const Tensor& t) {
  if (prep.mean.size() != static_cast<std::size_t>(t.channels()) ||
      prep.stddev.size() != static_cast<std::size_t>(t.channels())) {
    throw InputError("preprocessing constants cover " + std::to_string(prep.mean.size()) +
                     " channels, image has " + std::to_string(t.channels()));
  }
}
}  // namespace

Tensor Preprocessing::normalize(const Tensor& pixels) const {
  check_channels(*this, pixels);
  Tensor out(pixels.shape());
  for (int c = 0; c < pixels.channels(); ++c) {
    auto src = pixels.channel(c);
    auto dst = out.channel(c);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = (src[k] - mean[c]) / stddev[c];
  }
  return out;
}

Tensor Preprocessing::denormalize(const Tensor& normalized) const {
  check_channels(*this, normalized);
  Tensor out(normalized.shape());
  for (int c = 0; c < normalized.channels(); ++c) {
    auto src = normalized.channel(c);
    auto dst = out.channel(c);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] * stddev[c] + mean[c];
  }
  return out;
}

ImageTensor ImageTensor::from_pixels(Tensor pixels, const Preprocessing& prep) {
  Tensor normalized = prep.normalize(pixels);
  return ImageTensor{std::move(normalized), std::move(pixels)};
}

}  // namespace gfi
