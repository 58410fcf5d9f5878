#include "gfi/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "gfi/errors.hpp"

namespace gfi {

BaselineKind parse_baseline_kind(const std::string& text) {
  if (text == "gray" || text == "gray-mean") return BaselineKind::gray_mean;
  if (text == "noise" || text == "gaussian-noise") return BaselineKind::gaussian_noise;
  if (text == "blur" || text == "gaussian-blur") return BaselineKind::gaussian_blur;
  throw ConfigError("unknown baseline '" + text + "' (expected gray, noise or blur)");
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::gray_mean:
      return "gray";
    case BaselineKind::gaussian_noise:
      return "noise";
    case BaselineKind::gaussian_blur:
      return "blur";
  }
  return "blur";
}

double blur_sigma(int radius) { return radius / 2.2; }

Tensor gaussian_blur(const Tensor& pixels, int radius) {
  if (radius < 1) throw ConfigError("blur radius must be >= 1, got " + std::to_string(radius));
  const int window = 2 * radius + 1;
  const cv::Mat kernel = cv::getGaussianKernel(window, blur_sigma(radius), CV_64F);
  Tensor out(pixels.shape());
  for (int c = 0; c < pixels.channels(); ++c) {
    // cv::Mat over const data is read only here; sepFilter2D writes into `dst`.
    cv::Mat src(pixels.height(), pixels.width(), CV_64F,
                const_cast<double*>(pixels.channel(c).data()));
    cv::Mat dst(pixels.height(), pixels.width(), CV_64F, out.channel(c).data());
    cv::sepFilter2D(src, dst, CV_64F, kernel, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
  }
  return out;
}

namespace {

// Box-Muller over mt19937_64 bits so noise is identical across standard libraries.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

BaselineImage make_baseline(const BaselineConfig& config, const ImageTensor& x,
                            const Preprocessing& prep) {
  Tensor pixels(x.pixels.shape());
  switch (config.kind) {
    case BaselineKind::gray_mean:
      for (int c = 0; c < pixels.channels(); ++c) {
        auto ch = pixels.channel(c);
        std::fill(ch.begin(), ch.end(), prep.mean.at(static_cast<std::size_t>(c)));
      }
      break;
    case BaselineKind::gaussian_noise: {
      NormalSource normal(config.noise_seed);
      for (int c = 0; c < pixels.channels(); ++c)
        for (double& v : pixels.channel(c)) {
          const double z = normal.next();
          v = std::clamp(prep.mean[static_cast<std::size_t>(c)] +
                             prep.stddev[static_cast<std::size_t>(c)] * z,
                         0.0, 1.0);
        }
      break;
    }
    case BaselineKind::gaussian_blur:
      pixels = gaussian_blur(x.pixels, config.blur_radius);
      break;
  }
  Tensor normalized = prep.normalize(pixels);
  return BaselineImage{std::move(normalized), std::move(pixels)};
}

namespace {

template <typename Blend>
Tensor blend(const Tensor& x, const Tensor& mask, const Tensor& p, Blend f, const char* what) {
  require_same_shape(x.shape(), p.shape(), what);
  if (mask.channels() != 1 || mask.height() != x.height() || mask.width() != x.width()) {
    throw InputError(std::string(what) + ": mask " + mask.shape().str() +
                     " is not aligned with image " + x.shape().str());
  }
  Tensor out(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int c = 0; c < x.channels(); ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * plane;
    for (std::size_t k = 0; k < plane; ++k) out[base + k] = f(x[base + k], mask[k], p[base + k]);
  }
  return out;
}

}  // namespace

Tensor compose_foreground(const Tensor& x, const Tensor& mask, const Tensor& p) {
  return blend(
      x, mask, p, [](double xv, double m, double pv) { return xv * m + pv * (1.0 - m); },
      "compose_foreground");
}

Tensor compose_background(const Tensor& x, const Tensor& mask, const Tensor& p) {
  return blend(
      x, mask, p, [](double xv, double m, double pv) { return xv * (1.0 - m) + pv * m; },
      "compose_background");
}

}  // namespace gfi
