#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gfi/errors.hpp"
#include "gfi/perturbation.hpp"

using namespace gfi;
using gfi::testing::Uniform;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Uniform u(seed);
  Tensor t(s);
  for (double& v : t.values()) v = u.in(lo, hi);
  return t;
}

Tensor random_mask(int h, int w, std::uint64_t seed) {
  Uniform u(seed);
  Tensor m = Tensor::grid(h, w);
  for (double& v : m.values()) v = u();
  return m;
}

Preprocessing imagenet() {
  return Preprocessing{{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
}

}  // namespace

TEST_CASE("baseline kinds parse") {
  CHECK(parse_baseline_kind("gray") == BaselineKind::gray_mean);
  CHECK(parse_baseline_kind("noise") == BaselineKind::gaussian_noise);
  CHECK(parse_baseline_kind("blur") == BaselineKind::gaussian_blur);
  CHECK(parse_baseline_kind(to_string(BaselineKind::gaussian_noise)) ==
        BaselineKind::gaussian_noise);
  CHECK_THROWS_AS(parse_baseline_kind("zero"), ConfigError);
  CHECK(BaselineConfig{}.kind == BaselineKind::gaussian_blur);
  CHECK(BaselineConfig{}.blur_radius == 11);
}

TEST_CASE("gray baseline normalizes to exactly zero") {
  const auto x = ImageTensor::from_pixels(random_tensor({3, 16, 16}, 3, 0.0, 1.0), imagenet());
  BaselineConfig cfg;
  cfg.kind = BaselineKind::gray_mean;
  const auto p = make_baseline(cfg, x, imagenet());
  CHECK(p.normalized.shape() == x.shape());
  for (double v : p.normalized.values()) CHECK(v == 0.0);
  CHECK(p.pixels.at(0, 5, 5) == 0.485);
  CHECK(p.pixels.at(2, 0, 0) == 0.406);
}

TEST_CASE("blur keeps constants and reproduces the kernel from an impulse") {
  Tensor flat = Tensor::grid(30, 30, 0.37);
  const Tensor blurred = gaussian_blur(flat, 11);
  for (double v : blurred.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  CHECK(blur_sigma(11) == doctest::Approx(5.0));

  // Unit impulse in the middle of a canvas large enough that borders never reach it.
  Tensor impulse = Tensor::grid(45, 45, 0.0);
  impulse.at(0, 22, 22) = 1.0;
  const Tensor k = gaussian_blur(impulse, 11);
  const double sigma = 5.0;
  double norm = 0.0;
  for (int i = -11; i <= 11; ++i) norm += std::exp(-i * i / (2 * sigma * sigma));
  for (int y = 0; y < 45; ++y)
    for (int x = 0; x < 45; ++x) {
      const int dy = y - 22, dx = x - 22;
      double expected = 0.0;
      if (std::abs(dy) <= 11 && std::abs(dx) <= 11) {
        expected = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma)) / (norm * norm);
      }
      CHECK(k.at(0, y, x) == doctest::Approx(expected).epsilon(1e-9).scale(1e-12));
    }
  CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(gaussian_blur(flat, 0), ConfigError);
}

TEST_CASE("blur matches a direct mirrored convolution on the toy input") {
  const auto x = gfi::testing::toy_image(5);
  const auto prob = gfi::testing::oracle_problem(x, 11);
  BaselineConfig cfg;
  const auto p = make_baseline(cfg, x, gfi::testing::toy_entry().preprocessing);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx)
      CHECK(p.normalized.at(0, y, xx) == doctest::Approx(prob.p[y][xx]).epsilon(1e-12));
}

TEST_CASE("noise baseline is seeded, clipped and deterministic") {
  const auto x = ImageTensor::from_pixels(random_tensor({3, 12, 12}, 8, 0.0, 1.0), imagenet());
  BaselineConfig cfg;
  cfg.kind = BaselineKind::gaussian_noise;
  cfg.noise_seed = 42;
  const auto a = make_baseline(cfg, x, imagenet());
  const auto b = make_baseline(cfg, x, imagenet());
  CHECK(a.normalized == b.normalized);
  CHECK(a.pixels.min() >= 0.0);
  CHECK(a.pixels.max() <= 1.0);
  cfg.noise_seed = 43;
  CHECK_FALSE(make_baseline(cfg, x, imagenet()).normalized == a.normalized);
}

TEST_CASE("composites at the identity, annihilation and midpoint masks") {
  const Tensor x = random_tensor({3, 6, 5}, 1);
  const Tensor p = random_tensor({3, 6, 5}, 2);
  const Tensor ones = Tensor::grid(6, 5, 1.0);
  const Tensor zeros = Tensor::grid(6, 5, 0.0);
  const Tensor half = Tensor::grid(6, 5, 0.5);

  CHECK(compose_foreground(x, ones, p) == x);
  CHECK(compose_foreground(x, zeros, p) == p);
  CHECK(compose_background(x, ones, p) == p);
  CHECK(compose_background(x, zeros, p) == x);
  const Tensor mid = compose_foreground(x, half, p);
  for (std::size_t k = 0; k < x.size(); ++k)
    CHECK(mid[k] == doctest::Approx((x[k] + p[k]) / 2).epsilon(1e-15));
}

TEST_CASE("composite shape mismatches are input errors") {
  const Tensor x = random_tensor({3, 6, 5}, 1);
  CHECK_THROWS_AS(compose_foreground(x, Tensor::grid(5, 5, 1.0), x), InputError);
  CHECK_THROWS_AS(compose_background(x, Tensor::grid(6, 5, 1.0), random_tensor({3, 5, 6}, 2)),
                  InputError);
  CHECK_THROWS_AS(compose_foreground(x, Tensor(Shape{2, 6, 5}), x), InputError);
}

TEST_CASE("composite properties over random masks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_tensor({3, 7, 9}, 100 + seed);
    const Tensor p = random_tensor({3, 7, 9}, 200 + seed);
    const Tensor m = random_mask(7, 9, 300 + seed);
    Tensor inv = m;
    for (double& v : inv.values()) v = 1.0 - v;

    const Tensor fg = compose_foreground(x, m, p);
    const Tensor bg = compose_background(x, m, p);
    const Tensor fg_inv = compose_foreground(x, inv, p);
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(fg[k] + bg[k] == doctest::Approx(x[k] + p[k]).epsilon(1e-12));
      CHECK(bg[k] == doctest::Approx(fg_inv[k]).epsilon(1e-12));
      CHECK(fg[k] >= std::min(x[k], p[k]) - 1e-12);
      CHECK(fg[k] <= std::max(x[k], p[k]) + 1e-12);
    }
  }
}

TEST_CASE("foreground is linear in the mask with slope x - p") {
  const Tensor x = random_tensor({2, 4, 4}, 11);
  const Tensor p = random_tensor({2, 4, 4}, 12);
  Tensor m = random_mask(4, 4, 13);
  const double h = 1e-6;
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) {
      const double keep = m.at(0, y, xx);
      m.at(0, y, xx) = keep + h;
      const Tensor up = compose_foreground(x, m, p);
      m.at(0, y, xx) = keep - h;
      const Tensor down = compose_foreground(x, m, p);
      m.at(0, y, xx) = keep;
      for (int c = 0; c < 2; ++c) {
        const double fd = (up.at(c, y, xx) - down.at(c, y, xx)) / (2 * h);
        CHECK(fd == doctest::Approx(x.at(c, y, xx) - p.at(c, y, xx)).epsilon(1e-7));
      }
    }
}

TEST_CASE("domain-type overloads agree with the tensor forms") {
  const auto x = gfi::testing::toy_image(9);
  BaselineConfig cfg;
  const auto p = make_baseline(cfg, x, gfi::testing::toy_entry().preprocessing);
  const SaliencyMask m{random_mask(8, 8, 4), {}, false};
  CHECK(compose_foreground(x, m, p) == compose_foreground(x.normalized, m.grid, p.normalized));
  CHECK(compose_background(x, m, p) == compose_background(x.normalized, m.grid, p.normalized));
}
