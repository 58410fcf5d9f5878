#include "fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "gfi/weights.hpp"

#ifndef GFI_TEST_SCRATCH
#define GFI_TEST_SCRATCH "test_scratch"
#endif

namespace gfi::testing {

const ArchitectureRegistry& registry() {
  static const ArchitectureRegistry reg = ArchitectureRegistry::load(default_registry_path());
  return reg;
}

const ArchitectureEntry& toy_entry() { return registry().get("toy"); }

std::filesystem::path toy_weights_path() {
  return default_registry_path().parent_path() / toy_entry().weights_file;
}

std::shared_ptr<const ModelBackend> toy_model() {
  static const auto model = ModelBackend::open(toy_entry(), toy_weights_path());
  return model;
}

ImageTensor toy_image(std::uint64_t seed) {
  const auto& e = toy_entry();
  Uniform u(seed);
  Tensor pixels(e.input);
  for (double& v : pixels.values()) v = u();
  return ImageTensor::from_pixels(std::move(pixels), e.preprocessing);
}

MaskWeights random_weights(std::size_t n, std::uint64_t seed, double lo, double hi) {
  Uniform u(seed);
  MaskWeights w;
  for (std::size_t i = 0; i < n; ++i) w.values.push_back(u.in(lo, hi));
  return w;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

oracle::OracleProblem oracle_problem(const ImageTensor& x, int radius) {
  const auto& prep = toy_entry().preprocessing;
  const double mean = prep.mean[0], sd = prep.stddev[0];
  oracle::OracleProblem prob;
  prob.weights = oracle::ToyWeights::from(load_safetensors(toy_weights_path()));
  oracle::Image pixels{};
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) {
      pixels[y][xx] = x.pixels.at(0, y, xx);
      prob.x[y][xx] = (pixels[y][xx] - mean) / sd;
    }
  const oracle::Image blurred = oracle::blur_reflect(pixels, radius);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) prob.p[y][xx] = (blurred[y][xx] - mean) / sd;
  return prob;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(GFI_TEST_SCRATCH) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gfi::testing
