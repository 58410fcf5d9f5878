#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>

#include "gfi/architecture.hpp"
#include "gfi/model.hpp"
#include "gfi/types.hpp"
#include "toy_oracle.hpp"

namespace gfi::testing {

const ArchitectureRegistry& registry();
const ArchitectureEntry& toy_entry();
/// The committed fixed-seed toy network.
std::shared_ptr<const ModelBackend> toy_model();
std::filesystem::path toy_weights_path();

/// Uniform [0,1) doubles, identical on every platform.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double in(double lo, double hi) { return lo + (hi - lo) * (*this)(); }

 private:
  std::mt19937_64 engine_;
};

/// Random pixel image for the toy network.
ImageTensor toy_image(std::uint64_t seed);
/// Random nonnegative mask weights in [lo, hi).
MaskWeights random_weights(std::size_t n, std::uint64_t seed, double lo = 0.01, double hi = 0.5);

/// ||a - b|| / max(||a||, ||b||, 1e-12).
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

/// Oracle problem for a toy input: the blur baseline is built with the
/// oracle's own blur and normalization.
oracle::OracleProblem oracle_problem(const ImageTensor& x, int radius = 11);

/// Fresh scratch directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace gfi::testing
