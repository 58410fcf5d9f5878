#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gfi {

/// A named parameter array as stored on disk (shape in torch order).
struct ParamArray {
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  std::int64_t numel() const;
};

/// Parameters keyed by their torchvision state-dict name.
using WeightStore = std::map<std::string, ParamArray>;

/// Reads a safetensors file. F32 and F64 payloads are widened to double.
WeightStore load_safetensors(const std::filesystem::path& path);

/// Writes a safetensors file with F64 payloads, keys in sorted order.
void save_safetensors(const std::filesystem::path& path, const WeightStore& store);

}  // namespace gfi
