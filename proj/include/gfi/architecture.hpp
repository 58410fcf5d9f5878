#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gfi/network.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Which taps drive the explanation: the inversion layer (l0) whose
/// representation is matched, and the base layer (l1) whose channels compose the mask.
struct LayerSpec {
  std::string inversion_layer;
  std::string base_layer;
  int n_channels = 0;
  int base_height = 0;
  int base_width = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct ArchitectureEntry {
  std::string name;
  /// Graph builder to use: toy, vgg19, alexnet or resnet18.
  std::string family;
  LayerSpec layers;
  Shape input;
  int num_classes = 0;
  Preprocessing preprocessing;
  /// Default weights file name, resolved against the weights directory.
  std::string weights_file;
};

/// Architecture name -> layer taps, input geometry and preprocessing constants.
class ArchitectureRegistry {
 public:
  static ArchitectureRegistry load(const std::filesystem::path& path);
  static ArchitectureRegistry from_json_text(const std::string& text);

  /// Throws ConfigError listing the registered names when `name` is unknown.
  const ArchitectureEntry& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, ArchitectureEntry> entries_;
};

/// Builds the inference graph for an entry's family (parameters zeroed).
Network build_network(const ArchitectureEntry& entry);

/// Registry file shipped with the project (set at configure time).
std::filesystem::path default_registry_path();

}  // namespace gfi
