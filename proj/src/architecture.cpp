#include "gfi/architecture.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gfi/errors.hpp"

#ifndef GFI_DATA_DIR
#define GFI_DATA_DIR "data"
#endif

namespace gfi {

namespace {

Network build_toy(const ArchitectureEntry& e) {
  Network net(e.input);
  net.conv("conv1", "conv1", 3, 3, 1, 1, true);
  net.max_pool("pool1", 2, 2);
  net.conv("conv2", "conv2", 4, 3, 1, 1, true);
  net.max_pool("pool2", 2, 2);
  net.linear("fc", "fc", e.num_classes, false);
  return net;
}

// Layer names follow the Caffe labels; parameter keys follow torchvision.
Network build_vgg19(const ArchitectureEntry& e) {
  Network net(e.input);
  const int widths[5] = {64, 128, 256, 512, 512};
  const int depth[5] = {2, 2, 4, 4, 4};
  int feature = 0;
  for (int block = 0; block < 5; ++block) {
    for (int j = 0; j < depth[block]; ++j) {
      const std::string name = "conv" + std::to_string(block + 1) + "_" + std::to_string(j + 1);
      net.conv(name, "features." + std::to_string(feature), widths[block], 3, 1, 1, true);
      feature += 2;  // conv + relu
    }
    net.max_pool("pool" + std::to_string(block + 1), 2, 2);
    feature += 1;
  }
  net.adaptive_avg_pool("avgpool", 7, 7);
  net.linear("fc6", "classifier.0", 4096, true);
  net.linear("fc7", "classifier.3", 4096, true);
  net.linear("fc8", "classifier.6", e.num_classes, false);
  return net;
}

Network build_alexnet(const ArchitectureEntry& e) {
  Network net(e.input);
  net.conv("conv1", "features.0", 64, 11, 4, 2, true);
  net.max_pool("pool1", 3, 2);
  net.conv("conv2", "features.3", 192, 5, 1, 2, true);
  net.max_pool("pool2", 3, 2);
  net.conv("conv3", "features.6", 384, 3, 1, 1, true);
  net.conv("conv4", "features.8", 256, 3, 1, 1, true);
  net.conv("conv5", "features.10", 256, 3, 1, 1, true);
  net.max_pool("pool5", 3, 2);
  net.adaptive_avg_pool("avgpool", 6, 6);
  net.linear("fc6", "classifier.1", 4096, true);
  net.linear("fc7", "classifier.4", 4096, true);
  net.linear("fc8", "classifier.6", e.num_classes, false);
  return net;
}

Network build_resnet18(const ArchitectureEntry& e) {
  Network net(e.input);
  net.conv("conv1", "conv1", 64, 7, 2, 3, false, false);
  net.batch_norm("bn1", "bn1");
  net.relu("relu");
  int x = net.max_pool("maxpool", 3, 2, 1);
  int channels = 64;
  const int widths[4] = {64, 128, 256, 512};
  for (int layer = 0; layer < 4; ++layer) {
    for (int block = 0; block < 2; ++block) {
      const std::string p = "layer" + std::to_string(layer + 1) + "." + std::to_string(block);
      const int stride = (block == 0 && layer > 0) ? 2 : 1;
      const int width = widths[layer];
      net.conv(p + ".conv1", p + ".conv1", width, 3, stride, 1, false, false, x);
      net.batch_norm(p + ".bn1", p + ".bn1");
      net.relu(p + ".relu1");
      net.conv(p + ".conv2", p + ".conv2", width, 3, 1, 1, false, false);
      const int main = net.batch_norm(p + ".bn2", p + ".bn2");
      int skip = x;
      if (stride != 1 || channels != width) {
        net.conv(p + ".downsample.0", p + ".downsample.0", width, 1, stride, 0, false, false, x);
        skip = net.batch_norm(p + ".downsample.1", p + ".downsample.1");
      }
      net.add(p + ".add", main, skip);
      // The final block of each stage is addressable by the stage name.
      x = net.relu(block == 1 ? "layer" + std::to_string(layer + 1) : p + ".out");
      channels = width;
    }
  }
  net.adaptive_avg_pool("avgpool", 1, 1);
  net.linear("fc", "fc", e.num_classes, false);
  return net;
}

ArchitectureEntry parse_entry(const std::string& name, const nlohmann::json& j) {
  ArchitectureEntry e;
  e.name = name;
  e.family = j.value("family", name);
  e.layers.inversion_layer = j.at("l0").get<std::string>();
  e.layers.base_layer = j.at("l1").get<std::string>();
  e.layers.n_channels = j.at("n_channels").get<int>();
  const auto spatial = j.at("base_spatial").get<std::vector<int>>();
  const auto input = j.at("input_size").get<std::vector<int>>();
  if (spatial.size() != 2 || input.size() != 2) {
    throw ConfigError("architecture '" + name + "': spatial sizes must be [height, width]");
  }
  e.layers.base_height = spatial[0];
  e.layers.base_width = spatial[1];
  e.input = {j.value("input_channels", 3), input[0], input[1]};
  e.num_classes = j.value("num_classes", 1000);
  e.preprocessing.mean = j.at("mean").get<std::vector<double>>();
  e.preprocessing.stddev = j.at("std").get<std::vector<double>>();
  e.weights_file = j.value("weights", name + ".safetensors");
  if (e.preprocessing.mean.size() != static_cast<std::size_t>(e.input.channels) ||
      e.preprocessing.stddev.size() != static_cast<std::size_t>(e.input.channels)) {
    throw ConfigError("architecture '" + name + "': mean/std length must equal input_channels");
  }
  return e;
}

}  // namespace

ArchitectureRegistry ArchitectureRegistry::from_json_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed architecture registry: ") + ex.what());
  }
  ArchitectureRegistry reg;
  try {
    for (const auto& [name, entry] : root.items()) reg.entries_.emplace(name, parse_entry(name, entry));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid architecture registry entry: ") + ex.what());
  }
  return reg;
}

ArchitectureRegistry ArchitectureRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read architecture registry " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

const ArchitectureEntry& ArchitectureRegistry::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it != entries_.end()) return it->second;
  std::string known;
  for (const auto& [n, _] : entries_) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown architecture '" + name + "'; registered: " + known);
}

std::vector<std::string> ArchitectureRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : entries_) out.push_back(n);
  return out;
}

Network build_network(const ArchitectureEntry& entry) {
  if (entry.family == "toy") return build_toy(entry);
  if (entry.family == "vgg19") return build_vgg19(entry);
  if (entry.family == "alexnet") return build_alexnet(entry);
  if (entry.family == "resnet18") return build_resnet18(entry);
  throw ConfigError("architecture '" + entry.name + "' has unknown family '" + entry.family + "'");
}

std::filesystem::path default_registry_path() {
  return std::filesystem::path(GFI_DATA_DIR) / "architectures.json";
}

}  // namespace gfi
