// Regenerates data/toy_cnn.safetensors, the fixed-seed test network.
#include <cstdint>
#include <iostream>

#include "gfi/architecture.hpp"
#include "gfi/weights.hpp"

int main(int argc, char** argv) {
  const std::string out = argc > 1 ? argv[1] : "toy_cnn.safetensors";
  constexpr std::uint64_t kSeed = 20180613;
  try {
    const auto registry = gfi::ArchitectureRegistry::load(gfi::default_registry_path());
    gfi::Network net = gfi::build_network(registry.get("toy"));
    net.randomize(kSeed);
    gfi::save_safetensors(out, net.export_weights());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}
