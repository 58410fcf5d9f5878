#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gfi/architecture.hpp"
#include "gfi/network.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Layer id -> feature grid for one forward pass.
struct ActivationSnapshot {
  std::map<std::string, Tensor> layers;
  /// Detached snapshots are constants: nothing differentiates through them.
  bool detached = true;

  const Tensor& at(const std::string& layer) const;
};

/// Softmax probabilities over all classes.
struct ClassScores {
  std::vector<double> probabilities;

  Prediction top() const;
  double operator[](std::size_t c) const { return probabilities.at(c); }
  std::size_t size() const { return probabilities.size(); }
};

/// Value and gradient of a scalar function of the mask weights.
struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> gradient;
};

/// A scalar objective of ω that reports its own gradient.
using DifferentiableObjective = std::function<ObjectiveValue(const MaskWeights&)>;

/// Returns the gradient of `objective` at `wrt`. An objective that yields no
/// gradient, a gradient of the wrong length, or non-finite entries raises
/// InternalError instead of returning zeros.
std::vector<double> grad_of(const DifferentiableObjective& objective, const MaskWeights& wrt);

/// Adapter around a pretrained CNN: tapped activations, probabilities and
/// input gradients. Immutable after construction and safe to share.
class ModelBackend {
 public:
  ModelBackend(ArchitectureEntry entry, Network network);

  /// Loads weights from a safetensors file and checks the registry's layer spec.
  static std::shared_ptr<const ModelBackend> open(const ArchitectureEntry& entry,
                                                  const std::filesystem::path& weights);
  /// Same graph with seeded random parameters (shape checks, smoke tests).
  static std::shared_ptr<const ModelBackend> with_random_weights(const ArchitectureEntry& entry,
                                                                 std::uint64_t seed);

  const ArchitectureEntry& architecture() const { return entry_; }
  const LayerSpec& layer_spec() const { return entry_.layers; }
  const Network& network() const { return network_; }
  const Preprocessing& preprocessing() const { return entry_.preprocessing; }
  const Shape& input_shape() const { return network_.input_shape(); }
  int num_classes() const;

  /// LayerSpec for an arbitrary pair of taps, with channel count and spatial
  /// size read from the graph.
  LayerSpec layer_spec_for(const std::string& inversion_layer, const std::string& base_layer) const;

  ActivationSnapshot forward_with_taps(const Tensor& x, const std::set<std::string>& layers) const;
  std::vector<double> logits(const Tensor& x) const;
  ClassScores class_prob(const Tensor& x) const;

  /// Evaluates `layer` on x, asks `seed_for` for the upstream gradient given
  /// the layer value, and returns the resulting gradient with respect to x.
  Tensor pullback(const Tensor& x, const std::string& layer,
                  const std::function<Tensor(const Tensor&)>& seed_for) const;

  /// Softmax probability of class c and its input gradient.
  double class_prob_with_grad(const Tensor& x, int c, Tensor& grad) const;
  /// Unnormalized class score (logit) of class c and its input gradient.
  double logit_with_grad(const Tensor& x, int c, Tensor& grad) const;
  /// Cross-entropy -log p_c and its input gradient.
  double cross_entropy_with_grad(const Tensor& x, int c, Tensor& grad) const;

  /// Gradient baseline: max over channels of |d score_c / dx|, min-max normalized.
  SaliencyMask vanilla_gradient_saliency(const ImageTensor& x, int c) const;

  void check_class(int c) const;

 private:
  double output_with_grad(const Tensor& x, int c, Tensor& grad, int mode) const;

  ArchitectureEntry entry_;
  Network network_;
};

/// Checks that the registry's n_channels/base_spatial match the graph; throws ConfigError.
void validate_layer_spec(const Network& network, const LayerSpec& spec);

}  // namespace gfi
