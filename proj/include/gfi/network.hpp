#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfi/tensor.hpp"
#include "gfi/weights.hpp"

namespace gfi {

enum class OpKind { conv, relu, max_pool, adaptive_avg_pool, batch_norm, linear, add };

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One node of a feed-forward graph. Inputs refer to earlier nodes by index,
/// with kNetworkInput standing for the image.
struct Node {
  static constexpr int kNetworkInput = -1;

  std::string name;
  OpKind kind = OpKind::relu;
  std::vector<int> inputs;

  // conv / pooling geometry
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  // adaptive pooling output size
  int pool_height = 1;
  int pool_width = 1;
  // conv / linear: apply ReLU to the output in place
  bool relu_after = false;
  bool has_bias = true;

  // conv: (out, in*k*k); linear: (out, in)
  RowMatrix weight;
  Eigen::VectorXd bias;
  // batch norm folded into an affine map
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;

  // state-dict key prefix used when loading weights ("features.0", "layer1.0.bn1", ...)
  std::string param_key;
  Shape out_shape;
};

/// A feed-forward CNN evaluated in inference mode. All methods are const
/// after construction, so one instance can be shared by concurrent workers.
class Network {
 public:
  explicit Network(Shape input_shape) : input_shape_(input_shape) {}

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  /// Index of the last node; its output is the logit vector.
  int output_index() const { return static_cast<int>(nodes_.size()) - 1; }
  std::optional<int> find(const std::string& name) const;
  /// Throws ConfigError naming the layer if it is unknown.
  int index_of(const std::string& name) const;
  std::vector<std::string> layer_names() const;

  // Builders. `input` defaults to the previously added node (or the image).
  int conv(const std::string& name, const std::string& key, int out_channels, int kernel, int stride,
           int padding, bool relu_after, bool bias = true, std::optional<int> input = {});
  int relu(const std::string& name, std::optional<int> input = {});
  int max_pool(const std::string& name, int kernel, int stride, int padding = 0,
               std::optional<int> input = {});
  int adaptive_avg_pool(const std::string& name, int out_h, int out_w, std::optional<int> input = {});
  int batch_norm(const std::string& name, const std::string& key, std::optional<int> input = {});
  int linear(const std::string& name, const std::string& key, int out_features, bool relu_after,
             std::optional<int> input = {});
  int add(const std::string& name, int a, int b);

  /// Copies parameters from a torchvision-style state dict. Every parameter
  /// must be present with the expected shape.
  void load(const WeightStore& store);
  /// Deterministic He-style initialization, for shape checks and tests.
  void randomize(std::uint64_t seed);
  /// Exports parameters in the same naming scheme `load` expects.
  WeightStore export_weights() const;

  /// Activations of nodes [0, last]; last defaults to the output node.
  std::vector<Tensor> forward(const Tensor& input, std::optional<int> last = {}) const;
  /// Gradient with respect to the network input of <seed, activation[node]>,
  /// given activations from `forward` that cover `node`.
  Tensor backward(const Tensor& input, const std::vector<Tensor>& acts, int node,
                  const Tensor& seed) const;

 private:
  int push(Node node, std::optional<int> input);
  const Shape& shape_of(int index) const;

  Shape input_shape_;
  std::vector<Node> nodes_;
  std::map<std::string, int> by_name_;
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace gfi
