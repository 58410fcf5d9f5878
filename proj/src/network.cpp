#include "gfi/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gfi/errors.hpp"

namespace gfi {

namespace {

using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

int conv_out(int size, int kernel, int stride, int padding) {
  return (size + 2 * padding - kernel) / stride + 1;
}

// Adaptive pooling bin [start, end) along one axis, torch convention.
std::pair<int, int> adaptive_bin(int i, int in, int out) {
  const int start = (i * in) / out;
  const int end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

RowMatrix im2col(const Tensor& x, int kernel, int stride, int padding, int out_h, int out_w) {
  const int c_in = x.channels();
  RowMatrix cols(static_cast<Eigen::Index>(c_in) * kernel * kernel,
                 static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          double* dst = row + static_cast<std::ptrdiff_t>(oy) * out_w;
          if (iy < 0 || iy >= x.height()) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            dst[ox] = (ix < 0 || ix >= x.width()) ? 0.0 : x.at(c, iy, ix);
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& cols, int kernel, int stride, int padding, int out_h, int out_w,
                Tensor& dx) {
  for (int c = 0; c < dx.channels(); ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= dx.height()) continue;
          const double* src = row + static_cast<std::ptrdiff_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < dx.width()) dx.at(c, iy, ix) += src[ox];
          }
        }
      }
    }
  }
}

// Index of the first maximum inside one pooling window (row-major scan), or -1
// when the window lies entirely in the padding.
std::ptrdiff_t window_argmax(const Tensor& x, int c, int oy, int ox, int kernel, int stride,
                             int padding) {
  double best = -std::numeric_limits<double>::infinity();
  std::ptrdiff_t arg = -1;
  for (int ky = 0; ky < kernel; ++ky) {
    const int iy = oy * stride - padding + ky;
    if (iy < 0 || iy >= x.height()) continue;
    for (int kx = 0; kx < kernel; ++kx) {
      const int ix = ox * stride - padding + kx;
      if (ix < 0 || ix >= x.width()) continue;
      const double v = x.at(c, iy, ix);
      if (arg < 0 || v > best) {
        best = v;
        arg = (static_cast<std::ptrdiff_t>(c) * x.height() + iy) * x.width() + ix;
      }
    }
  }
  return arg;
}

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : engine_(seed) {}
  // Uniform in [-1, 1), identical on every platform.
  double symmetric() {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::optional<int> Network::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

int Network::index_of(const std::string& name) const {
  if (auto idx = find(name)) return *idx;
  throw ConfigError("unknown layer '" + name + "'");
}

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.name);
  return names;
}

const Shape& Network::shape_of(int index) const {
  return index == Node::kNetworkInput ? input_shape_ : nodes_.at(index).out_shape;
}

int Network::push(Node node, std::optional<int> input) {
  if (by_name_.count(node.name)) throw ConfigError("duplicate layer name '" + node.name + "'");
  if (node.inputs.empty()) {
    node.inputs.push_back(input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index()));
  }
  const int idx = static_cast<int>(nodes_.size());
  by_name_[node.name] = idx;
  nodes_.push_back(std::move(node));
  return idx;
}

int Network::conv(const std::string& name, const std::string& key, int out_channels, int kernel,
                  int stride, int padding, bool relu_after, bool bias, std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::conv;
  n.param_key = key;
  n.kernel = kernel;
  n.stride = stride;
  n.padding = padding;
  n.relu_after = relu_after;
  n.has_bias = bias;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  const Shape in = shape_of(src);
  n.inputs = {src};
  n.out_shape = {out_channels, conv_out(in.height, kernel, stride, padding),
                 conv_out(in.width, kernel, stride, padding)};
  if (n.out_shape.height <= 0 || n.out_shape.width <= 0) {
    throw ConfigError("layer '" + name + "' produces an empty output from input " + in.str());
  }
  n.weight = RowMatrix::Zero(out_channels, static_cast<Eigen::Index>(in.channels) * kernel * kernel);
  n.bias = Eigen::VectorXd::Zero(out_channels);
  return push(std::move(n), src);
}

int Network::relu(const std::string& name, std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::relu;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  n.inputs = {src};
  n.out_shape = shape_of(src);
  return push(std::move(n), src);
}

int Network::max_pool(const std::string& name, int kernel, int stride, int padding,
                      std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::max_pool;
  n.kernel = kernel;
  n.stride = stride;
  n.padding = padding;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  const Shape in = shape_of(src);
  n.inputs = {src};
  n.out_shape = {in.channels, conv_out(in.height, kernel, stride, padding),
                 conv_out(in.width, kernel, stride, padding)};
  if (n.out_shape.height <= 0 || n.out_shape.width <= 0) {
    throw ConfigError("layer '" + name + "' produces an empty output from input " + in.str());
  }
  return push(std::move(n), src);
}

int Network::adaptive_avg_pool(const std::string& name, int out_h, int out_w,
                               std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::adaptive_avg_pool;
  n.pool_height = out_h;
  n.pool_width = out_w;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  n.inputs = {src};
  n.out_shape = {shape_of(src).channels, out_h, out_w};
  return push(std::move(n), src);
}

int Network::batch_norm(const std::string& name, const std::string& key, std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::batch_norm;
  n.param_key = key;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  n.inputs = {src};
  n.out_shape = shape_of(src);
  n.scale = Eigen::VectorXd::Ones(n.out_shape.channels);
  n.shift = Eigen::VectorXd::Zero(n.out_shape.channels);
  return push(std::move(n), src);
}

int Network::linear(const std::string& name, const std::string& key, int out_features,
                    bool relu_after, std::optional<int> input) {
  Node n;
  n.name = name;
  n.kind = OpKind::linear;
  n.param_key = key;
  n.relu_after = relu_after;
  const int src = input.value_or(nodes_.empty() ? Node::kNetworkInput : output_index());
  n.inputs = {src};
  n.out_shape = {out_features, 1, 1};
  n.weight = RowMatrix::Zero(out_features, static_cast<Eigen::Index>(shape_of(src).size()));
  n.bias = Eigen::VectorXd::Zero(out_features);
  return push(std::move(n), src);
}

int Network::add(const std::string& name, int a, int b) {
  if (!(shape_of(a) == shape_of(b))) {
    throw ConfigError("layer '" + name + "' adds mismatched shapes " + shape_of(a).str() + " and " +
                      shape_of(b).str());
  }
  Node n;
  n.name = name;
  n.kind = OpKind::add;
  n.inputs = {a, b};
  n.out_shape = shape_of(a);
  return push(std::move(n), std::nullopt);
}

namespace {

const ParamArray& fetch(const WeightStore& store, const std::string& key,
                        std::int64_t expected_numel) {
  auto it = store.find(key);
  if (it == store.end()) throw ConfigError("weights are missing parameter '" + key + "'");
  if (it->second.numel() != expected_numel ||
      static_cast<std::int64_t>(it->second.values.size()) != expected_numel) {
    throw ConfigError("parameter '" + key + "' has " + std::to_string(it->second.numel()) +
                      " elements, expected " + std::to_string(expected_numel));
  }
  return it->second;
}

}  // namespace

void Network::load(const WeightStore& store) {
  for (auto& n : nodes_) {
    if (n.kind == OpKind::conv || n.kind == OpKind::linear) {
      const auto& w = fetch(store, n.param_key + ".weight", n.weight.size());
      n.weight = ConstRowMap(w.values.data(), n.weight.rows(), n.weight.cols());
      if (n.has_bias) {
        const auto& b = fetch(store, n.param_key + ".bias", n.bias.size());
        n.bias = Eigen::Map<const Eigen::VectorXd>(b.values.data(), n.bias.size());
      }
    } else if (n.kind == OpKind::batch_norm) {
      const auto c = n.scale.size();
      const auto& gamma = fetch(store, n.param_key + ".weight", c);
      const auto& beta = fetch(store, n.param_key + ".bias", c);
      const auto& mean = fetch(store, n.param_key + ".running_mean", c);
      const auto& var = fetch(store, n.param_key + ".running_var", c);
      constexpr double kEps = 1e-5;
      for (Eigen::Index i = 0; i < c; ++i) {
        n.scale[i] = gamma.values[i] / std::sqrt(var.values[i] + kEps);
        n.shift[i] = beta.values[i] - mean.values[i] * n.scale[i];
      }
    }
  }
}

void Network::randomize(std::uint64_t seed) {
  SplitMix rng(seed);
  for (auto& n : nodes_) {
    if (n.kind == OpKind::conv || n.kind == OpKind::linear) {
      const double bound = std::sqrt(6.0 / static_cast<double>(n.weight.cols()));
      for (Eigen::Index i = 0; i < n.weight.size(); ++i) n.weight.data()[i] = bound * rng.symmetric();
      if (n.has_bias) {
        for (Eigen::Index i = 0; i < n.bias.size(); ++i) n.bias[i] = 0.1 * rng.symmetric();
      }
    } else if (n.kind == OpKind::batch_norm) {
      for (Eigen::Index i = 0; i < n.scale.size(); ++i) {
        n.scale[i] = 1.0 + 0.1 * rng.symmetric();
        n.shift[i] = 0.1 * rng.symmetric();
      }
    }
  }
}

WeightStore Network::export_weights() const {
  WeightStore store;
  auto put = [&](const std::string& key, std::vector<std::int64_t> shape, const double* p,
                 std::size_t count) { store[key] = ParamArray{std::move(shape), {p, p + count}}; };
  for (const auto& n : nodes_) {
    if (n.kind == OpKind::conv) {
      const std::int64_t c_in = n.weight.cols() / (n.kernel * n.kernel);
      put(n.param_key + ".weight", {n.weight.rows(), c_in, n.kernel, n.kernel}, n.weight.data(),
          n.weight.size());
      if (n.has_bias) put(n.param_key + ".bias", {n.bias.size()}, n.bias.data(), n.bias.size());
    } else if (n.kind == OpKind::linear) {
      put(n.param_key + ".weight", {n.weight.rows(), n.weight.cols()}, n.weight.data(),
          n.weight.size());
      put(n.param_key + ".bias", {n.bias.size()}, n.bias.data(), n.bias.size());
    } else if (n.kind == OpKind::batch_norm) {
      const auto c = n.scale.size();
      std::vector<double> zeros(c, 0.0);
      std::vector<double> ones(c, 1.0 - 1e-5);
      put(n.param_key + ".weight", {c}, n.scale.data(), c);
      put(n.param_key + ".bias", {c}, n.shift.data(), c);
      put(n.param_key + ".running_mean", {c}, zeros.data(), c);
      put(n.param_key + ".running_var", {c}, ones.data(), c);
    }
  }
  return store;
}

std::vector<Tensor> Network::forward(const Tensor& input, std::optional<int> last) const {
  require_same_shape(input.shape(), input_shape_, "network input");
  const int stop = last.value_or(output_index());
  if (stop < 0 || stop > output_index()) throw InputError("forward: node index out of range");

  std::vector<Tensor> acts;
  acts.reserve(static_cast<std::size_t>(stop) + 1);
  auto in_of = [&](int idx) -> const Tensor& {
    return idx == Node::kNetworkInput ? input : acts[static_cast<std::size_t>(idx)];
  };

  for (int i = 0; i <= stop; ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& x = in_of(n.inputs[0]);
    Tensor y(n.out_shape);
    switch (n.kind) {
      case OpKind::conv: {
        const RowMatrix cols =
            im2col(x, n.kernel, n.stride, n.padding, n.out_shape.height, n.out_shape.width);
        RowMap out(y.data(), n.out_shape.channels, static_cast<Eigen::Index>(n.out_shape.plane()));
        out.noalias() = n.weight * cols;
        out.colwise() += n.bias;
        break;
      }
      case OpKind::relu:
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::max(x[k], 0.0);
        break;
      case OpKind::max_pool:
        for (int c = 0; c < n.out_shape.channels; ++c)
          for (int oy = 0; oy < n.out_shape.height; ++oy)
            for (int ox = 0; ox < n.out_shape.width; ++ox) {
              const auto arg = window_argmax(x, c, oy, ox, n.kernel, n.stride, n.padding);
              y.at(c, oy, ox) = arg < 0 ? 0.0 : x[static_cast<std::size_t>(arg)];
            }
        break;
      case OpKind::adaptive_avg_pool:
        for (int c = 0; c < n.out_shape.channels; ++c)
          for (int oy = 0; oy < n.pool_height; ++oy) {
            const auto [y0, y1] = adaptive_bin(oy, x.height(), n.pool_height);
            for (int ox = 0; ox < n.pool_width; ++ox) {
              const auto [x0, x1] = adaptive_bin(ox, x.width(), n.pool_width);
              double s = 0.0;
              for (int iy = y0; iy < y1; ++iy)
                for (int ix = x0; ix < x1; ++ix) s += x.at(c, iy, ix);
              y.at(c, oy, ox) = s / static_cast<double>((y1 - y0) * (x1 - x0));
            }
          }
        break;
      case OpKind::batch_norm:
        for (int c = 0; c < n.out_shape.channels; ++c) {
          auto src = x.channel(c);
          auto dst = y.channel(c);
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] * n.scale[c] + n.shift[c];
        }
        break;
      case OpKind::linear: {
        Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::Map<Eigen::VectorXd> out(y.data(), static_cast<Eigen::Index>(y.size()));
        out.noalias() = n.weight * v + n.bias;
        break;
      }
      case OpKind::add: {
        const Tensor& b = in_of(n.inputs[1]);
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] + b[k];
        break;
      }
    }
    if (n.relu_after) {
      for (double& v : y.values()) v = std::max(v, 0.0);
    }
    acts.push_back(std::move(y));
  }
  return acts;
}

Tensor Network::backward(const Tensor& input, const std::vector<Tensor>& acts, int node,
                         const Tensor& seed) const {
  if (node < 0 || node >= static_cast<int>(acts.size())) {
    throw InternalError("backward: activations do not cover node " + std::to_string(node));
  }
  require_same_shape(seed.shape(), nodes_[static_cast<std::size_t>(node)].out_shape,
                     "backward seed");

  std::vector<Tensor> grads(static_cast<std::size_t>(node) + 1);
  grads[static_cast<std::size_t>(node)] = seed;
  Tensor grad_input(input_shape_);

  auto accumulate = [&](int idx, const Tensor& g) {
    Tensor& dst = idx == Node::kNetworkInput ? grad_input : grads[static_cast<std::size_t>(idx)];
    if (dst.empty()) {
      dst = g;
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
  };
  auto in_of = [&](int idx) -> const Tensor& {
    return idx == Node::kNetworkInput ? input : acts[static_cast<std::size_t>(idx)];
  };

  for (int i = node; i >= 0; --i) {
    Tensor& g_out = grads[static_cast<std::size_t>(i)];
    if (g_out.empty()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& y = acts[static_cast<std::size_t>(i)];
    const Tensor& x = in_of(n.inputs[0]);

    if (n.relu_after) {
      for (std::size_t k = 0; k < g_out.size(); ++k)
        if (y[k] <= 0.0) g_out[k] = 0.0;
    }

    Tensor g_in(shape_of(n.inputs[0]));
    switch (n.kind) {
      case OpKind::conv: {
        ConstRowMap gy(g_out.data(), n.out_shape.channels,
                       static_cast<Eigen::Index>(n.out_shape.plane()));
        const RowMatrix gcols = n.weight.transpose() * gy;
        col2im_add(gcols, n.kernel, n.stride, n.padding, n.out_shape.height, n.out_shape.width,
                   g_in);
        break;
      }
      case OpKind::relu:
        for (std::size_t k = 0; k < g_in.size(); ++k) g_in[k] = x[k] > 0.0 ? g_out[k] : 0.0;
        break;
      case OpKind::max_pool:
        for (int c = 0; c < n.out_shape.channels; ++c)
          for (int oy = 0; oy < n.out_shape.height; ++oy)
            for (int ox = 0; ox < n.out_shape.width; ++ox) {
              const auto arg = window_argmax(x, c, oy, ox, n.kernel, n.stride, n.padding);
              if (arg >= 0) g_in[static_cast<std::size_t>(arg)] += g_out.at(c, oy, ox);
            }
        break;
      case OpKind::adaptive_avg_pool:
        for (int c = 0; c < n.out_shape.channels; ++c)
          for (int oy = 0; oy < n.pool_height; ++oy) {
            const auto [y0, y1] = adaptive_bin(oy, x.height(), n.pool_height);
            for (int ox = 0; ox < n.pool_width; ++ox) {
              const auto [x0, x1] = adaptive_bin(ox, x.width(), n.pool_width);
              const double share =
                  g_out.at(c, oy, ox) / static_cast<double>((y1 - y0) * (x1 - x0));
              for (int iy = y0; iy < y1; ++iy)
                for (int ix = x0; ix < x1; ++ix) g_in.at(c, iy, ix) += share;
            }
          }
        break;
      case OpKind::batch_norm:
        for (int c = 0; c < n.out_shape.channels; ++c) {
          auto src = g_out.channel(c);
          auto dst = g_in.channel(c);
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] * n.scale[c];
        }
        break;
      case OpKind::linear: {
        Eigen::Map<const Eigen::VectorXd> gy(g_out.data(), static_cast<Eigen::Index>(g_out.size()));
        Eigen::Map<Eigen::VectorXd> gx(g_in.data(), static_cast<Eigen::Index>(g_in.size()));
        gx.noalias() = n.weight.transpose() * gy;
        break;
      }
      case OpKind::add:
        accumulate(n.inputs[1], g_out);
        g_in = g_out;
        break;
    }
    accumulate(n.inputs[0], g_in);
    g_out = Tensor();  // release memory early
  }
  return grad_input;
}

}  // namespace gfi
