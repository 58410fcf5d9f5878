#include "gfi/model.hpp"

#include <algorithm>
#include <cmath>

#include "gfi/errors.hpp"
#include "gfi/mask.hpp"

namespace gfi {

const Tensor& ActivationSnapshot::at(const std::string& layer) const {
  auto it = layers.find(layer);
  if (it == layers.end()) throw ConfigError("snapshot has no layer '" + layer + "'");
  return it->second;
}

Prediction ClassScores::top() const {
  if (probabilities.empty()) return {};
  const auto it = std::max_element(probabilities.begin(), probabilities.end());
  return {static_cast<int>(it - probabilities.begin()), *it};
}

std::vector<double> grad_of(const DifferentiableObjective& objective, const MaskWeights& wrt) {
  if (!objective) throw InternalError("grad_of: empty objective");
  ObjectiveValue out = objective(wrt);
  if (out.gradient.size() != wrt.size()) {
    throw InternalError("grad_of: objective produced a gradient of length " +
                        std::to_string(out.gradient.size()) + " for " + std::to_string(wrt.size()) +
                        " weights");
  }
  for (double g : out.gradient) {
    if (!std::isfinite(g)) throw InternalError("grad_of: non-finite gradient entry");
  }
  return std::move(out.gradient);
}

void validate_layer_spec(const Network& network, const LayerSpec& spec) {
  network.index_of(spec.inversion_layer);
  const Shape& base = network.nodes()[network.index_of(spec.base_layer)].out_shape;
  if (base.channels != spec.n_channels || base.height != spec.base_height ||
      base.width != spec.base_width) {
    throw ConfigError("layer '" + spec.base_layer + "' produces " + base.str() +
                      " but the layer spec declares (" + std::to_string(spec.n_channels) + ", " +
                      std::to_string(spec.base_height) + ", " + std::to_string(spec.base_width) +
                      ")");
  }
}

ModelBackend::ModelBackend(ArchitectureEntry entry, Network network)
    : entry_(std::move(entry)), network_(std::move(network)) {
  validate_layer_spec(network_, entry_.layers);
}

std::shared_ptr<const ModelBackend> ModelBackend::open(const ArchitectureEntry& entry,
                                                       const std::filesystem::path& weights) {
  Network net = build_network(entry);
  net.load(load_safetensors(weights));
  return std::make_shared<const ModelBackend>(entry, std::move(net));
}

std::shared_ptr<const ModelBackend> ModelBackend::with_random_weights(const ArchitectureEntry& entry,
                                                                      std::uint64_t seed) {
  Network net = build_network(entry);
  net.randomize(seed);
  return std::make_shared<const ModelBackend>(entry, std::move(net));
}

int ModelBackend::num_classes() const {
  return network_.nodes().back().out_shape.channels;
}

LayerSpec ModelBackend::layer_spec_for(const std::string& inversion_layer,
                                       const std::string& base_layer) const {
  network_.index_of(inversion_layer);
  const Shape& s = network_.nodes()[network_.index_of(base_layer)].out_shape;
  return LayerSpec{inversion_layer, base_layer, s.channels, s.height, s.width};
}

void ModelBackend::check_class(int c) const {
  if (c < 0 || c >= num_classes()) {
    throw InputError("class index " + std::to_string(c) + " outside [0, " +
                     std::to_string(num_classes()) + ")");
  }
}

ActivationSnapshot ModelBackend::forward_with_taps(const Tensor& x,
                                                   const std::set<std::string>& layers) const {
  ActivationSnapshot snap;
  if (layers.empty()) return snap;
  std::map<std::string, int> wanted;
  int last = 0;
  for (const auto& name : layers) {
    const int idx = network_.index_of(name);
    wanted[name] = idx;
    last = std::max(last, idx);
  }
  auto acts = network_.forward(x, last);
  for (const auto& [name, idx] : wanted) snap.layers[name] = acts[static_cast<std::size_t>(idx)];
  return snap;
}

std::vector<double> ModelBackend::logits(const Tensor& x) const {
  auto acts = network_.forward(x);
  const auto v = acts.back().values();
  return {v.begin(), v.end()};
}

ClassScores ModelBackend::class_prob(const Tensor& x) const { return {softmax(logits(x))}; }

Tensor ModelBackend::pullback(const Tensor& x, const std::string& layer,
                              const std::function<Tensor(const Tensor&)>& seed_for) const {
  const int idx = network_.index_of(layer);
  auto acts = network_.forward(x, idx);
  const Tensor seed = seed_for(acts[static_cast<std::size_t>(idx)]);
  return network_.backward(x, acts, idx, seed);
}

namespace {
enum Mode { kProbability = 0, kLogit = 1, kCrossEntropy = 2 };
}

double ModelBackend::output_with_grad(const Tensor& x, int c, Tensor& grad, int mode) const {
  check_class(c);
  const int out = network_.output_index();
  auto acts = network_.forward(x);
  const auto z = acts.back().values();
  const auto p = softmax(z);
  Tensor seed(acts.back().shape());
  double value = 0.0;
  switch (mode) {
    case kProbability:
      // d p_c / d z_j = p_c (1[j=c] - p_j)
      value = p[c];
      for (std::size_t j = 0; j < p.size(); ++j) seed[j] = -p[c] * p[j];
      seed[static_cast<std::size_t>(c)] += p[c];
      break;
    case kLogit:
      value = z[static_cast<std::size_t>(c)];
      seed[static_cast<std::size_t>(c)] = 1.0;
      break;
    case kCrossEntropy: {
      const double peak = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (double v : z) total += std::exp(v - peak);
      value = -(z[static_cast<std::size_t>(c)] - peak - std::log(total));
      for (std::size_t j = 0; j < p.size(); ++j) seed[j] = p[j];
      seed[static_cast<std::size_t>(c)] -= 1.0;
      break;
    }
    default:
      throw InternalError("unknown output mode");
  }
  grad = network_.backward(x, acts, out, seed);
  return value;
}

double ModelBackend::class_prob_with_grad(const Tensor& x, int c, Tensor& grad) const {
  return output_with_grad(x, c, grad, kProbability);
}
double ModelBackend::logit_with_grad(const Tensor& x, int c, Tensor& grad) const {
  return output_with_grad(x, c, grad, kLogit);
}
double ModelBackend::cross_entropy_with_grad(const Tensor& x, int c, Tensor& grad) const {
  return output_with_grad(x, c, grad, kCrossEntropy);
}

SaliencyMask ModelBackend::vanilla_gradient_saliency(const ImageTensor& x, int c) const {
  Tensor grad;
  logit_with_grad(x.normalized, c, grad);
  Tensor map = Tensor::grid(grad.height(), grad.width());
  for (int ch = 0; ch < grad.channels(); ++ch)
    for (int y = 0; y < grad.height(); ++y)
      for (int xx = 0; xx < grad.width(); ++xx)
        map.at(0, y, xx) = std::max(map.at(0, y, xx), std::abs(grad.at(ch, y, xx)));
  bool degenerate = false;
  Tensor normalized = minmax_normalize(map, &degenerate);
  return SaliencyMask{std::move(normalized), {}, degenerate};
}

}  // namespace gfi
