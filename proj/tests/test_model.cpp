#include <doctest.h>

#include <cmath>
#include <thread>

#include "fixtures.hpp"
#include "gfi/errors.hpp"
#include "gfi/mask.hpp"
#include "gfi/model.hpp"
#include "gfi/objectives.hpp"
#include "gfi/perturbation.hpp"

using namespace gfi;
using gfi::testing::relative_error;
using gfi::testing::toy_image;
using gfi::testing::toy_model;

namespace {

ArchitectureEntry custom_entry(Shape input, int classes) {
  ArchitectureEntry e;
  e.name = "custom";
  e.family = "custom";
  e.input = input;
  e.num_classes = classes;
  e.preprocessing.mean.assign(static_cast<std::size_t>(input.channels), 0.0);
  e.preprocessing.stddev.assign(static_cast<std::size_t>(input.channels), 1.0);
  return e;
}

// Single linear layer over the flattened input; also serves as the base/inversion tap.
ModelBackend linear_model(const Tensor& weights_rows, const std::vector<double>& bias, Shape input) {
  const int classes = static_cast<int>(bias.size());
  ArchitectureEntry e = custom_entry(input, classes);
  Network net(input);
  net.linear("fc", "fc", classes, false);
  WeightStore ws;
  ws["fc.weight"] = ParamArray{{classes, static_cast<std::int64_t>(input.size())},
                               {weights_rows.values().begin(), weights_rows.values().end()}};
  ws["fc.bias"] = ParamArray{{classes}, bias};
  net.load(ws);
  e.layers = LayerSpec{"fc", "fc", classes, 1, 1};
  return ModelBackend(e, std::move(net));
}

std::vector<double> finite_difference(const std::function<double(const Tensor&)>& f, Tensor x,
                                      double h) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double up = f(x);
    x[k] = keep - h;
    const double down = f(x);
    x[k] = keep;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("forward_with_taps: empty request gives an empty snapshot") {
  const auto model = toy_model();
  const auto snap = model->forward_with_taps(toy_image(1).normalized, {});
  CHECK(snap.layers.empty());
}

TEST_CASE("forward_with_taps is deterministic") {
  const auto model = toy_model();
  const auto x = toy_image(7);
  const auto a = model->forward_with_taps(x.normalized, {"conv2", "pool2", "fc"});
  const auto b = model->forward_with_taps(x.normalized, {"conv2", "pool2", "fc"});
  REQUIRE(a.layers.size() == 3);
  for (const auto& [name, t] : a.layers) CHECK(t == b.at(name));
  CHECK(model->class_prob(x.normalized).probabilities == model->class_prob(x.normalized).probabilities);
}

TEST_CASE("hand-computed convolution: all-ones 3x3 kernel on all-ones 3x3 input") {
  Network net({1, 3, 3});
  net.conv("conv", "conv", 1, 3, 1, 1, false);
  WeightStore ws;
  ws["conv.weight"] = ParamArray{{1, 1, 3, 3}, std::vector<double>(9, 1.0)};
  ws["conv.bias"] = ParamArray{{1}, {0.0}};
  net.load(ws);
  ArchitectureEntry e = custom_entry({1, 3, 3}, 1);
  e.layers = LayerSpec{"conv", "conv", 1, 3, 3};
  ModelBackend model(e, std::move(net));
  const auto snap = model.forward_with_taps(Tensor({1, 3, 3}, 1.0), {"conv"});
  const Tensor& out = snap.at("conv");
  CHECK(out.at(0, 1, 1) == 9.0);
  CHECK(out.at(0, 0, 0) == 4.0);
  CHECK(out.at(0, 0, 1) == 6.0);
}

TEST_CASE("forward_with_taps errors") {
  const auto model = toy_model();
  SUBCASE("unknown layer names the layer") {
    try {
      model->forward_with_taps(toy_image(1).normalized, {"conv9"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("conv9") != std::string::npos);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(model->forward_with_taps(Tensor({3, 8, 8}), {"conv2"}), InputError);
  }
}

TEST_CASE("class_prob: softmax examples") {
  SUBCASE("equal logits over four classes") {
    auto model = linear_model(Tensor({4, 1, 2}, 0.0), {0.0, 0.0, 0.0, 0.0}, {1, 1, 2});
    const auto p = model.class_prob(Tensor({1, 1, 2}, 0.3));
    for (double v : p.probabilities) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("logits (0, ln 3)") {
    auto model = linear_model(Tensor({2, 1, 1}, 0.0), {0.0, std::log(3.0)}, {1, 1, 1});
    const auto p = model.class_prob(Tensor({1, 1, 1}, 0.0));
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("normalized and nonnegative on the toy network") {
    const auto model = toy_model();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = model->class_prob(toy_image(seed).normalized);
      double s = 0.0;
      for (double v : p.probabilities) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("grad_of: closed-form objectives") {
  SUBCASE("sum") {
    DifferentiableObjective sum = [](const MaskWeights& w) {
      double s = 0.0;
      for (double v : w.values) s += v;
      return ObjectiveValue{s, std::vector<double>(w.size(), 1.0)};
    };
    CHECK(grad_of(sum, MaskWeights({0.3, -1.0, 2.0, 0.0})) == std::vector<double>{1, 1, 1, 1});
  }
  SUBCASE("squared norm") {
    DifferentiableObjective sq = [](const MaskWeights& w) {
      ObjectiveValue out;
      for (double v : w.values) {
        out.value += v * v;
        out.gradient.push_back(2 * v);
      }
      return out;
    };
    const auto g = grad_of(sq, MaskWeights({0.1, 0.1}));
    CHECK(g[0] == doctest::Approx(0.2));
    CHECK(g[1] == doctest::Approx(0.2));
  }
  SUBCASE("missing or broken gradients are internal errors") {
    DifferentiableObjective none = [](const MaskWeights&) { return ObjectiveValue{1.0, {}}; };
    CHECK_THROWS_AS(grad_of(none, MaskWeights({1.0})), InternalError);
    DifferentiableObjective nan = [](const MaskWeights&) {
      return ObjectiveValue{1.0, {std::nan("")}};
    };
    CHECK_THROWS_AS(grad_of(nan, MaskWeights({1.0})), InternalError);
    CHECK_THROWS_AS(grad_of(DifferentiableObjective{}, MaskWeights({1.0})), InternalError);
  }
}

TEST_CASE("grad_of: inversion loss on the toy network matches central differences") {
  const auto model = toy_model();
  const auto x = toy_image(3);
  const auto ctx_acts = model->forward_with_taps(x.normalized, {"conv2"});
  const auto p = make_baseline({}, x, model->preprocessing());
  InversionObjective obj(*model, x, ctx_acts.at("conv2"), make_inversion_target(*model, x, "pool2"),
                         p, 10.0);
  const MaskWeights w = MaskWeights::constant(4, 0.1);
  const auto g = grad_of(obj.as_objective(), w);
  std::vector<double> fd(4);
  for (std::size_t i = 0; i < 4; ++i) {
    MaskWeights up = w, down = w;
    up[i] += 1e-4;
    down[i] -= 1e-4;
    fd[i] = (obj.evaluate(up).loss.total - obj.evaluate(down).loss.total) / 2e-4;
  }
  CHECK(relative_error(g, fd) < 1e-4);
}

TEST_CASE("vanilla gradient saliency") {
  SUBCASE("linear model: map depends only on |w|") {
    Tensor w({1, 2, 3}, std::vector<double>{0.5, -2.0, 1.0, 0.0, -1.0, 1.5});
    // Second logit is constant so only row 0 matters for class 0.
    Tensor rows({2, 1, 6}, 0.0);
    for (std::size_t k = 0; k < 6; ++k) rows[k] = w[k];
    auto model = linear_model(rows, {0.0, 0.0}, {1, 2, 3});
    ImageTensor a{Tensor({1, 2, 3}, 0.2), Tensor({1, 2, 3}, 0.2)};
    ImageTensor b{Tensor({1, 2, 3}, -3.0), Tensor({1, 2, 3}, 0.0)};
    const auto sa = model.vanilla_gradient_saliency(a, 0);
    const auto sb = model.vanilla_gradient_saliency(b, 0);
    CHECK(sa.grid == sb.grid);
    Tensor absw = Tensor::grid(2, 3);
    for (std::size_t k = 0; k < 6; ++k) absw[k] = std::abs(w[k]);
    CHECK(max_abs_diff(sa.grid, minmax_normalize(absw)) < 1e-15);
  }
  SUBCASE("shape contract and finite differences on the toy network") {
    const auto model = toy_model();
    const auto x = toy_image(11);
    const auto s = model->vanilla_gradient_saliency(x, 1);
    CHECK(s.height() == 8);
    CHECK(s.width() == 8);
    Tensor grad;
    model->logit_with_grad(x.normalized, 1, grad);
    const auto fd = finite_difference(
        [&](const Tensor& t) { return model->logits(t)[1]; }, x.normalized, 1e-5);
    CHECK(relative_error({grad.values().begin(), grad.values().end()}, fd) < 1e-3);
    Tensor map = Tensor::grid(8, 8);
    for (std::size_t k = 0; k < 64; ++k) map[k] = std::abs(fd[k]);
    CHECK(max_abs_diff(s.grid, minmax_normalize(map)) < 1e-3);
  }
}

TEST_CASE("class probability and cross-entropy gradients match finite differences") {
  const auto model = toy_model();
  const auto x = toy_image(5);
  Tensor gp, gce;
  model->class_prob_with_grad(x.normalized, 2, gp);
  model->cross_entropy_with_grad(x.normalized, 2, gce);
  const auto fdp = finite_difference([&](const Tensor& t) { return model->class_prob(t)[2]; },
                                     x.normalized, 1e-5);
  const auto fdce = finite_difference(
      [&](const Tensor& t) { return -std::log(model->class_prob(t)[2]); }, x.normalized, 1e-5);
  CHECK(relative_error({gp.values().begin(), gp.values().end()}, fdp) < 1e-5);
  CHECK(relative_error({gce.values().begin(), gce.values().end()}, fdce) < 1e-5);
}

TEST_CASE("registry layer specs agree with the built graphs") {
  const auto& reg = gfi::testing::registry();
  for (const auto& name : reg.names()) {
    CAPTURE(name);
    const auto& e = reg.get(name);
    const Network net = build_network(e);
    CHECK_NOTHROW(validate_layer_spec(net, e.layers));
    CHECK(net.nodes().back().out_shape.channels == e.num_classes);
  }
  const auto& vgg = reg.get("vgg19");
  CHECK(vgg.layers == LayerSpec{"pool5", "conv5_4", 512, 14, 14});
  const Network net = build_network(vgg);
  CHECK(net.nodes()[net.index_of("pool5")].out_shape == Shape{512, 7, 7});
  CHECK(net.nodes()[net.index_of("pool4")].out_shape == Shape{512, 14, 14});
  CHECK(reg.get("alexnet").layers == LayerSpec{"pool5", "pool5", 256, 6, 6});
  CHECK(reg.get("resnet18").layers == LayerSpec{"avgpool", "layer4", 512, 7, 7});
}

TEST_CASE("registry errors") {
  const auto& reg = gfi::testing::registry();
  try {
    reg.get("inception");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("vgg19") != std::string::npos);
    CHECK(msg.find("resnet18") != std::string::npos);
  }
  ArchitectureEntry bad = reg.get("toy");
  bad.layers.n_channels = 5;
  CHECK_THROWS_AS(ModelBackend(bad, build_network(bad)), ConfigError);
  CHECK_THROWS_AS(ArchitectureRegistry::from_json_text("{\"x\": {\"l0\": 1}}"), ConfigError);
}

TEST_CASE("residual and strided graphs backpropagate correctly") {
  // Small inputs keep the full-size topologies cheap; the graphs are otherwise unchanged.
  for (const std::string family : {"resnet18", "alexnet"}) {
    CAPTURE(family);
    ArchitectureEntry e = gfi::testing::registry().get(family);
    e.input = family == "resnet18" ? Shape{3, 32, 32} : Shape{3, 67, 67};
    e.num_classes = 5;
    Network net = build_network(e);
    net.randomize(99);
    e.layers = LayerSpec{};
    e.layers.inversion_layer = e.layers.base_layer = family == "resnet18" ? "layer4" : "pool5";
    const Shape base = net.nodes()[net.index_of(e.layers.base_layer)].out_shape;
    e.layers.n_channels = base.channels;
    e.layers.base_height = base.height;
    e.layers.base_width = base.width;
    ModelBackend model(e, std::move(net));

    gfi::testing::Uniform u(4);
    Tensor x(e.input);
    for (double& v : x.values()) v = u.in(-1.0, 1.0);
    Tensor grad;
    model.logit_with_grad(x, 3, grad);
    // Spot-check a spread of input coordinates.
    std::vector<double> analytic, numeric;
    for (std::size_t k = 0; k < x.size(); k += x.size() / 23) {
      Tensor up = x, down = x;
      up[k] += 1e-5;
      down[k] -= 1e-5;
      analytic.push_back(grad[k]);
      numeric.push_back((model.logits(up)[3] - model.logits(down)[3]) / 2e-5);
    }
    CHECK(relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("shared model is safe to evaluate from several threads") {
  const auto model = toy_model();
  const auto x = toy_image(21);
  const auto expected = model->class_prob(x.normalized).probabilities;
  std::vector<std::vector<double>> results(4);
  {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < results.size(); ++i)
      workers.emplace_back([&, i] {
        for (int rep = 0; rep < 50; ++rep) results[i] = model->class_prob(x.normalized).probabilities;
      });
  }
  for (const auto& r : results) CHECK(r == expected);
}

TEST_CASE("safetensors round trip preserves parameters") {
  const auto dir = gfi::testing::scratch_dir("weights");
  const auto store = load_safetensors(gfi::testing::toy_weights_path());
  save_safetensors(dir / "copy.safetensors", store);
  const auto again = load_safetensors(dir / "copy.safetensors");
  REQUIRE(again.size() == store.size());
  for (const auto& [k, v] : store) {
    CHECK(again.at(k).shape == v.shape);
    CHECK(again.at(k).values == v.values);
  }
  Network net = build_network(gfi::testing::toy_entry());
  WeightStore missing = store;
  missing.erase("fc.bias");
  CHECK_THROWS_AS(net.load(missing), ConfigError);
}
