#include <doctest.h>

#include <array>
#include <cmath>

#include "fixtures.hpp"
#include "gfi/errors.hpp"
#include "gfi/mask.hpp"
#include "gfi/objectives.hpp"

using namespace gfi;
using gfi::testing::relative_error;
using gfi::testing::toy_entry;
using gfi::testing::toy_image;
using gfi::testing::toy_model;

namespace {

struct ToyCase {
  ImageTensor x;
  BaselineImage p;
  Tensor base;
  InversionTarget target;
  oracle::OracleProblem prob;

  explicit ToyCase(std::uint64_t seed)
      : x(toy_image(seed)),
        p(make_baseline(BaselineConfig{}, x, toy_entry().preprocessing)),
        base(toy_model()
                 ->forward_with_taps(x.normalized, {toy_entry().layers.base_layer})
                 .at(toy_entry().layers.base_layer)),
        target(make_inversion_target(*toy_model(), x, toy_entry().layers.inversion_layer)),
        prob(gfi::testing::oracle_problem(x)) {}
};

std::array<double, 4> as_array(const MaskWeights& w) { return {w[0], w[1], w[2], w[3]}; }

std::vector<double> central_difference(const std::function<double(const MaskWeights&)>& f,
                                       MaskWeights w, double h) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double keep = w[i];
    w[i] = keep + h;
    const double up = f(w);
    w[i] = keep - h;
    const double down = f(w);
    w[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("l1 norm") {
  CHECK(l1_norm(MaskWeights::constant(7, 0.0)) == 0.0);
  CHECK(l1_norm(MaskWeights::constant(512, 0.1)) == doctest::Approx(51.2).epsilon(1e-12));
  CHECK(l1_norm(MaskWeights({-2.0, 3.0})) == 5.0);
}

TEST_CASE("inversion loss vanishes when the composite is the input") {
  ToyCase tc(1);
  const auto& model = *toy_model();
  InversionObjective obj(model, tc.x, tc.base, tc.target, tc.p, 0.0);
  const LossBreakdown at_one = obj.evaluate_mask(Tensor::grid(8, 8, 1.0), MaskWeights::constant(4, 0.3));
  CHECK(at_one.total == 0.0);

  // With p = x every mask reproduces the input.
  const BaselineImage same{tc.x.normalized, tc.x.pixels};
  InversionObjective flat(model, tc.x, tc.base, tc.target, same, 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    CHECK(flat.evaluate(gfi::testing::random_weights(4, seed)).loss.total < 1e-20);
}

TEST_CASE("target loss at the identity mask and with p = x") {
  ToyCase tc(2);
  const auto& model = *toy_model();
  const int c = 1;
  TargetObjective obj(model, tc.x, tc.base, tc.p, c, 1.0, 0.0);
  const LossBreakdown at_one =
      obj.evaluate_mask(Tensor::grid(8, 8, 1.0), MaskWeights::constant(4, 0.2));
  const double fx = model.class_prob(tc.x.normalized).probabilities[c];
  const double fp = model.class_prob(tc.p.normalized).probabilities[c];
  CHECK(at_one.total == doctest::Approx(-fx + fp).epsilon(1e-14));

  const BaselineImage same{tc.x.normalized, tc.x.pixels};
  for (double lambda : {0.0, 1.0, 2.5}) {
    TargetObjective eq(model, tc.x, tc.base, same, c, lambda, 0.0);
    const double got = eq.evaluate(gfi::testing::random_weights(4, 9)).loss.total;
    CHECK(got == doctest::Approx((lambda - 1.0) * fx).epsilon(1e-14));
  }
}

TEST_CASE("toy loss values match the direct evaluation at omega = 0.1") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ToyCase tc(seed);
    const auto& model = *toy_model();
    const MaskWeights w = MaskWeights::constant(4, 0.1);
    const std::array<double, 4> wa{0.1, 0.1, 0.1, 0.1};

    const LossBreakdown inv = inversion_loss(model, w, tc.x, tc.base, tc.target, tc.p, 10.0);
    CHECK(std::abs(inv.total - oracle::oracle_inversion(tc.prob, wa).total) < 1e-6);

    for (int c = 0; c < 3; ++c) {
      tc.prob.target_class = c;
      const LossBreakdown tgt = target_loss(model, w, tc.x, tc.base, tc.p, c, 1.0, 1.0);
      CHECK(std::abs(tgt.total - oracle::oracle_target(tc.prob, wa).total) < 1e-6);
    }
  }
}

TEST_CASE("breakdown totals equal their weighted components") {
  ToyCase tc(3);
  const auto& model = *toy_model();
  InversionObjective inv(model, tc.x, tc.base, tc.target, tc.p, 10.0);
  TargetObjective tgt(model, tc.x, tc.base, tc.p, 0, 1.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MaskWeights w = gfi::testing::random_weights(4, 30 + seed);
    const LossBreakdown a = inv.evaluate(w).loss;
    const LossBreakdown b = tgt.evaluate(w).loss;
    CHECK(std::abs(a.total - a.weighted_sum()) < 1e-6);
    CHECK(std::abs(b.total - b.weighted_sum()) < 1e-6);
    CHECK(a.component("l1_penalty") == doctest::Approx(l1_norm(w)));
    CHECK(a.components.count("inversion_error") == 1);
    CHECK(b.components.count("fg_activation") == 1);
    CHECK(b.components.count("bg_activation") == 1);
  }
}

TEST_CASE("gradients match central differences at 20 points") {
  ToyCase tc(4);
  const auto& model = *toy_model();
  InversionObjective inv(model, tc.x, tc.base, tc.target, tc.p, 10.0);
  TargetObjective tgt(model, tc.x, tc.base, tc.p, 2, 1.0, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MaskWeights w = gfi::testing::random_weights(4, 100 + seed);
    const auto fd_inv = central_difference(
        [&](const MaskWeights& v) { return inv.evaluate(v).loss.total; }, w, 1e-4);
    const auto fd_tgt = central_difference(
        [&](const MaskWeights& v) { return tgt.evaluate(v).loss.total; }, w, 1e-4);
    CHECK(relative_error(inv.evaluate(w).gradient, fd_inv) < 1e-4);
    CHECK(relative_error(tgt.evaluate(w).gradient, fd_tgt) < 1e-4);
    CHECK(relative_error(grad_of(inv.as_objective(), w), fd_inv) < 1e-4);
  }
}

TEST_CASE("gradients agree with the dual-number oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ToyCase tc(seed);
    const auto& model = *toy_model();
    InversionObjective inv(model, tc.x, tc.base, tc.target, tc.p, 10.0);
    TargetObjective tgt(model, tc.x, tc.base, tc.p, 0, 1.0, 1.0);
    const MaskWeights w = gfi::testing::random_weights(4, 200 + seed);
    const auto oi = oracle::oracle_inversion(tc.prob, as_array(w));
    const auto ot = oracle::oracle_target(tc.prob, as_array(w));
    CHECK(relative_error(inv.evaluate(w).gradient, {oi.grad.begin(), oi.grad.end()}) < 1e-9);
    CHECK(relative_error(tgt.evaluate(w).gradient, {ot.grad.begin(), ot.grad.end()}) < 1e-9);
  }
}

TEST_CASE("mask gradient from the shim matches differences on the mask") {
  ToyCase tc(6);
  const auto& model = *toy_model();
  InversionObjective inv(model, tc.x, tc.base, tc.target, tc.p, 0.0);
  gfi::testing::Uniform u(8);
  Tensor m = Tensor::grid(8, 8);
  for (double& v : m.values()) v = u();
  Tensor gm;
  inv.evaluate_mask(m, MaskWeights::constant(4, 0.0), &gm);
  const double h = 1e-6;
  std::vector<double> fd, an;
  for (std::size_t k = 0; k < m.size(); k += 5) {
    const double keep = m[k];
    m[k] = keep + h;
    const double up = inv.evaluate_mask(m, MaskWeights::constant(4, 0.0)).total;
    m[k] = keep - h;
    const double down = inv.evaluate_mask(m, MaskWeights::constant(4, 0.0)).total;
    m[k] = keep;
    fd.push_back((up - down) / (2 * h));
    an.push_back(gm[k]);
  }
  CHECK(relative_error(an, fd) < 1e-5);
}

TEST_CASE("inversion loss without the penalty is scale invariant") {
  ToyCase tc(7);
  const auto& model = *toy_model();
  const MaskWeights w = gfi::testing::random_weights(4, 11);
  const double ref = inversion_loss(model, w, tc.x, tc.base, tc.target, tc.p, 0.0).total;
  for (double c : {0.5, 3.0, 100.0}) {
    MaskWeights s = w;
    for (double& v : s.values) v *= c;
    CHECK(inversion_loss(model, s, tc.x, tc.base, tc.target, tc.p, 0.0).total ==
          doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("target loss stays within its bounds") {
  ToyCase tc(8);
  const auto& model = *toy_model();
  for (double lambda : {0.0, 1.0, 3.0})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const MaskWeights w = gfi::testing::random_weights(4, 300 + seed, 0.0, 2.0);
      const double total = target_loss(model, w, tc.x, tc.base, tc.p, 1, lambda, 1.0).total;
      CHECK(total >= -1.0);
      CHECK(total <= lambda + l1_norm(w));
    }
}

TEST_CASE("mean-squared switch divides the inversion error by the feature count") {
  ToyCase tc(9);
  const auto& model = *toy_model();
  const MaskWeights w = gfi::testing::random_weights(4, 12);
  InversionObjective raw(model, tc.x, tc.base, tc.target, tc.p, 0.0, false);
  InversionObjective mean(model, tc.x, tc.base, tc.target, tc.p, 0.0, true);
  CHECK(mean.evaluate(w).loss.total ==
        doctest::Approx(raw.evaluate(w).loss.total / static_cast<double>(tc.target.count())));
}

TEST_CASE("objective argument errors") {
  ToyCase tc(10);
  const auto& model = *toy_model();
  CHECK_THROWS_AS(TargetObjective(model, tc.x, tc.base, tc.p, 3, 1.0, 1.0), InputError);
  CHECK_THROWS_AS(TargetObjective(model, tc.x, tc.base, tc.p, -1, 1.0, 1.0), InputError);
  InversionTarget wrong{tc.target.layer, Tensor(Shape{4, 3, 3})};
  CHECK_THROWS_AS(InversionObjective(model, tc.x, tc.base, wrong, tc.p, 1.0), InputError);
  InversionObjective inv(model, tc.x, tc.base, tc.target, tc.p, 1.0);
  CHECK_THROWS_AS(inv.evaluate(MaskWeights::constant(5, 0.1)), InputError);
}
