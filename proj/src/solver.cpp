#include "gfi/solver.hpp"

#include <chrono>
#include <cmath>

#include "gfi/errors.hpp"
#include "gfi/mask.hpp"

namespace gfi {

void InterpretConfig::validate() const {
  if (stage1_iters < 0 || stage2_iters < 0) throw ConfigError("iteration counts must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (lr_halving_period < 1) throw ConfigError("learning-rate halving period must be >= 1");
  if (gamma < 0.0 || delta < 0.0 || lambda < 0.0) {
    throw ConfigError("gamma, delta and lambda must be >= 0");
  }
  if (omega_init < 0.0) throw ConfigError("initial mask weight must be >= 0");
  if (baseline.kind == BaselineKind::gaussian_blur && baseline.blur_radius < 1) {
    throw ConfigError("blur radius must be >= 1, got " + std::to_string(baseline.blur_radius));
  }
}

AdamOptimizer::AdamOptimizer(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InternalError("adam: parameter/gradient size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double stage2_learning_rate(double lr, int period, int iteration) {
  const int halvings = (iteration - 1) / period;
  return std::ldexp(lr, -halvings);
}

Solver::Solver(const ModelBackend& model, InterpretConfig config)
    : model_(model), config_(std::move(config)) {
  config_.validate();
  layers_ = config_.layer_spec.value_or(model.layer_spec());
  validate_layer_spec(model.network(), layers_);
}

ExplanationContext Solver::prepare(const ImageTensor& x) const {
  require_same_shape(x.normalized.shape(), model_.input_shape(), "explain input");
  BaselineConfig bc = config_.baseline;
  if (bc.kind == BaselineKind::gaussian_noise && bc.noise_seed == 0) bc.noise_seed = config_.seed;
  ExplanationContext ctx;
  ctx.input = x;
  ctx.baseline = make_baseline(bc, x, model_.preprocessing());
  ctx.layers = layers_;
  auto snap = model_.forward_with_taps(x.normalized, {layers_.base_layer, layers_.inversion_layer});
  ctx.base_activations = snap.at(layers_.base_layer);
  ctx.target = InversionTarget{layers_.inversion_layer, snap.at(layers_.inversion_layer)};
  return ctx;
}

namespace {

void check_finite(const Evaluation& e, const char* stage, int iteration) {
  bool ok = std::isfinite(e.loss.total);
  for (double g : e.gradient) ok = ok && std::isfinite(g);
  if (!ok) {
    throw NumericalError(std::string(stage) + ": non-finite loss or gradient at iteration " +
                         std::to_string(iteration));
  }
}

template <typename Objective, typename LrFn>
StageResult optimize(const Objective& objective, const ExplanationContext& ctx, MaskWeights weights,
                     int iterations, LrFn lr_for, const char* stage) {
  StageResult out;
  AdamOptimizer adam(weights.size());
  out.trace.reserve(static_cast<std::size_t>(iterations));
  for (int t = 1; t <= iterations; ++t) {
    Evaluation e = objective.evaluate(weights);
    check_finite(e, stage, t);
    const double lr = lr_for(t);
    out.trace.push_back(TraceEntry{t, lr, e.loss, e.mask.degenerate});
    out.degenerate = out.degenerate || e.mask.degenerate;
    adam.step(weights.values, e.gradient, lr);
    weights = clip_nonneg(weights);
  }
  out.mask = build_mask(weights, ctx.base_activations, ctx.input.normalized.height(),
                        ctx.input.normalized.width());
  out.degenerate = out.degenerate || out.mask.degenerate;
  out.weights = std::move(weights);
  return out;
}

}  // namespace

StageResult Solver::run_stage1(const ExplanationContext& ctx) const {
  InversionObjective objective(model_, ctx.input, ctx.base_activations, ctx.target, ctx.baseline,
                               config_.gamma, config_.mean_squared_inversion);
  const auto init =
      MaskWeights::constant(static_cast<std::size_t>(ctx.layers.n_channels), config_.omega_init);
  const double lr = config_.lr;
  return optimize(objective, ctx, init, config_.stage1_iters, [lr](int) { return lr; }, "stage 1");
}

StageResult Solver::run_stage2(const ExplanationContext& ctx, int target_class,
                               const MaskWeights& initial) const {
  for (double w : initial.values) {
    if (w < 0.0) throw InputError("stage 2 needs nonnegative initial weights");
  }
  TargetObjective objective(model_, ctx.input, ctx.base_activations, ctx.baseline, target_class,
                            config_.lambda, config_.delta);
  const double lr = config_.lr;
  const int period = config_.lr_halving_period;
  return optimize(
      objective, ctx, initial, config_.stage2_iters,
      [lr, period](int t) { return stage2_learning_rate(lr, period, t); }, "stage 2");
}

ExplanationResult Solver::explain(const ImageTensor& x, std::optional<int> target_class) const {
  const auto start = std::chrono::steady_clock::now();
  ExplanationResult result;
  result.prediction = model_.class_prob(x.normalized).top();
  result.target_class = target_class.value_or(result.prediction.label);
  model_.check_class(result.target_class);

  const ExplanationContext ctx = prepare(x);
  StageResult s1 = run_stage1(ctx);
  StageResult s2 = run_stage2(ctx, result.target_class, s1.weights);

  result.mask = std::move(s2.mask);
  result.weights = std::move(s2.weights);
  result.stage1_trace = std::move(s1.trace);
  result.stage2_trace = std::move(s2.trace);
  result.degenerate = s1.degenerate || s2.degenerate;
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace gfi
