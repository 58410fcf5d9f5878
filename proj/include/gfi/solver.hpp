#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gfi/architecture.hpp"
#include "gfi/model.hpp"
#include "gfi/objectives.hpp"
#include "gfi/perturbation.hpp"

namespace gfi {

struct InterpretConfig {
  int stage1_iters = 10;
  int stage2_iters = 70;
  double lr = 1e-2;
  /// Stage-2 learning rate halves after every this many iterations.
  int lr_halving_period = 10;
  double gamma = 10.0;
  double delta = 1.0;
  double lambda = 1.0;
  double omega_init = 0.1;
  BaselineConfig baseline;
  /// Overrides the architecture's default taps when set.
  std::optional<LayerSpec> layer_spec;
  std::uint64_t seed = 0;
  /// Divide the inversion error by the feature count.
  bool mean_squared_inversion = false;

  /// Throws ConfigError on negative counts, non-positive lr or negative weights.
  void validate() const;
};

/// Adam with bias correction; moment state lives here, parameters are external.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
  int steps() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TraceEntry {
  /// 1-based iteration within its stage.
  int iteration = 0;
  double lr = 0.0;
  /// Loss at the weights the step started from.
  LossBreakdown loss;
  bool degenerate = false;
};

struct StageResult {
  MaskWeights weights;
  SaliencyMask mask;
  std::vector<TraceEntry> trace;
  bool degenerate = false;
};

struct ExplanationResult {
  SaliencyMask mask;
  MaskWeights weights;
  int target_class = -1;
  Prediction prediction;
  std::vector<TraceEntry> stage1_trace;
  std::vector<TraceEntry> stage2_trace;
  bool degenerate = false;
  double wall_time_seconds = 0.0;
};

/// Per-input state shared by both stages: the baseline, the detached
/// base-layer activations and the detached inversion target.
struct ExplanationContext {
  ImageTensor input;
  BaselineImage baseline;
  Tensor base_activations;
  InversionTarget target;
  LayerSpec layers;
};

/// Learning rate of stage-2 iteration t (1-based).
double stage2_learning_rate(double lr, int period, int iteration);

/// Two-stage mask optimization: guided feature inversion, then
/// class-discriminative fine-tuning. One Solver per run; not shared across threads.
class Solver {
 public:
  Solver(const ModelBackend& model, InterpretConfig config);

  const InterpretConfig& config() const { return config_; }

  ExplanationContext prepare(const ImageTensor& x) const;
  StageResult run_stage1(const ExplanationContext& ctx) const;
  StageResult run_stage2(const ExplanationContext& ctx, int target_class,
                         const MaskWeights& initial) const;
  /// Runs both stages. Without a target class the top-1 prediction is explained.
  ExplanationResult explain(const ImageTensor& x, std::optional<int> target_class = {}) const;

 private:
  const ModelBackend& model_;
  InterpretConfig config_;
  LayerSpec layers_;
};

}  // namespace gfi
