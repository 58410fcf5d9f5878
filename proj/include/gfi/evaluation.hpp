#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gfi/model.hpp"
#include "gfi/tensor.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Inclusive pixel rectangle in the model-input frame.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  long long area() const {
    return static_cast<long long>(x_max - x_min + 1) * static_cast<long long>(y_max - y_min + 1);
  }
  bool contains(int row, int col) const {
    return col >= x_min && col <= x_max && row >= y_min && row <= y_max;
  }
  bool valid() const { return x_min <= x_max && y_min <= y_max; }
  bool operator==(const BoundingBox&) const = default;
};

struct Point {
  int row = 0;
  int col = 0;
  bool operator==(const Point&) const = default;
};

struct BinaryGrid {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryGrid() = default;
  BinaryGrid(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}
  bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v = true) {
    bits[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0;
  }
  std::size_t count() const;
};

struct Annotation {
  std::string label;
  BoundingBox box;
};

struct AnnotationRecord {
  std::string image_id;
  /// Image path as given in the annotation file (resolved by the loader).
  std::string image_path;
  int original_width = 0;
  int original_height = 0;
  std::vector<Annotation> annotations;
  std::optional<std::string> mask_path;

  std::vector<BoundingBox> boxes_for(const std::string& label) const;
};

struct EvalConfig {
  std::vector<double> alpha_grid;
  double alpha = 1.1;
  double iou_success_threshold = 0.5;
  double fbeta_sq = 0.3;
  double fgsm_epsilon = 8.0 / 255.0;

  EvalConfig();
};

/// 0.0, 0.5, ..., 10.0.
std::vector<double> default_alpha_grid();

/// Pixel set iff s_i > α · mean(s).
BinaryGrid binarize(const Tensor& saliency, double alpha);
/// Pixel set iff s_i > threshold.
BinaryGrid threshold_grid(const Tensor& saliency, double threshold);
/// Threshold at twice the mean saliency (salient-object protocol).
BinaryGrid binarize_twice_mean(const Tensor& saliency);

std::optional<BoundingBox> tightest_bbox(const BinaryGrid& grid);
double iou(const BoundingBox& a, const BoundingBox& b);

/// One image prepared for localization scoring: its saliency and the
/// ground-truth boxes of the explained class.
struct LocalizationSample {
  std::string image_id;
  Tensor saliency;
  std::vector<BoundingBox> gt_boxes;
};

struct LocalizationRow {
  std::string image_id;
  double alpha = 0.0;
  std::optional<BoundingBox> box;
  double best_iou = 0.0;
  bool success = false;
};

struct LocalizationReport {
  double error = 0.0;
  int n_images = 0;
  int n_skipped = 0;
  std::vector<LocalizationRow> rows;
};

/// Success iff the tightest box of the binarized map has IOU strictly above
/// the threshold with some ground-truth box; samples without boxes are skipped.
LocalizationReport localization_error(const std::vector<LocalizationSample>& samples, double alpha,
                                      double iou_threshold = 0.5);

/// Produces the saliency map for a record and a class label.
using Explainer = std::function<Tensor(const AnnotationRecord&, const std::string& label)>;

/// Explains each record's first-annotated class and scores it at α.
LocalizationReport localization_error(const std::vector<AnnotationRecord>& records,
                                      const Explainer& explainer, double alpha,
                                      double iou_threshold = 0.5);

struct SweepPoint {
  double alpha = 0.0;
  double error = 0.0;
  int n_images = 0;
  int n_skipped = 0;
};

struct SweepResult {
  std::vector<SweepPoint> curve;
  double best_alpha = 0.0;
  double best_error = 1.0;
};

/// Localization error over an α grid; ties resolve to the smallest α.
SweepResult localization_sweep(const std::vector<LocalizationSample>& samples,
                               const std::vector<double>& alphas, double iou_threshold = 0.5);

/// Location of the maximum; ties go to the lowest row-major index.
Point argmax_point(const Tensor& saliency);
/// Central pixel (floor(H/2), floor(W/2)).
Point center_baseline(int height, int width);

struct PointingQuery {
  std::string image_id;
  std::string label;
  Point point;
  std::vector<BoundingBox> gt_boxes;
};

struct ClassAccuracy {
  int hits = 0;
  int misses = 0;
  double accuracy() const { return hits + misses == 0 ? 0.0 : double(hits) / (hits + misses); }
};

struct PointingReport {
  std::map<std::string, ClassAccuracy> per_class;
  /// Unweighted mean of per-class accuracies.
  double mean_accuracy = 0.0;
  int n_skipped = 0;
  std::vector<bool> hits;
};

/// Hit iff the point lies inside any ground-truth box of its class. Queries
/// whose class has no box in the image are skipped.
PointingReport pointing_game(const std::vector<PointingQuery>& queries);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;
};

/// P = TP/(TP+FP) (0 without predicted positives), R = TP/(TP+FN),
/// F = (1+β²)PR/(β²P+R) (0 when both vanish). Empty ground truth is rejected.
PrecisionRecall precision_recall_f(const BinaryGrid& pred, const BinaryGrid& gt, double beta_sq);
/// F-measure from precision and recall alone.
double f_beta(double precision, double recall, double beta_sq);

/// Mean absolute difference of two aligned maps.
double mae_metric(const Tensor& saliency, const Tensor& ground_truth);

/// One-step fast gradient sign perturbation of the cross-entropy against
/// `true_class`, applied in pixel space, clipped to [0,1] and re-normalized.
ImageTensor fgsm_attack(const ModelBackend& model, const ImageTensor& x, int true_class,
                        double epsilon);

}  // namespace gfi
