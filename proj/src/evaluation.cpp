#include "gfi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "gfi/errors.hpp"

namespace gfi {

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<BoundingBox> AnnotationRecord::boxes_for(const std::string& label) const {
  std::vector<BoundingBox> out;
  for (const auto& a : annotations)
    if (a.label == label) out.push_back(a.box);
  return out;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.5 * i);
  return grid;
}

EvalConfig::EvalConfig() : alpha_grid(default_alpha_grid()) {}

namespace {
void require_grid(const Tensor& t, const char* what) {
  if (t.channels() != 1) {
    throw InputError(std::string(what) + ": expected a single-channel map, got " + t.shape().str());
  }
}
}  // namespace

BinaryGrid threshold_grid(const Tensor& saliency, double threshold) {
  require_grid(saliency, "threshold_grid");
  BinaryGrid out(saliency.height(), saliency.width());
  for (std::size_t k = 0; k < saliency.size(); ++k) out.bits[k] = saliency[k] > threshold ? 1 : 0;
  return out;
}

BinaryGrid binarize(const Tensor& saliency, double alpha) {
  if (alpha < 0.0) throw InputError("alpha must be >= 0");
  return threshold_grid(saliency, alpha * saliency.mean());
}

BinaryGrid binarize_twice_mean(const Tensor& saliency) {
  return threshold_grid(saliency, 2.0 * saliency.mean());
}

std::optional<BoundingBox> tightest_bbox(const BinaryGrid& grid) {
  std::optional<BoundingBox> box;
  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c) {
      if (!grid.at(r, c)) continue;
      if (!box) {
        box = BoundingBox{c, r, c, r};
      } else {
        box->x_min = std::min(box->x_min, c);
        box->x_max = std::max(box->x_max, c);
        box->y_min = std::min(box->y_min, r);
        box->y_max = std::max(box->y_max, r);
      }
    }
  return box;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix0 = std::max(a.x_min, b.x_min);
  const int iy0 = std::max(a.y_min, b.y_min);
  const int ix1 = std::min(a.x_max, b.x_max);
  const int iy1 = std::min(a.y_max, b.y_max);
  if (ix1 < ix0 || iy1 < iy0) return 0.0;
  const long long inter = static_cast<long long>(ix1 - ix0 + 1) * (iy1 - iy0 + 1);
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

LocalizationReport localization_error(const std::vector<LocalizationSample>& samples, double alpha,
                                      double iou_threshold) {
  LocalizationReport report;
  int failures = 0;
  for (const auto& s : samples) {
    if (s.gt_boxes.empty()) {
      std::cerr << "warning: " << s.image_id << " has no ground-truth box for its class; skipped\n";
      ++report.n_skipped;
      continue;
    }
    LocalizationRow row;
    row.image_id = s.image_id;
    row.alpha = alpha;
    row.box = tightest_bbox(binarize(s.saliency, alpha));
    if (row.box) {
      for (const auto& gt : s.gt_boxes) row.best_iou = std::max(row.best_iou, iou(*row.box, gt));
    }
    row.success = row.box.has_value() && row.best_iou > iou_threshold;
    failures += row.success ? 0 : 1;
    ++report.n_images;
    report.rows.push_back(std::move(row));
  }
  report.error = report.n_images == 0 ? 0.0 : static_cast<double>(failures) / report.n_images;
  return report;
}

LocalizationReport localization_error(const std::vector<AnnotationRecord>& records,
                                      const Explainer& explainer, double alpha,
                                      double iou_threshold) {
  std::vector<LocalizationSample> samples;
  int skipped = 0;
  for (const auto& r : records) {
    if (r.annotations.empty()) {
      std::cerr << "warning: " << r.image_id << " has no annotations; skipped\n";
      ++skipped;
      continue;
    }
    const std::string& label = r.annotations.front().label;
    samples.push_back({r.image_id, explainer(r, label), r.boxes_for(label)});
  }
  LocalizationReport report = localization_error(samples, alpha, iou_threshold);
  report.n_skipped += skipped;
  return report;
}

SweepResult localization_sweep(const std::vector<LocalizationSample>& samples,
                               const std::vector<double>& alphas, double iou_threshold) {
  SweepResult out;
  bool first = true;
  for (double a : alphas) {
    const auto rep = localization_error(samples, a, iou_threshold);
    out.curve.push_back({a, rep.error, rep.n_images, rep.n_skipped});
    if (first || rep.error < out.best_error) {
      out.best_error = rep.error;
      out.best_alpha = a;
      first = false;
    }
  }
  return out;
}

Point argmax_point(const Tensor& saliency) {
  require_grid(saliency, "argmax_point");
  if (saliency.empty()) throw InputError("argmax_point: empty map");
  const auto v = saliency.values();
  const auto idx = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  return {idx / saliency.width(), idx % saliency.width()};
}

Point center_baseline(int height, int width) { return {height / 2, width / 2}; }

PointingReport pointing_game(const std::vector<PointingQuery>& queries) {
  PointingReport report;
  for (const auto& q : queries) {
    if (q.gt_boxes.empty()) {
      ++report.n_skipped;
      continue;
    }
    const bool hit = std::any_of(q.gt_boxes.begin(), q.gt_boxes.end(),
                                 [&](const BoundingBox& b) { return b.contains(q.point.row, q.point.col); });
    auto& acc = report.per_class[q.label];
    (hit ? acc.hits : acc.misses) += 1;
    report.hits.push_back(hit);
  }
  double total = 0.0;
  for (const auto& [label, acc] : report.per_class) total += acc.accuracy();
  report.mean_accuracy = report.per_class.empty() ? 0.0 : total / report.per_class.size();
  return report;
}

double f_beta(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

PrecisionRecall precision_recall_f(const BinaryGrid& pred, const BinaryGrid& gt, double beta_sq) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw InputError("precision_recall_f: prediction and ground truth are not aligned");
  }
  long long tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < pred.bits.size(); ++k) {
    const bool p = pred.bits[k] != 0;
    const bool g = gt.bits[k] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fn == 0) throw InputError("precision_recall_f: ground-truth mask is empty");
  PrecisionRecall out;
  out.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f_beta = f_beta(out.precision, out.recall, beta_sq);
  return out;
}

double mae_metric(const Tensor& saliency, const Tensor& ground_truth) {
  require_same_shape(saliency.shape(), ground_truth.shape(), "mae_metric");
  if (saliency.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < saliency.size(); ++k) s += std::abs(saliency[k] - ground_truth[k]);
  return s / static_cast<double>(saliency.size());
}

ImageTensor fgsm_attack(const ModelBackend& model, const ImageTensor& x, int true_class,
                        double epsilon) {
  if (epsilon < 0.0) throw InputError("fgsm epsilon must be >= 0");
  if (epsilon == 0.0) return x;
  Tensor grad;
  model.cross_entropy_with_grad(x.normalized, true_class, grad);
  // d/d pixel = d/d normalized / std; std > 0 leaves the sign unchanged.
  Tensor pixels = x.pixels;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const double g = grad[k];
    const double sign = static_cast<double>((g > 0.0) - (g < 0.0));
    pixels[k] = std::clamp(pixels[k] + epsilon * sign, 0.0, 1.0);
  }
  return ImageTensor::from_pixels(std::move(pixels), model.preprocessing());
}

}  // namespace gfi
