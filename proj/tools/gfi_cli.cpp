#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfi/errors.hpp"
#include "gfi/evaluation.hpp"
#include "gfi/io.hpp"
#include "gfi/mask.hpp"
#include "gfi/model.hpp"
#include "gfi/solver.hpp"

#ifndef GFI_VERSION
#define GFI_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gfi;

namespace {

struct GlobalOptions {
  std::string arch = "vgg19";
  std::string registry;
  std::string weights;
  std::optional<int> target_class;
  std::string baseline = "blur";
  int blur_radius = 11;
  double gamma = 10.0;
  double delta = 1.0;
  double lambda = 1.0;
  int iters1 = 10;
  int iters2 = 70;
  double lr = 1e-2;
  double omega_init = 0.1;
  int lr_period = 10;
  std::uint64_t seed = 0;
  std::string out_dir = "gfi_out";
  std::string base_layer;
  std::string inversion_layer;
  bool mean_squared = false;
  int jobs = 1;
};

struct Loaded {
  ArchitectureEntry entry;
  std::shared_ptr<const ModelBackend> model;
  fs::path weights;
};

fs::path registry_path(const GlobalOptions& g) {
  return g.registry.empty() ? default_registry_path() : fs::path(g.registry);
}

fs::path resolve_weights(const GlobalOptions& g, const ArchitectureEntry& e) {
  if (!g.weights.empty()) return g.weights;
  if (const char* dir = std::getenv("GFI_WEIGHTS_DIR")) return fs::path(dir) / e.weights_file;
  return registry_path(g).parent_path() / e.weights_file;
}

Loaded load_model(const GlobalOptions& g) {
  const auto registry = ArchitectureRegistry::load(registry_path(g));
  Loaded out;
  out.entry = registry.get(g.arch);
  out.weights = resolve_weights(g, out.entry);
  if (!fs::exists(out.weights)) {
    throw InputError("weights for '" + g.arch + "' not found at " + out.weights.string() +
                     " (pass --weights or set GFI_WEIGHTS_DIR)");
  }
  out.model = ModelBackend::open(out.entry, out.weights);
  return out;
}

InterpretConfig interpret_config(const GlobalOptions& g, const ModelBackend& model) {
  InterpretConfig cfg;
  cfg.stage1_iters = g.iters1;
  cfg.stage2_iters = g.iters2;
  cfg.lr = g.lr;
  cfg.lr_halving_period = g.lr_period;
  cfg.gamma = g.gamma;
  cfg.delta = g.delta;
  cfg.lambda = g.lambda;
  cfg.omega_init = g.omega_init;
  cfg.baseline.kind = parse_baseline_kind(g.baseline);
  cfg.baseline.blur_radius = g.blur_radius;
  cfg.seed = g.seed;
  cfg.mean_squared_inversion = g.mean_squared;
  if (!g.base_layer.empty() || !g.inversion_layer.empty()) {
    const auto& def = model.layer_spec();
    cfg.layer_spec = model.layer_spec_for(
        g.inversion_layer.empty() ? def.inversion_layer : g.inversion_layer,
        g.base_layer.empty() ? def.base_layer : g.base_layer);
  }
  cfg.validate();
  return cfg;
}

json config_json(const GlobalOptions& g) {
  json j;
  j["arch"] = g.arch;
  j["baseline"] = g.baseline;
  j["blur-radius"] = g.blur_radius;
  j["gamma"] = g.gamma;
  j["delta"] = g.delta;
  j["lambda"] = g.lambda;
  j["iters1"] = g.iters1;
  j["iters2"] = g.iters2;
  j["lr"] = g.lr;
  j["lr-period"] = g.lr_period;
  j["omega-init"] = g.omega_init;
  j["seed"] = g.seed;
  j["base-layer"] = g.base_layer;
  j["inversion-layer"] = g.inversion_layer;
  j["mean-squared"] = g.mean_squared;
  if (g.target_class) j["target-class"] = *g.target_class;
  return j;
}

// Flat key=value snapshot that --config accepts back.
std::string config_text(const GlobalOptions& g) {
  std::ostringstream os;
  os << std::setprecision(17);
  const json cfg = config_json(g);
  for (const auto& [k, v] : cfg.items()) {
    if (v.is_string()) {
      if (v.get<std::string>().empty()) continue;
      os << k << "=\"" << v.get<std::string>() << "\"\n";
    } else if (v.is_boolean()) {
      os << k << "=" << (v.get<bool>() ? "true" : "false") << "\n";
    } else if (v.is_number_float()) {
      os << k << "=" << v.get<double>() << "\n";
    } else {
      os << k << "=" << v.dump() << "\n";
    }
  }
  return os.str();
}

json trace_json(const std::vector<TraceEntry>& trace) {
  json arr = json::array();
  for (const auto& e : trace) {
    arr.push_back({{"iteration", e.iteration},
                   {"lr", e.lr},
                   {"total", e.loss.total},
                   {"components", e.loss.components},
                   {"degenerate", e.degenerate}});
  }
  return arr;
}

json box_json(const std::optional<BoundingBox>& b) {
  if (!b) return nullptr;
  return json::array({b->x_min, b->y_min, b->x_max, b->y_max});
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw IngestionError("cannot write " + p.string());
  out << std::setw(2) << j << "\n";
}

bool is_image(const fs::path& p) {
  static const std::set<std::string> exts{".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".webp", ".ppm"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.count(e) > 0;
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_image(e.path())) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) throw InputError("no input images");
  return out;
}

// Output stems, made unique when two inputs share a file name.
std::vector<std::string> unique_stems(const std::vector<fs::path>& paths) {
  std::map<std::string, int> seen;
  std::vector<std::string> out;
  for (const auto& p : paths) {
    const std::string s = p.stem().string();
    const int n = seen[s]++;
    out.push_back(n == 0 ? s : s + "_" + std::to_string(n));
  }
  return out;
}

// Runs fn(i) for i in [0, n) on `jobs` workers. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const int count = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);
}

// Class labels in annotation files are class indices or names listed in a labels file.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open labels file " + path);
    std::string line;
    int idx = 0;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) names_[line] = idx;
      ++idx;
    }
  }
  int index(const std::string& label) const {
    if (auto it = names_.find(label); it != names_.end()) return it->second;
    try {
      std::size_t used = 0;
      const int v = std::stoi(label, &used);
      if (used == label.size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError("label '" + label + "' is neither a class index nor listed in --labels");
  }

 private:
  std::map<std::string, int> names_;
};

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// ---------------------------------------------------------------- explain

struct ExplainOptions {
  std::vector<std::string> inputs;
  bool no_overlay = false;
};

int run_explain(const GlobalOptions& g, const ExplainOptions& o) {
  Clock clock;
  const Loaded m = load_model(g);
  const InterpretConfig cfg = interpret_config(g, *m.model);
  if (g.target_class) m.model->check_class(*g.target_class);
  const auto paths = expand_inputs(o.inputs);
  const auto stems = unique_stems(paths);
  const fs::path out_dir(g.out_dir);
  fs::create_directories(out_dir);

  std::vector<json> rows(paths.size());
  parallel_for(paths.size(), g.jobs, [&](std::size_t i) {
    const ImageTensor x = load_image(paths[i], m.entry);
    Solver solver(*m.model, cfg);
    const ExplanationResult r = solver.explain(x, g.target_class);
    const fs::path mask_file = out_dir / (stems[i] + ".mask.bin");
    save_mask(mask_file, r.mask.grid);
    json row{{"image", paths[i].string()},
             {"mask", mask_file.string()},
             {"target_class", r.target_class},
             {"predicted_class", r.prediction.label},
             {"probability", r.prediction.probability},
             {"degenerate", r.degenerate},
             {"wall_time_seconds", r.wall_time_seconds},
             {"weights", r.weights.values},
             {"stage1_trace", trace_json(r.stage1_trace)},
             {"stage2_trace", trace_json(r.stage2_trace)}};
    if (!o.no_overlay) {
      const fs::path overlay = out_dir / (stems[i] + ".overlay.png");
      const fs::path gray = out_dir / (stems[i] + ".mask.png");
      render_overlay(x.pixels, r.mask.grid, overlay, gray);
      row["overlay"] = overlay.string();
      row["mask_image"] = gray.string();
    }
    write_json(out_dir / (stems[i] + ".json"), row);
    rows[i] = std::move(row);
    std::cerr << paths[i].string() << ": class " << r.target_class << " ("
              << std::fixed << std::setprecision(2) << r.wall_time_seconds << " s)\n";
  });

  std::ofstream(out_dir / "run.cfg") << config_text(g);
  json manifest{{"tool", "gfi"},
                {"version", GFI_VERSION},
                {"command", "explain"},
                {"architecture", g.arch},
                {"weights", m.weights.string()},
                {"seed", g.seed},
                {"config", config_json(g)},
                {"config_file", (out_dir / "run.cfg").string()},
                {"images", rows},
                {"wall_time_seconds", clock.seconds()}};
  write_json(out_dir / "manifest.json", manifest);
  return 0;
}

// ------------------------------------------------------- localization

struct LocalizationOptions {
  std::string annotations;
  std::string labels;
  double alpha = 1.1;
  bool sweep = false;
};

// Explains each record's first-annotated class and keeps the saliency so any α can be scored.
std::vector<LocalizationSample> explain_records(const GlobalOptions& g, const Loaded& m,
                                                const InterpretConfig& cfg,
                                                const std::vector<AnnotationRecord>& records,
                                                const fs::path& ann_file, const LabelMap& labels,
                                                int& skipped) {
  std::vector<std::optional<LocalizationSample>> out(records.size());
  std::atomic<int> skip{0};
  parallel_for(records.size(), g.jobs, [&](std::size_t i) {
    const auto& rec = records[i];
    if (rec.annotations.empty()) {
      std::cerr << "warning: " << rec.image_id << " has no annotations; skipped\n";
      ++skip;
      return;
    }
    const std::string& label = rec.annotations.front().label;
    const int c = labels.index(label);
    const ImageTensor x = load_image(resolve_relative(ann_file, rec.image_path), m.entry);
    const auto r = Solver(*m.model, cfg).explain(x, c);
    out[i] = LocalizationSample{rec.image_id, r.mask.grid, rec.boxes_for(label)};
  });
  skipped = skip;
  std::vector<LocalizationSample> samples;
  for (auto& s : out)
    if (s) samples.push_back(std::move(*s));
  return samples;
}

int run_localization(const GlobalOptions& g, const LocalizationOptions& o) {
  Clock clock;
  const Loaded m = load_model(g);
  const InterpretConfig cfg = interpret_config(g, *m.model);
  const LabelMap labels(o.labels);
  const fs::path ann(o.annotations);
  const IngestResult ingest =
      ingest_annotations(ann, {m.entry.input.height, m.entry.input.width});
  int skipped = 0;
  const auto samples = explain_records(g, m, cfg, ingest.records, ann, labels, skipped);
  fs::create_directories(g.out_dir);

  json report{{"command", "eval-localization"},
              {"version", GFI_VERSION},
              {"architecture", g.arch},
              {"config", config_json(g)},
              {"n_rejected_records", ingest.rejected}};
  if (o.sweep) {
    SweepResult sweep = localization_sweep(samples, default_alpha_grid());
    std::ofstream csv(fs::path(g.out_dir) / "sweep.csv");
    csv << "alpha,error,n_images,n_skipped\n";
    for (auto& p : sweep.curve) {
      p.n_skipped += skipped;
      csv << p.alpha << "," << std::setprecision(10) << p.error << "," << p.n_images << ","
          << p.n_skipped << "\n";
    }
    json curve = json::array();
    for (const auto& p : sweep.curve) curve.push_back({{"alpha", p.alpha}, {"error", p.error}});
    report["sweep"] = curve;
    report["best_alpha"] = sweep.best_alpha;
    report["best_error"] = sweep.best_error;
    std::cout << "best alpha " << sweep.best_alpha << " error " << sweep.best_error << "\n";
  } else {
    const auto rep = localization_error(samples, o.alpha);
    json rows = json::array();
    for (const auto& r : rep.rows) {
      rows.push_back({{"image_id", r.image_id},
                      {"alpha", r.alpha},
                      {"box", box_json(r.box)},
                      {"iou", r.best_iou},
                      {"success", r.success}});
    }
    report["alpha"] = o.alpha;
    report["error"] = rep.error;
    report["n_images"] = rep.n_images;
    report["n_skipped"] = rep.n_skipped + skipped;
    report["rows"] = rows;
    std::cout << "localization error " << rep.error << " over " << rep.n_images << " images\n";
  }
  report["wall_time_seconds"] = clock.seconds();
  write_json(fs::path(g.out_dir) / "localization.json", report);
  return 0;
}

// ------------------------------------------------------- pointing game

struct PointingOptions {
  std::string annotations;
  std::string labels;
};

int run_pointing(const GlobalOptions& g, const PointingOptions& o) {
  Clock clock;
  const Loaded m = load_model(g);
  const InterpretConfig cfg = interpret_config(g, *m.model);
  const LabelMap labels(o.labels);
  const fs::path ann(o.annotations);
  const IngestResult ingest =
      ingest_annotations(ann, {m.entry.input.height, m.entry.input.width});

  struct Job {
    const AnnotationRecord* rec;
    std::string label;
  };
  std::vector<Job> jobs;
  for (const auto& rec : ingest.records) {
    std::set<std::string> seen;
    for (const auto& a : rec.annotations)
      if (seen.insert(a.label).second) jobs.push_back({&rec, a.label});
  }
  std::vector<PointingQuery> ours(jobs.size()), center(jobs.size());
  parallel_for(jobs.size(), g.jobs, [&](std::size_t i) {
    const auto& [rec, label] = jobs[i];
    const ImageTensor x = load_image(resolve_relative(ann, rec->image_path), m.entry);
    const auto r = Solver(*m.model, cfg).explain(x, labels.index(label));
    const auto boxes = rec->boxes_for(label);
    ours[i] = {rec->image_id, label, argmax_point(r.mask.grid), boxes};
    center[i] = {rec->image_id, label, center_baseline(m.entry.input.height, m.entry.input.width),
                 boxes};
  });
  const PointingReport a = pointing_game(ours);
  const PointingReport b = pointing_game(center);
  auto per_class = [](const PointingReport& r) {
    json j;
    for (const auto& [k, v] : r.per_class)
      j[k] = {{"hits", v.hits}, {"misses", v.misses}, {"accuracy", v.accuracy()}};
    return j;
  };
  json rows = json::array();
  for (std::size_t i = 0; i < ours.size(); ++i) {
    rows.push_back({{"image_id", ours[i].image_id},
                    {"label", ours[i].label},
                    {"point", {ours[i].point.row, ours[i].point.col}},
                    {"hit", a.hits[i]},
                    {"center_hit", b.hits[i]}});
  }
  fs::create_directories(g.out_dir);
  write_json(fs::path(g.out_dir) / "pointing.json",
             {{"command", "pointing-game"},
              {"version", GFI_VERSION},
              {"architecture", g.arch},
              {"config", config_json(g)},
              {"accuracy", a.mean_accuracy},
              {"center_accuracy", b.mean_accuracy},
              {"per_class", per_class(a)},
              {"center_per_class", per_class(b)},
              {"rows", rows},
              {"wall_time_seconds", clock.seconds()}});
  std::cout << "pointing accuracy " << a.mean_accuracy << " (center " << b.mean_accuracy << ")\n";
  return 0;
}

// ---------------------------------------------------- saliency detection

struct SaliencyOptions {
  std::string annotations;
  double beta_sq = 0.3;
};

int run_saliency(const GlobalOptions& g, const SaliencyOptions& o) {
  Clock clock;
  const Loaded m = load_model(g);
  const InterpretConfig cfg = interpret_config(g, *m.model);
  const fs::path ann(o.annotations);
  const std::array<int, 2> frame{m.entry.input.height, m.entry.input.width};
  const IngestResult ingest = ingest_annotations(ann, frame);
  std::vector<json> rows(ingest.records.size());
  std::vector<PrecisionRecall> prf(ingest.records.size());
  std::vector<double> mae(ingest.records.size(), -1.0);
  parallel_for(ingest.records.size(), g.jobs, [&](std::size_t i) {
    const auto& rec = ingest.records[i];
    if (!rec.mask_path) {
      std::cerr << "warning: " << rec.image_id << " has no ground-truth mask; skipped\n";
      return;
    }
    const Tensor gt = load_binary_mask(resolve_relative(ann, *rec.mask_path), frame);
    const ImageTensor x = load_image(resolve_relative(ann, rec.image_path), m.entry);
    const auto r = Solver(*m.model, cfg).explain(x, g.target_class);
    BinaryGrid gt_bits(gt.height(), gt.width());
    for (std::size_t k = 0; k < gt.size(); ++k) gt_bits.bits[k] = gt[k] > 0.5 ? 1 : 0;
    prf[i] = precision_recall_f(binarize_twice_mean(r.mask.grid), gt_bits, o.beta_sq);
    mae[i] = mae_metric(r.mask.grid, gt);
    rows[i] = {{"image_id", rec.image_id},
               {"precision", prf[i].precision},
               {"recall", prf[i].recall},
               {"f_beta", prf[i].f_beta},
               {"mae", mae[i]}};
  });
  double sp = 0, sr = 0, smae = 0;
  int n = 0;
  json kept = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (mae[i] < 0) continue;
    sp += prf[i].precision;
    sr += prf[i].recall;
    smae += mae[i];
    ++n;
    kept.push_back(rows[i]);
  }
  if (n == 0) throw InputError("no records with ground-truth masks");
  const double p = sp / n, r = sr / n;
  const double f = f_beta(p, r, o.beta_sq);
  fs::create_directories(g.out_dir);
  write_json(fs::path(g.out_dir) / "saliency.json",
             {{"command", "saliency-detect"},
              {"version", GFI_VERSION},
              {"architecture", g.arch},
              {"config", config_json(g)},
              {"beta_sq", o.beta_sq},
              {"precision", p},
              {"recall", r},
              {"f_beta", f},
              {"mae", smae / n},
              {"n_images", n},
              {"rows", kept},
              {"wall_time_seconds", clock.seconds()}});
  std::cout << "F_beta " << f << " MAE " << smae / n << " over " << n << " images\n";
  return 0;
}

// ------------------------------------------------------------ FGSM demo

struct FgsmOptions {
  std::vector<std::string> inputs;
  double epsilon = 8.0 / 255.0;
  double alpha = 1.1;
};

int run_fgsm(const GlobalOptions& g, const FgsmOptions& o) {
  Clock clock;
  const Loaded m = load_model(g);
  const InterpretConfig cfg = interpret_config(g, *m.model);
  const auto paths = expand_inputs(o.inputs);
  const auto stems = unique_stems(paths);
  const fs::path out_dir(g.out_dir);
  fs::create_directories(out_dir);
  std::vector<json> rows(paths.size());
  std::vector<int> flipped(paths.size(), 0);
  parallel_for(paths.size(), g.jobs, [&](std::size_t i) {
    const ImageTensor x = load_image(paths[i], m.entry);
    const int truth = g.target_class ? *g.target_class : m.model->class_prob(x.normalized).top().label;
    const ImageTensor adv = fgsm_attack(*m.model, x, truth, o.epsilon);
    const Prediction clean_pred = m.model->class_prob(x.normalized).top();
    const Prediction adv_pred = m.model->class_prob(adv.normalized).top();
    Solver solver(*m.model, cfg);
    const auto clean = solver.explain(x, truth);
    const auto attacked = solver.explain(adv, truth);
    const auto box_clean = tightest_bbox(binarize(clean.mask.grid, o.alpha));
    const auto box_adv = tightest_bbox(binarize(attacked.mask.grid, o.alpha));
    const double overlap = box_clean && box_adv ? iou(*box_clean, *box_adv) : 0.0;
    save_image(out_dir / (stems[i] + ".adv.png"), adv.pixels);
    save_mask(out_dir / (stems[i] + ".clean.mask.bin"), clean.mask.grid);
    save_mask(out_dir / (stems[i] + ".adv.mask.bin"), attacked.mask.grid);
    render_overlay(adv.pixels, attacked.mask.grid, out_dir / (stems[i] + ".adv.overlay.png"),
                   out_dir / (stems[i] + ".adv.mask.png"));
    flipped[i] = adv_pred.label != clean_pred.label ? 1 : 0;
    rows[i] = {{"image", paths[i].string()},
               {"true_class", truth},
               {"clean_prediction", clean_pred.label},
               {"clean_probability", clean_pred.probability},
               {"adversarial_prediction", adv_pred.label},
               {"adversarial_probability", adv_pred.probability},
               {"flipped", flipped[i] == 1},
               {"clean_box", box_json(box_clean)},
               {"adversarial_box", box_json(box_adv)},
               {"box_iou", overlap}};
  });
  const int n_flipped = static_cast<int>(std::count(flipped.begin(), flipped.end(), 1));
  write_json(out_dir / "fgsm.json", {{"command", "fgsm-demo"},
                                     {"version", GFI_VERSION},
                                     {"architecture", g.arch},
                                     {"config", config_json(g)},
                                     {"epsilon", o.epsilon},
                                     {"alpha", o.alpha},
                                     {"n_images", paths.size()},
                                     {"n_flipped", n_flipped},
                                     {"rows", rows},
                                     {"wall_time_seconds", clock.seconds()}});
  std::cout << "flipped " << n_flipped << "/" << paths.size() << "\n";
  return 0;
}

// -------------------------------------------------------- grad baseline

int run_grad(const GlobalOptions& g, const std::vector<std::string>& inputs) {
  const Loaded m = load_model(g);
  const auto paths = expand_inputs(inputs);
  const auto stems = unique_stems(paths);
  const fs::path out_dir(g.out_dir);
  fs::create_directories(out_dir);
  std::vector<json> rows(paths.size());
  parallel_for(paths.size(), g.jobs, [&](std::size_t i) {
    const ImageTensor x = load_image(paths[i], m.entry);
    const int c = g.target_class ? *g.target_class : m.model->class_prob(x.normalized).top().label;
    const SaliencyMask s = m.model->vanilla_gradient_saliency(x, c);
    const fs::path mask_file = out_dir / (stems[i] + ".grad.mask.bin");
    save_mask(mask_file, s.grid);
    render_overlay(x.pixels, s.grid, out_dir / (stems[i] + ".grad.overlay.png"),
                   out_dir / (stems[i] + ".grad.mask.png"));
    rows[i] = {{"image", paths[i].string()}, {"target_class", c}, {"mask", mask_file.string()}};
  });
  write_json(out_dir / "grad.json", {{"command", "grad-baseline"},
                                     {"version", GFI_VERSION},
                                     {"architecture", g.arch},
                                     {"images", rows}});
  return 0;
}

// ---------------------------------------------------------- convert-voc

int run_convert_voc(const std::vector<std::string>& inputs, const std::string& output) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".xml") files.push_back(e.path());
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw IngestionError("cannot write " + output);
  }
  std::ostream& out = output.empty() ? std::cout : file;
  for (const auto& f : files) out << to_jsonl(parse_voc_xml(f)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency masks by guided feature inversion"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", GFI_VERSION);
  app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");

  GlobalOptions g;
  app.add_option("--arch", g.arch, "Registered architecture")->capture_default_str();
  app.add_option("--registry", g.registry, "Architecture registry JSON");
  app.add_option("--weights", g.weights, "safetensors weights (default: registry file name)");
  app.add_option("--target-class", g.target_class, "Class to explain (default: top-1)");
  app.add_option("--baseline", g.baseline, "gray, noise or blur")->capture_default_str();
  app.add_option("--blur-radius", g.blur_radius)->capture_default_str();
  app.add_option("--gamma", g.gamma, "Stage-1 L1 weight")->capture_default_str();
  app.add_option("--delta", g.delta, "Stage-2 L1 weight")->capture_default_str();
  app.add_option("--lambda", g.lambda, "Background term weight")->capture_default_str();
  app.add_option("--iters1", g.iters1)->capture_default_str();
  app.add_option("--iters2", g.iters2)->capture_default_str();
  app.add_option("--lr", g.lr)->capture_default_str();
  app.add_option("--lr-period", g.lr_period, "Stage-2 halving period")->capture_default_str();
  app.add_option("--omega-init", g.omega_init)->capture_default_str();
  app.add_option("--seed", g.seed)->capture_default_str();
  app.add_option("--out-dir", g.out_dir)->capture_default_str();
  app.add_option("--base-layer", g.base_layer, "Override the mask channel layer");
  app.add_option("--inversion-layer", g.inversion_layer, "Override the inversion layer");
  app.add_flag("--mean-squared", g.mean_squared, "Average the inversion error over features");
  app.add_option("--jobs", g.jobs, "Worker threads")->capture_default_str();

  ExplainOptions eo;
  auto* explain = app.add_subcommand("explain", "Explain images (files or directories)");
  explain->add_option("inputs", eo.inputs)->required();
  explain->add_flag("--no-overlay", eo.no_overlay);

  LocalizationOptions lo;
  auto* loc = app.add_subcommand("eval-localization", "Bounding-box localization error");
  loc->add_option("--annotations", lo.annotations)->required();
  loc->add_option("--labels", lo.labels, "Class names, one per line, in index order");
  loc->add_option("--alpha", lo.alpha)->capture_default_str();
  loc->add_flag("--sweep", lo.sweep, "Sweep alpha over 0:0.5:10 and write sweep.csv");

  PointingOptions po;
  auto* point = app.add_subcommand("pointing-game", "Pointing game against the center baseline");
  point->add_option("--annotations", po.annotations)->required();
  point->add_option("--labels", po.labels);

  SaliencyOptions so;
  auto* sal = app.add_subcommand("saliency-detect", "Precision/recall/F-measure and MAE");
  sal->add_option("--annotations", so.annotations)->required();
  sal->add_option("--beta-sq", so.beta_sq)->capture_default_str();

  FgsmOptions fo;
  auto* fgsm = app.add_subcommand("fgsm-demo", "Adversarial inputs and their explanations");
  fgsm->add_option("inputs", fo.inputs)->required();
  fgsm->add_option("--epsilon", fo.epsilon)->capture_default_str();
  fgsm->add_option("--alpha", fo.alpha, "Box threshold multiplier")->capture_default_str();

  std::vector<std::string> grad_inputs;
  auto* grad = app.add_subcommand("grad-baseline", "Vanilla gradient saliency");
  grad->add_option("inputs", grad_inputs)->required();

  std::vector<std::string> voc_inputs;
  std::string voc_output;
  auto* voc = app.add_subcommand("convert-voc", "VOC XML annotations to JSONL");
  voc->add_option("inputs", voc_inputs)->required();
  voc->add_option("-o,--output", voc_output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*explain) return run_explain(g, eo);
    if (*loc) return run_localization(g, lo);
    if (*point) return run_pointing(g, po);
    if (*sal) {
      // Salient-object detection scores the class-agnostic inversion mask unless asked otherwise.
      if (app.count("--iters2") == 0) g.iters2 = 0;
      return run_saliency(g, so);
    }
    if (*fgsm) return run_fgsm(g, fo);
    if (*grad) return run_grad(g, grad_inputs);
    if (*voc) return run_convert_voc(voc_inputs, voc_output);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
