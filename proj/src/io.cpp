#include "gfi/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <tuple>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gfi/errors.hpp"

namespace gfi {

namespace {

constexpr char kMaskMagic[8] = {'G', 'F', 'I', 'M', 'A', 'S', 'K', '1'};

cv::Mat to_unit_float(const cv::Mat& m) {
  cv::Mat out;
  switch (m.depth()) {
    case CV_8U:
      m.convertTo(out, CV_64F, 1.0 / 255.0);
      break;
    case CV_16U:
      m.convertTo(out, CV_64F, 1.0 / 65535.0);
      break;
    case CV_32F:
    case CV_64F:
      m.convertTo(out, CV_64F);
      break;
    default:
      throw IngestionError("unsupported image depth");
  }
  return out;
}

Tensor tensor_from_mat(const cv::Mat& m) {
  const int channels = m.channels();
  Tensor t({channels, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const double* row = m.ptr<double>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < channels; ++c) t.at(c, y, x) = row[x * channels + c];
  }
  return t;
}

void write_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32le(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

// Half-pixel bilinear resize (the cv::INTER_LINEAR convention) with double
// weights; OpenCV interpolates 64F images with single-precision coefficients.
Tensor resize_linear(const Tensor& src, int height, int width) {
  if (src.height() == height && src.width() == width) return src;
  auto taps = [](int dst, int n) {
    std::vector<std::tuple<int, int, double>> out(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(n) / dst;
    for (int i = 0; i < dst; ++i) {
      const double pos = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
      const int lo = static_cast<int>(pos);
      const int hi = std::min(lo + 1, n - 1);
      out[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
    }
    return out;
  };
  const auto ty = taps(height, src.height());
  const auto tx = taps(width, src.width());
  Tensor out({src.channels(), height, width});
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const auto [y0, y1, fy] = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < width; ++x) {
        const auto [x0, x1, fx] = tx[static_cast<std::size_t>(x)];
        const double top = src.at(c, y0, x0) + fx * (src.at(c, y0, x1) - src.at(c, y0, x0));
        const double bot = src.at(c, y1, x0) + fx * (src.at(c, y1, x1) - src.at(c, y1, x0));
        out.at(c, y, x) = top + fy * (bot - top);
      }
    }
  return out;
}

}  // namespace

ImageTensor image_from_mat(const cv::Mat& rgb, const ArchitectureEntry& entry) {
  if (rgb.empty()) throw IngestionError("empty image");
  if (rgb.channels() != 3) {
    throw IngestionError("expected an RGB image, got " + std::to_string(rgb.channels()) +
                         " channel(s)");
  }
  if (entry.input.channels != 1 && entry.input.channels != 3) {
    throw ConfigError("architecture '" + entry.name + "' expects " +
                      std::to_string(entry.input.channels) + " input channels");
  }
  Tensor pixels = resize_linear(tensor_from_mat(to_unit_float(rgb)), entry.input.height,
                                entry.input.width);
  if (entry.input.channels == 1) {
    Tensor gray = Tensor::grid(pixels.height(), pixels.width());
    for (std::size_t k = 0; k < gray.size(); ++k) {
      gray[k] = 0.299 * pixels.channel(0)[k] + 0.587 * pixels.channel(1)[k] +
                0.114 * pixels.channel(2)[k];
    }
    pixels = std::move(gray);
  }
  return ImageTensor::from_pixels(std::move(pixels), entry.preprocessing);
}

ImageTensor load_image(const std::filesystem::path& path, const ArchitectureEntry& entry) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw IngestionError("cannot read image " + path.string());
  if (raw.channels() < 3) {
    throw IngestionError("image " + path.string() + " is greyscale-only; an RGB image is required");
  }
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, raw.channels() == 4 ? cv::COLOR_BGRA2RGB : cv::COLOR_BGR2RGB);
  try {
    return image_from_mat(rgb, entry);
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

cv::Mat to_bgr8(const Tensor& pixels) {
  const int c = pixels.channels();
  if (c != 1 && c != 3) throw InputError("to_bgr8: expected 1 or 3 channels");
  cv::Mat out(pixels.height(), pixels.width(), c == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < pixels.height(); ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < pixels.width(); ++x) {
      for (int k = 0; k < c; ++k) {
        // RGB tensor -> BGR memory order
        const int src = c == 3 ? 2 - k : 0;
        row[x * c + k] = cv::saturate_cast<std::uint8_t>(pixels.at(src, y, x) * 255.0);
      }
    }
  }
  return out;
}

void save_image(const std::filesystem::path& path, const Tensor& pixels) {
  if (!cv::imwrite(path.string(), to_bgr8(pixels))) {
    throw IngestionError("cannot write image " + path.string());
  }
}

int rescale_coordinate(double v, int original_extent, int target_extent) {
  const double scaled = std::floor(v * target_extent / original_extent);
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(target_extent - 1)));
}

std::filesystem::path resolve_relative(const std::filesystem::path& annotation_file,
                                       const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  return annotation_file.parent_path() / p;
}

IngestResult ingest_annotations(const std::filesystem::path& path, std::array<int, 2> target) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open annotation file " + path.string());
  IngestResult result;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": malformed record: " + e.what());
    }
    AnnotationRecord rec;
    bool rejected = false;
    try {
      rec.image_path = j.at("image").get<std::string>();
      rec.image_id = j.value("id", rec.image_path);
      rec.original_width = j.value("width", 0);
      rec.original_height = j.value("height", 0);
      if (j.contains("mask")) rec.mask_path = j.at("mask").get<std::string>();
      if (rec.original_width <= 0 || rec.original_height <= 0) {
        const auto img_path = resolve_relative(path, rec.image_path);
        cv::Mat img = cv::imread(img_path.string(), cv::IMREAD_UNCHANGED);
        if (img.empty()) {
          throw FormatError(where + ": record has no width/height and image " +
                            img_path.string() + " cannot be read");
        }
        rec.original_width = img.cols;
        rec.original_height = img.rows;
      }
      for (const auto& obj : j.at("objects")) {
        const auto& lab = obj.at("label");
        const std::string label = lab.is_string() ? lab.get<std::string>() : lab.dump();
        const double x0 = obj.at("xmin").get<double>();
        const double y0 = obj.at("ymin").get<double>();
        const double x1 = obj.at("xmax").get<double>();
        const double y1 = obj.at("ymax").get<double>();
        if (x0 > x1 || y0 > y1 || x0 < 0 || y0 < 0 || x1 > rec.original_width ||
            y1 > rec.original_height) {
          std::cerr << "warning: " << where << ": invalid box for '" << label
                    << "'; record rejected\n";
          rejected = true;
          break;
        }
        BoundingBox box{rescale_coordinate(x0, rec.original_width, target[1]),
                        rescale_coordinate(y0, rec.original_height, target[0]),
                        rescale_coordinate(x1, rec.original_width, target[1]),
                        rescale_coordinate(y1, rec.original_height, target[0])};
        rec.annotations.push_back({label, box});
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": malformed record: " + e.what());
    }
    if (!rejected && rec.annotations.empty()) {
      std::cerr << "warning: " << where << ": record has no objects; rejected\n";
      rejected = true;
    }
    if (rejected) {
      ++result.rejected;
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

AnnotationRecord parse_voc_xml(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(path.string(), tree);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError("malformed VOC annotation " + path.string() + ": " + e.what());
  }
  AnnotationRecord rec;
  try {
    const auto& root = tree.get_child("annotation");
    rec.image_path = root.get<std::string>("filename");
    rec.image_id = std::filesystem::path(rec.image_path).stem().string();
    rec.original_width = root.get<int>("size.width");
    rec.original_height = root.get<int>("size.height");
    for (const auto& [key, node] : root) {
      if (key != "object") continue;
      Annotation a;
      a.label = node.get<std::string>("name");
      // VOC pixel coordinates are 1-based.
      a.box.x_min = static_cast<int>(node.get<double>("bndbox.xmin")) - 1;
      a.box.y_min = static_cast<int>(node.get<double>("bndbox.ymin")) - 1;
      a.box.x_max = static_cast<int>(node.get<double>("bndbox.xmax")) - 1;
      a.box.y_max = static_cast<int>(node.get<double>("bndbox.ymax")) - 1;
      rec.annotations.push_back(a);
    }
  } catch (const pt::ptree_error& e) {
    throw FormatError("incomplete VOC annotation " + path.string() + ": " + e.what());
  }
  return rec;
}

std::string to_jsonl(const AnnotationRecord& record) {
  nlohmann::json j;
  j["image"] = record.image_path;
  j["id"] = record.image_id;
  j["width"] = record.original_width;
  j["height"] = record.original_height;
  j["objects"] = nlohmann::json::array();
  for (const auto& a : record.annotations) {
    j["objects"].push_back({{"label", a.label},
                            {"xmin", a.box.x_min},
                            {"ymin", a.box.y_min},
                            {"xmax", a.box.x_max},
                            {"ymax", a.box.y_max}});
  }
  if (record.mask_path) j["mask"] = *record.mask_path;
  return j.dump();
}

Tensor load_binary_mask(const std::filesystem::path& path, std::array<int, 2> target) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IngestionError("cannot read mask " + path.string());
  cv::Mat resized;
  cv::resize(m, resized, cv::Size(target[1], target[0]), 0, 0, cv::INTER_NEAREST);
  Tensor t = Tensor::grid(target[0], target[1]);
  for (int y = 0; y < target[0]; ++y)
    for (int x = 0; x < target[1]; ++x) t.at(0, y, x) = resized.at<std::uint8_t>(y, x) > 127 ? 1.0 : 0.0;
  return t;
}

std::vector<std::uint8_t> encode_mask(const Tensor& mask) {
  if (mask.channels() != 1) throw InputError("mask must have a single channel");
  std::vector<std::uint8_t> out(kMaskMagic, kMaskMagic + 8);
  write_u32le(out, static_cast<std::uint32_t>(mask.height()));
  write_u32le(out, static_cast<std::uint32_t>(mask.width()));
  out.reserve(out.size() + mask.size() * 4);
  for (double v : mask.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("mask value outside [0,1]");
    write_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode_mask(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMaskMagic, 8) != 0) {
    throw FormatError("not a mask file (bad magic)");
  }
  const std::uint32_t h = read_u32le(bytes, 8);
  const std::uint32_t w = read_u32le(bytes, 12);
  const std::uint64_t expected = 16 + 4ull * h * w;
  if (bytes.size() != expected) {
    throw FormatError("mask payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
  Tensor t = Tensor::grid(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t k = 0; k < t.size(); ++k) {
    const float f = std::bit_cast<float>(read_u32le(bytes, 16 + 4 * k));
    if (!(f >= 0.0f && f <= 1.0f)) throw FormatError("mask value outside [0,1]");
    t[k] = f;
  }
  return t;
}

void save_mask(const std::filesystem::path& path, const Tensor& mask) {
  const auto bytes = encode_mask(mask);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write mask " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("failed writing mask " + path.string());
}

Tensor load_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read mask " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_mask(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor overlay_pixels(const Tensor& pixels, const Tensor& mask) {
  if (mask.channels() != 1 || mask.height() != pixels.height() || mask.width() != pixels.width()) {
    throw InputError("overlay: mask " + mask.shape().str() + " does not match image " +
                     pixels.shape().str());
  }
  cv::Mat gray(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      gray.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(mask.at(0, y, x) * 255.0);
  cv::Mat heat;
  cv::applyColorMap(gray, heat, cv::COLORMAP_JET);

  Tensor out({3, pixels.height(), pixels.width()});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < pixels.height(); ++y)
      for (int x = 0; x < pixels.width(); ++x) {
        const double a = kOverlayAlpha * mask.at(0, y, x);
        const double base = pixels.at(pixels.channels() == 3 ? c : 0, y, x);
        const double h = heat.at<cv::Vec3b>(y, x)[2 - c] / 255.0;
        out.at(c, y, x) = (1.0 - a) * base + a * h;
      }
  return out;
}

void render_overlay(const Tensor& pixels, const Tensor& mask,
                    const std::filesystem::path& overlay_path,
                    const std::filesystem::path& mask_image_path) {
  save_image(overlay_path, overlay_pixels(pixels, mask));
  save_image(mask_image_path, mask);
}

}  // namespace gfi
