#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "gfi/architecture.hpp"
#include "gfi/evaluation.hpp"
#include "gfi/types.hpp"

namespace gfi {

/// Reads an RGB image file, resizes it bilinearly to the entry's input size
/// (no crop), scales to [0,1] and normalizes per channel. Single-channel
/// entries receive the luminance of the RGB image.
ImageTensor load_image(const std::filesystem::path& path, const ArchitectureEntry& entry);

/// Same pipeline for an in-memory RGB cv::Mat (8U, 16U, 32F or 64F; values
/// of float mats are taken as already in [0,1]).
ImageTensor image_from_mat(const cv::Mat& rgb, const ArchitectureEntry& entry);

/// Pixel tensor (C,H,W in [0,1]) -> 8-bit BGR (or gray) image.
cv::Mat to_bgr8(const Tensor& pixels);
void save_image(const std::filesystem::path& path, const Tensor& pixels);

struct IngestResult {
  std::vector<AnnotationRecord> records;
  int rejected = 0;
};

/// Rescales one coordinate from an original extent to the model-input extent.
int rescale_coordinate(double v, int original_extent, int target_extent);

/// Reads newline-delimited JSON records
///   {"image": str, "id"?: str, "width"?: int, "height"?: int,
///    "objects": [{"label": str|int, "xmin", "ymin", "xmax", "ymax"}], "mask"?: str}
/// and rescales boxes to `target` (height, width). Malformed lines raise
/// FormatError with the line number; inverted or out-of-range boxes reject
/// the record. Missing width/height are read from the image next to the file.
IngestResult ingest_annotations(const std::filesystem::path& path, std::array<int, 2> target);

/// Parses the VOC XML subset (filename, size, object/name, object/bndbox)
/// into a record in original-image coordinates, converted to 0-based pixels.
AnnotationRecord parse_voc_xml(const std::filesystem::path& path);
/// One JSONL line for `record` in the ingestion schema.
std::string to_jsonl(const AnnotationRecord& record);

/// Resolves an annotation's image/mask path relative to the annotation file.
std::filesystem::path resolve_relative(const std::filesystem::path& annotation_file,
                                       const std::string& path);

/// Loads a ground-truth mask image as a (1,H,W) {0,1} grid resized (nearest) to target.
Tensor load_binary_mask(const std::filesystem::path& path, std::array<int, 2> target);

/// Mask file: "GFIMASK1", u32 LE height, u32 LE width, height*width f32 LE, row major.
std::vector<std::uint8_t> encode_mask(const Tensor& mask);
Tensor decode_mask(const std::vector<std::uint8_t>& bytes);
void save_mask(const std::filesystem::path& path, const Tensor& mask);
Tensor load_mask(const std::filesystem::path& path);

constexpr double kOverlayAlpha = 0.5;

/// Jet-colored heat map blended over the image with per-pixel alpha 0.5·m.
/// Returns a (3,H,W) pixel tensor.
Tensor overlay_pixels(const Tensor& pixels, const Tensor& mask);
/// Writes the overlay and a standalone grayscale mask image.
void render_overlay(const Tensor& pixels, const Tensor& mask,
                    const std::filesystem::path& overlay_path,
                    const std::filesystem::path& mask_image_path);

}  // namespace gfi
