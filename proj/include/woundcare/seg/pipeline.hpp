#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "woundcare/seg/image.hpp"
#include "woundcare/tensor.hpp"
#include "woundcare/topformer/config.hpp"
#include "woundcare/topformer/model.hpp"

namespace woundcare::seg {

enum class FeedbackMode { basic, a_posteriori, live };

std::string to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& s);

struct SegmentationParams {
  double threshold = 0.75;
  int min_component_px = 25;
  int connectivity = 8;
  FeedbackMode feedback_mode = FeedbackMode::a_posteriori;

  void validate() const;
};

/// Square region of the source image that the model saw, in source pixels.
struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  /// Source pixels per mask pixel along each axis (1 when no resize happened).
  double source_px_per_mask_px = 1.0;

  bool operator==(const CropRect&) const = default;
};

struct BoundingBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct Component {
  int id = 0;
  std::size_t pixel_count = 0;
  BoundingBox bbox;
  double centroid_x = 0;
  double centroid_y = 0;
};

struct ComponentSet {
  std::vector<Component> components;
  /// Wound pixels belonging to components smaller than min_component_px.
  std::size_t dropped_px = 0;
};

struct SegmentationResult {
  Tensor prob_map;
  Mask mask;
  std::vector<Component> components;
  std::size_t dropped_px = 0;
  CropRect crop_rect;
  double latency_ms = 0;
};

struct Preprocessed {
  Tensor tensor;
  CropRect crop_rect;
};

/// Center crop (upscaling the shorter side to `size` first if needed), then per-channel normalization.
Preprocessed preprocess(const RgbImage& image, const topformer::Normalization& norm, int size = 224);
CropRect crop_rect_for(int width, int height, int size = 224);

/// Wound iff prob >= threshold.
Mask threshold_mask(const Tensor& prob_map, double threshold);

ComponentSet extract_components(const Mask& mask, const SegmentationParams& params);

SegmentationResult segment(const topformer::Model& model, const RgbImage& image, const SegmentationParams& params);

/// Wound pixels with a background 4-neighbour or lying on the raster edge.
Mask mask_boundary(const Mask& mask);

inline constexpr std::uint8_t overlay_color[3] = {0, 255, 0};

RgbImage render_overlay(const RgbImage& image, const SegmentationResult& result, FeedbackMode mode);

}  // namespace woundcare::seg
