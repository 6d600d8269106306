#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "woundcare/seg/pipeline.hpp"

namespace woundcare::sizing {

struct PixelPoint {
  double x = 0;
  double y = 0;
};

/// Two points on a reference object of known length, in source-image pixels.
struct ReferenceAnnotation {
  PixelPoint endpoint_a;
  PixelPoint endpoint_b;
  double known_length_mm = 0;

  void validate() const;
};

struct WoundSize {
  std::vector<double> component_area_mm2;
  double total_mm2 = 0;
  double total_cm2 = 0;
  double scale_mm_per_px = 0;
};

double calibrate_scale(const ReferenceAnnotation& ro);

/// Areas of the kept components. Mask pixels are converted to source pixels through the crop's resize factor.
WoundSize estimate_area(const seg::SegmentationResult& result, double mm_per_px);

/// Same, from raw pixel counts measured at `source_px_per_mask_px` source pixels per mask pixel.
WoundSize estimate_area(std::span<const std::size_t> pixel_counts, double mm_per_px, double source_px_per_mask_px = 1.0);

}  // namespace woundcare::sizing
