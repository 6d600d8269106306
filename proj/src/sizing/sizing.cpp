#include "woundcare/sizing.hpp"

#include <cmath>

#include "woundcare/error.hpp"

namespace woundcare::sizing {

void ReferenceAnnotation::validate() const {
  if (!(known_length_mm > 0) || !std::isfinite(known_length_mm)) {
    throw Error(ErrorCode::invalid_argument, "known_length_mm must be positive", "known_length_mm");
  }
  for (double v : {endpoint_a.x, endpoint_a.y, endpoint_b.x, endpoint_b.y}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "endpoint coordinates must be finite", "endpoints");
  }
  if (endpoint_a.x == endpoint_b.x && endpoint_a.y == endpoint_b.y) {
    throw Error(ErrorCode::invalid_argument, "reference endpoints coincide", "endpoints");
  }
}

double calibrate_scale(const ReferenceAnnotation& ro) {
  ro.validate();
  const double distance = std::hypot(ro.endpoint_b.x - ro.endpoint_a.x, ro.endpoint_b.y - ro.endpoint_a.y);
  if (!(distance > 0)) throw Error(ErrorCode::invalid_argument, "reference endpoints coincide", "endpoints");
  return ro.known_length_mm / distance;
}

WoundSize estimate_area(std::span<const std::size_t> pixel_counts, double mm_per_px, double source_px_per_mask_px) {
  if (!(mm_per_px > 0) || !std::isfinite(mm_per_px)) {
    throw Error(ErrorCode::invalid_argument, "scale must be positive", "scale_mm_per_px");
  }
  if (!(source_px_per_mask_px > 0) || !std::isfinite(source_px_per_mask_px)) {
    throw_invalid("source_px_per_mask_px must be positive");
  }
  const double side_mm = mm_per_px * source_px_per_mask_px;
  const double px_area = side_mm * side_mm;
  WoundSize out;
  out.scale_mm_per_px = mm_per_px;
  for (std::size_t n : pixel_counts) {
    const double a = static_cast<double>(n) * px_area;
    out.component_area_mm2.push_back(a);
    out.total_mm2 += a;
  }
  out.total_cm2 = out.total_mm2 / 100.0;
  return out;
}

WoundSize estimate_area(const seg::SegmentationResult& result, double mm_per_px) {
  std::vector<std::size_t> counts;
  for (const auto& c : result.components) counts.push_back(c.pixel_count);
  return estimate_area(counts, mm_per_px, result.crop_rect.source_px_per_mask_px);
}

}  // namespace woundcare::sizing
