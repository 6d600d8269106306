#include "woundcare/seg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "woundcare/error.hpp"
#include "woundcare/kernels.hpp"

namespace woundcare::seg {

std::string to_string(FeedbackMode mode) {
  switch (mode) {
    case FeedbackMode::basic: return "basic";
    case FeedbackMode::a_posteriori: return "a_posteriori";
    case FeedbackMode::live: return "live";
  }
  return "unknown";
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "basic") return FeedbackMode::basic;
  if (s == "a_posteriori" || s == "a-posteriori" || s == "posteriori") return FeedbackMode::a_posteriori;
  if (s == "live") return FeedbackMode::live;
  throw Error(ErrorCode::invalid_argument, "unknown feedback mode \"" + s + "\"", "feedback_mode");
}

void SegmentationParams::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::range, "threshold must lie in (0,1)", "threshold");
  }
  if (min_component_px < 0) throw Error(ErrorCode::range, "min_component_px must be >= 0", "min_component_px");
  if (connectivity != 4 && connectivity != 8) {
    throw Error(ErrorCode::invalid_argument, "connectivity must be 4 or 8", "connectivity");
  }
}

CropRect crop_rect_for(int width, int height, int size) {
  if (width < 1 || height < 1) throw_invalid("image must be at least 1x1");
  if (size < 1) throw_invalid("crop size must be positive");
  const int side = std::min({width, height, size});
  CropRect r;
  r.x = (width - side) / 2;
  r.y = (height - side) / 2;
  r.width = side;
  r.height = side;
  r.source_px_per_mask_px = static_cast<double>(side) / size;
  return r;
}

Preprocessed preprocess(const RgbImage& image, const topformer::Normalization& norm, int size) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw Error(ErrorCode::format, "image pixel buffer does not match its extent");
  }
  const CropRect crop = crop_rect_for(image.width, image.height, size);
  const auto side = static_cast<std::size_t>(crop.width);
  Tensor raw(Shape{1, 3, side, side});
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = raw.plane(0, c);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        plane[y * side + x] = image.at(crop.x + static_cast<int>(x), crop.y + static_cast<int>(y))[c];
      }
    }
  }
  const auto n = static_cast<std::size_t>(size);
  Tensor out = side == n ? std::move(raw) : bilinear_resize(raw, {n, n});
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mean = static_cast<float>(norm.mean[c]);
    const float inv_std = 1.0f / static_cast<float>(norm.std[c]);
    for (float& v : out.plane(0, c)) v = (v - mean) * inv_std;
  }
  return {std::move(out), crop};
}

Mask threshold_mask(const Tensor& prob_map, double threshold) {
  const Shape& s = prob_map.shape();
  if (s.n != 1 || s.c != 1) throw_invalid("threshold_mask expects a 1x1xHxW probability map, got " + to_string(s));
  Mask m(static_cast<int>(s.w), static_cast<int>(s.h));
  const auto probs = prob_map.data();
  for (std::size_t i = 0; i < probs.size(); ++i) m.bits[i] = static_cast<double>(probs[i]) >= threshold ? 1 : 0;
  return m;
}

ComponentSet extract_components(const Mask& mask, const SegmentationParams& params) {
  struct Raw {
    std::size_t first;
    Component c;
  };
  const int w = mask.width;
  const int h = mask.height;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Raw> found;
  std::vector<std::pair<int, int>> stack;
  ComponentSet out;

  static constexpr int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbours = params.connectivity == 4 ? 4 : 8;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.bits[idx] || seen[idx]) continue;
      seen[idx] = 1;
      stack.assign(1, {x, y});
      std::size_t count = 0;
      double sx = 0, sy = 0;
      int x0 = x, x1 = x, y0 = y, y1 = y;
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        ++count;
        sx += px;
        sy += py;
        x0 = std::min(x0, px);
        x1 = std::max(x1, px);
        y0 = std::min(y0, py);
        y1 = std::max(y1, py);
        for (int k = 0; k < neighbours; ++k) {
          const int nx = px + dx8[k];
          const int ny = py + dy8[k];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
          if (mask.bits[n] && !seen[n]) {
            seen[n] = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
      if (count < static_cast<std::size_t>(params.min_component_px)) {
        out.dropped_px += count;
        continue;
      }
      Component c;
      c.pixel_count = count;
      c.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      c.centroid_x = sx / static_cast<double>(count);
      c.centroid_y = sy / static_cast<double>(count);
      found.push_back({idx, c});
    }
  }

  std::stable_sort(found.begin(), found.end(), [](const Raw& a, const Raw& b) {
    if (a.c.pixel_count != b.c.pixel_count) return a.c.pixel_count > b.c.pixel_count;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < found.size(); ++i) {
    found[i].c.id = static_cast<int>(i) + 1;
    out.components.push_back(found[i].c);
  }
  return out;
}

SegmentationResult segment(const topformer::Model& model, const RgbImage& image, const SegmentationParams& params) {
  params.validate();
  const auto start = std::chrono::steady_clock::now();
  Preprocessed pre = preprocess(image, model.config().normalization);
  SegmentationResult r;
  r.prob_map = topformer::forward(model, pre.tensor);
  if (r.prob_map.shape().c != 1) {
    throw_invalid("segment: model emits " + std::to_string(r.prob_map.shape().c) + " classes, expected 1");
  }
  r.mask = threshold_mask(r.prob_map, params.threshold);
  ComponentSet cs = extract_components(r.mask, params);
  r.components = std::move(cs.components);
  r.dropped_px = cs.dropped_px;
  r.crop_rect = pre.crop_rect;
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Mask mask_boundary(const Mask& mask) {
  Mask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1 || !mask.get(x - 1, y) ||
                        !mask.get(x + 1, y) || !mask.get(x, y - 1) || !mask.get(x, y + 1);
      out.set(x, y, edge);
    }
  }
  return out;
}

RgbImage render_overlay(const RgbImage& image, const SegmentationResult& result, FeedbackMode mode) {
  RgbImage out = image;
  if (mode == FeedbackMode::basic || result.mask.popcount() == 0) return out;
  const CropRect& c = result.crop_rect;
  if (c.x < 0 || c.y < 0 || c.width < 1 || c.height < 1 || c.x + c.width > image.width ||
      c.y + c.height > image.height) {
    throw_invalid("render_overlay: crop_rect lies outside the image");
  }
  const Mask edge = mask_boundary(result.mask);
  const double sx = static_cast<double>(result.mask.width) / c.width;
  const double sy = static_cast<double>(result.mask.height) / c.height;
  // Each source pixel covers a span of mask pixels; paint it if any of them is a boundary pixel.
  auto span = [](int i, double s, int limit) {
    int lo = static_cast<int>(std::floor(i * s));
    int hi = std::max(lo + 1, static_cast<int>(std::ceil((i + 1) * s)));
    return std::pair{std::clamp(lo, 0, limit - 1), std::clamp(hi, 1, limit)};
  };
  for (int y = 0; y < c.height; ++y) {
    const auto [my0, my1] = span(y, sy, edge.height);
    for (int x = 0; x < c.width; ++x) {
      const auto [mx0, mx1] = span(x, sx, edge.width);
      bool hit = false;
      for (int my = my0; my < my1 && !hit; ++my) {
        for (int mx = mx0; mx < mx1 && !hit; ++mx) hit = edge.get(mx, my) != 0;
      }
      if (hit) std::copy(overlay_color, overlay_color + 3, out.at(c.x + x, c.y + y));
    }
  }
  return out;
}

}  // namespace woundcare::seg
