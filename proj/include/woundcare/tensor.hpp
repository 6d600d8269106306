#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace woundcare {

/// Extents of a rank-4 activation in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t elements() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense row-major float32 tensor. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0f); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[offset(n, c, h, w)];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[offset(n, c, h, w)];
  }

  /// Contiguous view of one (n, c) spatial plane.
  std::span<float> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<float>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  std::span<const float> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const float>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }

  bool all_finite() const noexcept;
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Largest absolute elementwise difference; throws on shape mismatch.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace woundcare
