#include "woundcare/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "woundcare/error.hpp"

namespace woundcare {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.elements(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.elements()) {
    throw_invalid("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                  to_string(shape_));
  }
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw_invalid("shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace woundcare
