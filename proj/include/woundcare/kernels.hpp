#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "woundcare/tensor.hpp"

namespace woundcare {

enum class Activation { identity, relu, relu6, sigmoid, hard_sigmoid, hard_swish };

struct ConvParams {
  Tensor weight;              // (out_c, in_c / groups, kh, kw)
  std::vector<float> bias;    // empty or out_c
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> padding{0, 0};
  int groups = 1;

  std::size_t out_channels() const noexcept { return weight.shape().n; }
  std::size_t in_channels() const noexcept { return weight.shape().c * static_cast<std::size_t>(groups); }

  /// Throws invalid_argument when the fields are mutually inconsistent.
  void validate() const;
};

struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;

  void validate() const;
};

/// Multi-head self attention over the h*w tokens of a (n, dim, h, w) tensor.
/// Projections are 1x1 convolutions: to_q/to_k map dim -> heads*key_dim,
/// to_v maps dim -> heads*value_dim, proj maps heads*value_dim -> out dim.
struct AttentionParams {
  int head_count = 1;
  int key_dim = 1;
  int value_dim = 1;
  ConvParams to_q;
  ConvParams to_k;
  ConvParams to_v;
  ConvParams proj;
  /// Applied to the concatenated heads before `proj` (TopFormer uses relu6).
  Activation pre_projection = Activation::identity;

  void validate(std::size_t token_dim) const;
};

Tensor conv2d(const Tensor& input, const ConvParams& p);

/// Returns conv params whose output equals batchnorm(conv(x)).
ConvParams fold_batchnorm(const ConvParams& conv, const BatchNormParams& bn);

float apply_activation(float x, Activation kind) noexcept;
Tensor activation(const Tensor& x, Activation kind);
void activation_inplace(Tensor& x, Activation kind) noexcept;

Tensor adaptive_avg_pool(const Tensor& x, std::array<std::size_t, 2> out_hw);
Tensor bilinear_resize(const Tensor& x, std::array<std::size_t, 2> out_hw);

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p);
/// Per (batch, head) row-stochastic attention matrix, tokens x tokens, row-major.
std::vector<std::vector<float>> attention_weights(const Tensor& x, const AttentionParams& p);

enum class ElementwiseOp { add, mul };
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
Tensor concat_channels(std::span<const Tensor> parts);
/// Channels [begin, begin + count).
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

}  // namespace woundcare
