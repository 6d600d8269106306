#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "woundcare/tensor.hpp"

namespace woundcare::topformer {

/// One MobileNetV2 stage: `repeats` inverted-residual layers, the first with `stride`.
struct StageSpec {
  int kernel = 3;
  int expansion = 1;
  int channels = 16;
  int repeats = 1;
  int stride = 1;
};

struct StemSpec {
  int channels = 16;
  int kernel = 3;
  int stride = 2;
};

struct TransformerSpec {
  int embed_dim = 0;  // must equal the sum of emitted token channels
  int depth = 0;
  int head_count = 1;
  int key_dim = 16;
  int attn_ratio = 2;
  int mlp_ratio = 2;
};

enum class SimFusion { add, gated };

struct Normalization {
  std::array<double, 3> mean{123.675, 116.28, 103.53};
  std::array<double, 3> std{58.395, 57.12, 57.375};
};

struct ModelConfig {
  int format_version = 1;
  std::string arch = "topformer-tiny";
  int input_channels = 3;
  std::optional<StemSpec> stem;
  std::vector<StageSpec> pyramid_stages;
  /// Expanded-layer indices whose outputs are emitted as tokens.
  std::vector<int> emit_after;
  std::vector<int> scales_emitted;
  int pool_divisor = 64;
  TransformerSpec transformer;
  SimFusion sim_fusion = SimFusion::add;
  /// Output channels of the injection modules for the deepest scales.
  std::vector<int> sim_channels;
  int head_channels = 128;
  int num_classes = 1;
  double bn_eps = 1e-5;
  Normalization normalization;

  /// Stage list expanded to one entry per inverted-residual layer.
  std::vector<StageSpec> layers() const;
  /// Channel count of every emitted token scale.
  std::vector<int> token_channels() const;
  /// Cumulative stride of every emitted token scale.
  std::vector<int> token_strides() const;
  int max_stride() const;

  /// Throws invalid_argument unless the config describes a runnable network.
  void validate() const;

  static ModelConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static ModelConfig load(const std::filesystem::path& path);
};

/// The shipped TopFormer-Tiny preset (identical to presets/topformer_tiny.json).
ModelConfig tiny_preset();

struct ParamSlot {
  std::string name;
  std::vector<std::size_t> dims;
  bool trainable = true;

  std::size_t elements() const;
};

/// Every tensor a bundle must provide for `config`, in network order.
std::vector<ParamSlot> parameter_slots(const ModelConfig& config);

/// Trainable parameter count with batch norms unfolded (conv weights and
/// biases plus BN scale and shift; running statistics excluded).
std::size_t count_parameters(const ModelConfig& config);

}  // namespace woundcare::topformer
