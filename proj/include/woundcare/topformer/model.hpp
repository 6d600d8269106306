#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "woundcare/kernels.hpp"
#include "woundcare/topformer/config.hpp"
#include "woundcare/topformer/weights.hpp"

namespace woundcare::topformer {

struct InvertedResidual {
  std::optional<ConvParams> expand;
  ConvParams depthwise;
  ConvParams project;
  bool residual = false;
};

struct TransformerBlock {
  AttentionParams attention;
  ConvParams fc1;
  ConvParams dwconv;
  ConvParams fc2;
};

/// Semantic injection for one scale. `global_act` is present only for gated fusion.
struct InjectionModule {
  ConvParams local_embedding;
  ConvParams global_embedding;
  std::optional<ConvParams> global_act;
};

/// TopFormer network with batch norms folded into their convolutions.
/// Immutable after build; safe to share across threads.
class Model {
 public:
  /// Consumes every slot required by `config` from `weights`. Tensors the
  /// config does not use are reported through `unused` when provided.
  static Model build(const ModelConfig& config, const WeightBundle& weights,
                     std::vector<std::string>* unused = nullptr);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t parameter_count() const noexcept { return parameter_count_; }

  const ConvParams& stem() const noexcept { return stem_; }
  const std::vector<InvertedResidual>& layers() const noexcept { return layers_; }
  const std::vector<TransformerBlock>& blocks() const noexcept { return blocks_; }
  const std::vector<InjectionModule>& injections() const noexcept { return injections_; }
  const ConvParams& head_fuse() const noexcept { return head_fuse_; }
  const ConvParams& head_classifier() const noexcept { return head_classifier_; }

 private:
  ModelConfig config_;
  std::size_t parameter_count_ = 0;
  ConvParams stem_;
  std::vector<InvertedResidual> layers_;
  std::vector<TransformerBlock> blocks_;
  std::vector<InjectionModule> injections_;
  ConvParams head_fuse_;
  ConvParams head_classifier_;
};

/// Multi-scale local tokens, one per emitted stride (4, 8, 16, 32 for the tiny preset).
std::vector<Tensor> token_pyramid(const Model& model, const Tensor& image);

/// Average-pools every scale to ceil(H_in / pool_divisor) and concatenates channels.
/// `coarsest_stride` is the stride of the last token, from which H_in is recovered.
Tensor pool_and_concat(std::span<const Tensor> tokens, int pool_divisor, int coarsest_stride);

Tensor semantics_extractor(const Model& model, const Tensor& pooled);

/// Injects the per-scale chunks of `global` into the deepest local tokens.
/// `local_tokens` holds only the injected (deepest) scales, shallow to deep.
std::vector<Tensor> inject_semantics(const Model& model, std::span<const Tensor> local_tokens, const Tensor& global);

/// Upsample-sum-fuse-classify, then resize the logits to `out_hw`.
Tensor segmentation_head(const Model& model, std::span<const Tensor> enhanced, std::array<std::size_t, 2> out_hw);

/// Full pipeline; returns sigmoid probabilities shaped (1, num_classes, H, W).
Tensor forward(const Model& model, const Tensor& image);
Tensor forward_logits(const Model& model, const Tensor& image);

/// Loads a WAIW bundle and builds it. Without `config_path` the bundle's arch must name a shipped preset.
Model load_model(const std::filesystem::path& weights_path, const std::filesystem::path& config_path = {});

}  // namespace woundcare::topformer
