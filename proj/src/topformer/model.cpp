#include "woundcare/topformer/model.hpp"

#include <set>

#include "woundcare/error.hpp"

namespace woundcare::topformer {
namespace {

class SlotReader {
 public:
  SlotReader(const WeightBundle& weights, double eps) : weights_(weights), eps_(static_cast<float>(eps)) {}

  const Tensor& take(const std::string& name) {
    consumed_.insert(name);
    return weights_.at(name).tensor;
  }

  std::vector<float> take_vector(const std::string& name) {
    const Tensor& t = take(name);
    return {t.data().begin(), t.data().end()};
  }

  ConvParams conv_bn(const std::string& prefix, int stride, int pad, int groups) {
    ConvParams conv;
    conv.weight = take(prefix + ".conv.weight");
    conv.stride = {stride, stride};
    conv.padding = {pad, pad};
    conv.groups = groups;
    BatchNormParams bn{take_vector(prefix + ".bn.weight"), take_vector(prefix + ".bn.bias"),
                       take_vector(prefix + ".bn.running_mean"), take_vector(prefix + ".bn.running_var"), eps_};
    try {
      return fold_batchnorm(conv, bn);
    } catch (const Error& e) {
      throw_invalid(prefix + ": " + e.what());
    }
  }

  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [name, t] : weights_.tensors()) {
      if (!consumed_.count(name)) out.push_back(name);
    }
    return out;
  }

 private:
  const WeightBundle& weights_;
  float eps_;
  std::set<std::string> consumed_;
};

Tensor conv_act(const Tensor& x, const ConvParams& p, Activation act) {
  Tensor y = conv2d(x, p);
  activation_inplace(y, act);
  return y;
}

}  // namespace

Model Model::build(const ModelConfig& config, const WeightBundle& weights, std::vector<std::string>* unused) {
  config.validate();
  for (const ParamSlot& slot : parameter_slots(config)) {
    if (!weights.contains(slot.name)) throw Error(ErrorCode::not_found, "weight bundle is missing \"" + slot.name + "\"");
    const auto& dims = weights.at(slot.name).dims;
    if (dims != slot.dims) {
      std::string want, got;
      for (auto d : slot.dims) want += (want.empty() ? "" : ",") + std::to_string(d);
      for (auto d : dims) got += (got.empty() ? "" : ",") + std::to_string(d);
      throw_invalid("tensor \"" + slot.name + "\" has shape [" + got + "], expected [" + want + "]");
    }
  }

  Model m;
  m.config_ = config;
  m.parameter_count_ = count_parameters(config);
  SlotReader r(weights, config.bn_eps);

  m.stem_ = r.conv_bn("tpm.stem", config.stem->stride, config.stem->kernel / 2, 1);
  int channels = config.stem->channels;
  const auto layers = config.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const StageSpec& l = layers[i];
    const std::string p = "tpm.layers." + std::to_string(i);
    InvertedResidual block;
    const int hidden = channels * l.expansion;
    if (l.expansion != 1) block.expand = r.conv_bn(p + ".expand", 1, 0, 1);
    block.depthwise = r.conv_bn(p + ".dw", l.stride, l.kernel / 2, hidden);
    block.project = r.conv_bn(p + ".project", 1, 0, 1);
    block.residual = l.stride == 1 && channels == l.channels;
    m.layers_.push_back(std::move(block));
    channels = l.channels;
  }

  const TransformerSpec& t = config.transformer;
  for (int b = 0; b < t.depth; ++b) {
    const std::string p = "trans.blocks." + std::to_string(b);
    TransformerBlock block;
    block.attention.head_count = t.head_count;
    block.attention.key_dim = t.key_dim;
    block.attention.value_dim = t.key_dim * t.attn_ratio;
    block.attention.to_q = r.conv_bn(p + ".attn.to_q", 1, 0, 1);
    block.attention.to_k = r.conv_bn(p + ".attn.to_k", 1, 0, 1);
    block.attention.to_v = r.conv_bn(p + ".attn.to_v", 1, 0, 1);
    block.attention.proj = r.conv_bn(p + ".attn.proj", 1, 0, 1);
    block.attention.pre_projection = Activation::relu6;
    block.fc1 = r.conv_bn(p + ".mlp.fc1", 1, 0, 1);
    block.dwconv.weight = r.take(p + ".mlp.dwconv.weight");
    block.dwconv.bias = r.take_vector(p + ".mlp.dwconv.bias");
    block.dwconv.padding = {1, 1};
    block.dwconv.groups = t.embed_dim * t.mlp_ratio;
    block.fc2 = r.conv_bn(p + ".mlp.fc2", 1, 0, 1);
    m.blocks_.push_back(std::move(block));
  }

  const std::size_t scales = config.emit_after.size();
  for (std::size_t scale = scales - config.sim_channels.size(); scale < scales; ++scale) {
    const std::string p = "sim." + std::to_string(scale);
    InjectionModule sim;
    sim.local_embedding = r.conv_bn(p + ".local_embedding", 1, 0, 1);
    sim.global_embedding = r.conv_bn(p + ".global_embedding", 1, 0, 1);
    if (config.sim_fusion == SimFusion::gated) sim.global_act = r.conv_bn(p + ".global_act", 1, 0, 1);
    m.injections_.push_back(std::move(sim));
  }

  m.head_fuse_ = r.conv_bn("head.linear_fuse", 1, 0, config.head_channels);
  m.head_classifier_.weight = r.take("head.conv_seg.weight");
  m.head_classifier_.bias = r.take_vector("head.conv_seg.bias");

  if (unused) *unused = r.unused();
  return m;
}

std::vector<Tensor> token_pyramid(const Model& model, const Tensor& image) {
  const ModelConfig& c = model.config();
  const Shape& s = image.shape();
  if (s.c != static_cast<std::size_t>(c.input_channels)) {
    throw_invalid("token_pyramid: image has " + std::to_string(s.c) + " channels, expected " +
                  std::to_string(c.input_channels));
  }
  const auto stride = static_cast<std::size_t>(c.max_stride());
  if (s.h == 0 || s.w == 0 || s.h % stride != 0 || s.w % stride != 0) {
    throw_invalid("token_pyramid: image extent " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                  " is not divisible by " + std::to_string(stride));
  }

  std::vector<Tensor> tokens;
  Tensor x = conv_act(image, model.stem(), Activation::relu6);
  std::size_t next_emit = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const InvertedResidual& block = model.layers()[i];
    Tensor h = block.expand ? conv_act(x, *block.expand, Activation::relu6) : x;
    h = conv_act(h, block.depthwise, Activation::relu6);
    h = conv2d(h, block.project);
    x = block.residual ? elementwise(h, x, ElementwiseOp::add) : std::move(h);
    if (next_emit < c.emit_after.size() && static_cast<std::size_t>(c.emit_after[next_emit]) == i) {
      tokens.push_back(x);
      ++next_emit;
    }
  }
  return tokens;
}

Tensor pool_and_concat(std::span<const Tensor> tokens, int pool_divisor, int coarsest_stride) {
  if (tokens.empty()) throw_invalid("pool_and_concat: no tokens");
  if (coarsest_stride < 1 || pool_divisor < coarsest_stride || pool_divisor % coarsest_stride != 0) {
    throw_invalid("pool_and_concat: pool_divisor must be a multiple of the coarsest stride");
  }
  const auto factor = static_cast<std::size_t>(pool_divisor / coarsest_stride);
  const Shape& last = tokens.back().shape();
  const std::array<std::size_t, 2> target{(last.h + factor - 1) / factor, (last.w + factor - 1) / factor};
  std::vector<Tensor> pooled;
  for (const Tensor& t : tokens) {
    if (t.shape().n != last.n) throw_invalid("pool_and_concat: tokens disagree on batch extent");
    pooled.push_back(adaptive_avg_pool(t, target));
  }
  return concat_channels(pooled);
}

Tensor semantics_extractor(const Model& model, const Tensor& pooled) {
  const auto dim = static_cast<std::size_t>(model.config().transformer.embed_dim);
  if (pooled.shape().c != dim) {
    throw_invalid("semantics_extractor: input has " + std::to_string(pooled.shape().c) + " channels, expected " +
                  std::to_string(dim));
  }
  Tensor x = pooled;
  for (const TransformerBlock& block : model.blocks()) {
    x = elementwise(x, multi_head_attention(x, block.attention), ElementwiseOp::add);
    Tensor h = conv2d(x, block.fc1);
    h = conv_act(h, block.dwconv, Activation::relu6);
    h = conv2d(h, block.fc2);
    x = elementwise(x, h, ElementwiseOp::add);
  }
  return x;
}

std::vector<Tensor> inject_semantics(const Model& model, std::span<const Tensor> local_tokens, const Tensor& global) {
  const ModelConfig& c = model.config();
  const auto channels = c.token_channels();
  std::size_t total = 0;
  for (int ch : channels) total += static_cast<std::size_t>(ch);
  if (total != global.shape().c) {
    throw_invalid("inject_semantics: scale partition sums to " + std::to_string(total) +
                  " channels but global semantics have " + std::to_string(global.shape().c));
  }
  if (local_tokens.size() != model.injections().size()) {
    throw_invalid("inject_semantics: got " + std::to_string(local_tokens.size()) + " local scales, expected " +
                  std::to_string(model.injections().size()));
  }

  const std::size_t first = channels.size() - model.injections().size();
  std::size_t offset = 0;
  for (std::size_t s = 0; s < first; ++s) offset += static_cast<std::size_t>(channels[s]);

  std::vector<Tensor> out;
  for (std::size_t k = 0; k < local_tokens.size(); ++k) {
    const auto width = static_cast<std::size_t>(channels[first + k]);
    const Tensor& local = local_tokens[k];
    if (local.shape().c != width) {
      throw_invalid("inject_semantics: local scale " + std::to_string(first + k) + " has " +
                    std::to_string(local.shape().c) + " channels, expected " + std::to_string(width));
    }
    const Tensor chunk = slice_channels(global, offset, width);
    offset += width;
    const InjectionModule& sim = model.injections()[k];
    const std::array<std::size_t, 2> size{local.shape().h, local.shape().w};

    Tensor fused = conv2d(local, sim.local_embedding);
    if (sim.global_act) {
      Tensor gate = conv_act(chunk, *sim.global_act, Activation::hard_sigmoid);
      fused = elementwise(fused, bilinear_resize(gate, size), ElementwiseOp::mul);
    }
    fused = elementwise(fused, bilinear_resize(conv2d(chunk, sim.global_embedding), size), ElementwiseOp::add);
    out.push_back(std::move(fused));
  }
  return out;
}

Tensor segmentation_head(const Model& model, std::span<const Tensor> enhanced, std::array<std::size_t, 2> out_hw) {
  if (enhanced.empty()) throw_invalid("segmentation_head: no enhanced tokens");
  const Shape& finest = enhanced.front().shape();
  Tensor sum = enhanced.front();
  for (std::size_t i = 1; i < enhanced.size(); ++i) {
    sum = elementwise(sum, bilinear_resize(enhanced[i], {finest.h, finest.w}), ElementwiseOp::add);
  }
  Tensor fused = conv_act(sum, model.head_fuse(), Activation::relu);
  return bilinear_resize(conv2d(fused, model.head_classifier()), out_hw);
}

Tensor forward_logits(const Model& model, const Tensor& image) {
  const ModelConfig& c = model.config();
  const std::vector<Tensor> tokens = token_pyramid(model, image);
  const Tensor global = semantics_extractor(model, pool_and_concat(tokens, c.pool_divisor, c.max_stride()));
  const std::size_t first = tokens.size() - model.injections().size();
  const std::vector<Tensor> enhanced =
      inject_semantics(model, std::span<const Tensor>(tokens).subspan(first), global);
  return segmentation_head(model, enhanced, {image.shape().h, image.shape().w});
}

Tensor forward(const Model& model, const Tensor& image) {
  Tensor logits = forward_logits(model, image);
  activation_inplace(logits, Activation::sigmoid);
  return logits;
}

}  // namespace woundcare::topformer
