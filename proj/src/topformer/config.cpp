#include "woundcare/topformer/config.hpp"

#include <fstream>
#include <numeric>

#include "woundcare/error.hpp"

namespace woundcare::topformer {
namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw_invalid("model config: missing \"" + std::string(key) + "\" in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw_invalid("model config: \"" + std::string(key) + "\" in " + where + " has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void push_conv_bn(std::vector<ParamSlot>& out, const std::string& prefix, std::size_t out_c, std::size_t in_c,
                  std::size_t k) {
  out.push_back({prefix + ".conv.weight", {out_c, in_c, k, k}, true});
  out.push_back({prefix + ".bn.weight", {out_c}, true});
  out.push_back({prefix + ".bn.bias", {out_c}, true});
  out.push_back({prefix + ".bn.running_mean", {out_c}, false});
  out.push_back({prefix + ".bn.running_var", {out_c}, false});
}

}  // namespace

std::vector<StageSpec> ModelConfig::layers() const {
  std::vector<StageSpec> out;
  for (const StageSpec& s : pyramid_stages) {
    for (int r = 0; r < s.repeats; ++r) {
      StageSpec layer = s;
      layer.repeats = 1;
      layer.stride = r == 0 ? s.stride : 1;
      out.push_back(layer);
    }
  }
  return out;
}

std::vector<int> ModelConfig::token_channels() const {
  const auto all = layers();
  std::vector<int> out;
  for (int idx : emit_after) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= all.size()) throw_invalid("model config: emit index out of range");
    out.push_back(all[static_cast<std::size_t>(idx)].channels);
  }
  return out;
}

std::vector<int> ModelConfig::token_strides() const {
  const auto all = layers();
  std::vector<int> out;
  for (int idx : emit_after) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= all.size()) throw_invalid("model config: emit index out of range");
    int stride = stem ? stem->stride : 1;
    for (int i = 0; i <= idx; ++i) stride *= all[static_cast<std::size_t>(i)].stride;
    out.push_back(stride);
  }
  return out;
}

int ModelConfig::max_stride() const {
  const auto strides = token_strides();
  return strides.empty() ? 1 : strides.back();
}

void ModelConfig::validate() const {
  if (input_channels < 1) throw_invalid("model config: input_channels must be positive");
  if (!stem) throw_invalid("model config: a stem is required");
  if (stem->channels < 1 || stem->kernel < 1 || stem->stride < 1) throw_invalid("model config: invalid stem");
  for (const StageSpec& s : pyramid_stages) {
    if (s.kernel < 1 || s.kernel % 2 == 0) throw_invalid("model config: stage kernels must be odd");
    if (s.expansion < 1 || s.channels < 1 || s.repeats < 1 || s.stride < 1) {
      throw_invalid("model config: stage fields must be positive");
    }
  }
  if (emit_after.empty()) throw_invalid("model config: no emitted scales");
  for (std::size_t i = 1; i < emit_after.size(); ++i) {
    if (emit_after[i] <= emit_after[i - 1]) throw_invalid("model config: emit_after must be strictly increasing");
  }
  const auto strides = token_strides();
  if (scales_emitted != strides) {
    std::string got;
    for (int s : strides) got += (got.empty() ? "" : ",") + std::to_string(s);
    throw_invalid("model config: stage strides emit scales [" + got + "], not scales_emitted");
  }
  const auto channels = token_channels();
  const int concat = std::accumulate(channels.begin(), channels.end(), 0);
  if (transformer.embed_dim != concat) {
    throw_invalid("model config: transformer embed_dim " + std::to_string(transformer.embed_dim) +
                  " != sum of token channels " + std::to_string(concat));
  }
  if (transformer.depth < 0 || transformer.head_count < 1 || transformer.key_dim < 1 || transformer.attn_ratio < 1 ||
      transformer.mlp_ratio < 1) {
    throw_invalid("model config: invalid transformer fields");
  }
  if (pool_divisor < 1 || pool_divisor % max_stride() != 0) {
    throw_invalid("model config: pool_divisor must be a multiple of the coarsest stride");
  }
  if (sim_channels.empty() || sim_channels.size() > emit_after.size()) {
    throw_invalid("model config: sim_channels must name 1..#scales injected scales");
  }
  for (int c : sim_channels) {
    if (c != head_channels) throw_invalid("model config: every sim output must match head_channels");
  }
  if (head_channels < 1 || num_classes < 1) throw_invalid("model config: head fields must be positive");
  if (!(bn_eps > 0.0)) throw_invalid("model config: bn_eps must be positive");
  for (double s : normalization.std) {
    if (!(s > 0.0)) throw_invalid("model config: normalization std must be positive");
  }
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.format_version = field<int>(j, "format_version", "root");
  if (c.format_version != 1) throw_invalid("model config: unsupported format_version " + std::to_string(c.format_version));
  c.arch = field<std::string>(j, "arch", "root");
  c.input_channels = field_or(j, "input_channels", 3);
  if (j.contains("stem") && !j.at("stem").is_null()) {
    const json& s = j.at("stem");
    c.stem = StemSpec{field<int>(s, "channels", "stem"), field<int>(s, "kernel", "stem"), field<int>(s, "stride", "stem")};
  }
  for (const json& s : field<json>(j, "pyramid_stages", "root")) {
    c.pyramid_stages.push_back(StageSpec{field<int>(s, "kernel", "stage"), field<int>(s, "expansion", "stage"),
                                         field<int>(s, "channels", "stage"), field<int>(s, "repeats", "stage"),
                                         field<int>(s, "stride", "stage")});
  }
  c.emit_after = field<std::vector<int>>(j, "emit_after", "root");
  c.scales_emitted = field<std::vector<int>>(j, "scales_emitted", "root");
  c.pool_divisor = field<int>(j, "pool_divisor", "root");
  const json& t = field<json>(j, "transformer", "root");
  c.transformer = TransformerSpec{field<int>(t, "embed_dim", "transformer"), field<int>(t, "depth", "transformer"),
                                  field<int>(t, "head_count", "transformer"), field<int>(t, "key_dim", "transformer"),
                                  field<int>(t, "attn_ratio", "transformer"), field<int>(t, "mlp_ratio", "transformer")};
  const auto fusion = field_or<std::string>(j, "sim_fusion", "add");
  if (fusion == "add") {
    c.sim_fusion = SimFusion::add;
  } else if (fusion == "gated") {
    c.sim_fusion = SimFusion::gated;
  } else {
    throw_invalid("model config: unknown sim_fusion \"" + fusion + "\"");
  }
  c.sim_channels = field<std::vector<int>>(j, "sim_channels", "root");
  c.head_channels = field<int>(j, "head_channels", "root");
  c.num_classes = field<int>(j, "num_classes", "root");
  c.bn_eps = field_or(j, "bn_eps", 1e-5);
  if (j.contains("normalization")) {
    const json& n = j.at("normalization");
    c.normalization.mean = field<std::array<double, 3>>(n, "mean", "normalization");
    c.normalization.std = field<std::array<double, 3>>(n, "std", "normalization");
  }
  return c;
}

json ModelConfig::to_json() const {
  json stages = json::array();
  for (const StageSpec& s : pyramid_stages) {
    stages.push_back({{"kernel", s.kernel}, {"expansion", s.expansion}, {"channels", s.channels},
                      {"repeats", s.repeats}, {"stride", s.stride}});
  }
  json j = {
      {"format_version", format_version},
      {"arch", arch},
      {"input_channels", input_channels},
      {"stem", stem ? json{{"channels", stem->channels}, {"kernel", stem->kernel}, {"stride", stem->stride}} : json()},
      {"pyramid_stages", stages},
      {"emit_after", emit_after},
      {"scales_emitted", scales_emitted},
      {"pool_divisor", pool_divisor},
      {"transformer",
       {{"embed_dim", transformer.embed_dim},
        {"depth", transformer.depth},
        {"head_count", transformer.head_count},
        {"key_dim", transformer.key_dim},
        {"attn_ratio", transformer.attn_ratio},
        {"mlp_ratio", transformer.mlp_ratio}}},
      {"sim_fusion", sim_fusion == SimFusion::add ? "add" : "gated"},
      {"sim_channels", sim_channels},
      {"head_channels", head_channels},
      {"num_classes", num_classes},
      {"bn_eps", bn_eps},
      {"normalization", {{"mean", normalization.mean}, {"std", normalization.std}}},
  };
  return j;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open model config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::format, "model config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

ModelConfig tiny_preset() {
  ModelConfig c;
  c.arch = "topformer-tiny";
  c.stem = StemSpec{16, 3, 2};
  c.pyramid_stages = {
      {3, 1, 16, 1, 1}, {3, 4, 16, 1, 2}, {3, 3, 16, 1, 1}, {5, 3, 32, 1, 2}, {5, 3, 32, 1, 1},
      {3, 3, 64, 1, 2}, {3, 3, 64, 1, 1}, {5, 6, 96, 1, 2}, {5, 6, 96, 1, 1},
  };
  c.emit_after = {2, 4, 6, 8};
  c.scales_emitted = {4, 8, 16, 32};
  c.pool_divisor = 64;
  c.transformer = TransformerSpec{208, 4, 4, 16, 2, 2};
  c.sim_fusion = SimFusion::add;
  c.sim_channels = {128, 128, 128};
  c.head_channels = 128;
  c.num_classes = 1;
  return c;
}

std::size_t ParamSlot::elements() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<ParamSlot> parameter_slots(const ModelConfig& c) {
  std::vector<ParamSlot> out;
  std::size_t channels = static_cast<std::size_t>(c.input_channels);
  if (c.stem) {
    push_conv_bn(out, "tpm.stem", static_cast<std::size_t>(c.stem->channels), channels,
                 static_cast<std::size_t>(c.stem->kernel));
    channels = static_cast<std::size_t>(c.stem->channels);
  }
  const auto layers = c.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const StageSpec& l = layers[i];
    const std::string p = "tpm.layers." + std::to_string(i);
    const std::size_t hidden = channels * static_cast<std::size_t>(l.expansion);
    if (l.expansion != 1) push_conv_bn(out, p + ".expand", hidden, channels, 1);
    push_conv_bn(out, p + ".dw", hidden, 1, static_cast<std::size_t>(l.kernel));
    push_conv_bn(out, p + ".project", static_cast<std::size_t>(l.channels), hidden, 1);
    channels = static_cast<std::size_t>(l.channels);
  }

  const TransformerSpec& t = c.transformer;
  const auto dim = static_cast<std::size_t>(t.embed_dim);
  const auto qk = static_cast<std::size_t>(t.head_count * t.key_dim);
  const auto v = static_cast<std::size_t>(t.head_count * t.key_dim * t.attn_ratio);
  const auto hidden = dim * static_cast<std::size_t>(t.mlp_ratio);
  for (int b = 0; b < t.depth; ++b) {
    const std::string p = "trans.blocks." + std::to_string(b);
    push_conv_bn(out, p + ".attn.to_q", qk, dim, 1);
    push_conv_bn(out, p + ".attn.to_k", qk, dim, 1);
    push_conv_bn(out, p + ".attn.to_v", v, dim, 1);
    push_conv_bn(out, p + ".attn.proj", dim, v, 1);
    push_conv_bn(out, p + ".mlp.fc1", hidden, dim, 1);
    out.push_back({p + ".mlp.dwconv.weight", {hidden, 1, 3, 3}, true});
    out.push_back({p + ".mlp.dwconv.bias", {hidden}, true});
    push_conv_bn(out, p + ".mlp.fc2", dim, hidden, 1);
  }

  const std::vector<int> token_channels = c.emit_after.empty() ? std::vector<int>{} : c.token_channels();
  const std::size_t first_injected = token_channels.size() - std::min(token_channels.size(), c.sim_channels.size());
  for (std::size_t k = 0; k < c.sim_channels.size() && first_injected + k < token_channels.size(); ++k) {
    const std::size_t scale = first_injected + k;
    const std::string p = "sim." + std::to_string(scale);
    const auto in_c = static_cast<std::size_t>(token_channels[scale]);
    const auto out_c = static_cast<std::size_t>(c.sim_channels[k]);
    push_conv_bn(out, p + ".local_embedding", out_c, in_c, 1);
    push_conv_bn(out, p + ".global_embedding", out_c, in_c, 1);
    if (c.sim_fusion == SimFusion::gated) push_conv_bn(out, p + ".global_act", out_c, in_c, 1);
  }

  const auto head = static_cast<std::size_t>(c.head_channels);
  push_conv_bn(out, "head.linear_fuse", head, 1, 1);
  out.push_back({"head.conv_seg.weight", {static_cast<std::size_t>(c.num_classes), head, 1, 1}, true});
  out.push_back({"head.conv_seg.bias", {static_cast<std::size_t>(c.num_classes)}, true});
  return out;
}

std::size_t count_parameters(const ModelConfig& config) {
  std::size_t total = 0;
  for (const ParamSlot& s : parameter_slots(config)) {
    if (s.trainable) total += s.elements();
  }
  return total;
}

}  // namespace woundcare::topformer
