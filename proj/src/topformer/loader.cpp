#include "woundcare/error.hpp"
#include "woundcare/topformer/model.hpp"

namespace woundcare::topformer {

Model load_model(const std::filesystem::path& weights_path, const std::filesystem::path& config_path) {
  const WeightBundle bundle = load_weights(weights_path);
  ModelConfig config;
  if (!config_path.empty()) {
    config = ModelConfig::load(config_path);
  } else if (bundle.arch() == tiny_preset().arch) {
    config = tiny_preset();
  } else {
    throw Error(ErrorCode::invalid_argument, "no preset for arch \"" + bundle.arch() + "\"; pass a model config",
                "model_config");
  }
  if (config.arch != bundle.arch())
    throw Error(ErrorCode::invalid_argument,
                "config arch \"" + config.arch + "\" does not match bundle arch \"" + bundle.arch() + "\"",
                "model_config");
  return Model::build(config, bundle);
}

}  // namespace woundcare::topformer
