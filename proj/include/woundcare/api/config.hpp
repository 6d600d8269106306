#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace woundcare::api {

/// Environment variables overriding a config file key: WOUNDCARE_<KEY in upper case>,
/// e.g. WOUNDCARE_PORT or WOUNDCARE_UPLOAD_LIMIT_BYTES.
inline constexpr const char* env_prefix = "WOUNDCARE_";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "data";
  std::filesystem::path model_path;
  std::filesystem::path model_config;
  double threshold = 0.75;
  std::uint64_t upload_limit_bytes = 20ull * 1024 * 1024;
  std::chrono::seconds session_ttl{12 * 3600};
  int worker_threads = 8;

  void validate() const;
  nlohmann::json to_json() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// Defaults, then the JSON object, then environment overrides. Unknown keys are rejected.
ServiceConfig config_from_json(const nlohmann::json& j, const EnvLookup& env = process_env);
ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

}  // namespace woundcare::api
