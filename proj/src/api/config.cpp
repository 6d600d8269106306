#include "woundcare/api/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>

#include "woundcare/error.hpp"

namespace woundcare::api {
namespace {

const std::set<std::string> known_keys = {"host",      "port",           "data_dir",
                                          "model_path", "model_config",  "threshold",
                                          "upload_limit_bytes", "session_ttl_s", "worker_threads"};

std::string env_name(const std::string& key) {
  std::string out = env_prefix;
  for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

long long parse_integer(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw Error(ErrorCode::invalid_argument, env_name(key) + " is not an integer: \"" + text + "\"", key);
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw Error(ErrorCode::invalid_argument, env_name(key) + " is not a number: \"" + text + "\"", key);
  return v;
}

template <class T>
T json_field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::invalid_argument, "config key \"" + key + "\" has the wrong type", key);
  }
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

void ServiceConfig::validate() const {
  if (host.empty()) throw Error(ErrorCode::invalid_argument, "host must not be empty", "host");
  if (port < 0 || port > 65535) throw Error(ErrorCode::range, "port must be within 0..65535", "port");
  if (data_dir.empty()) throw Error(ErrorCode::invalid_argument, "data_dir must not be empty", "data_dir");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorCode::range, "threshold must be within (0, 1)", "threshold");
  if (upload_limit_bytes == 0) throw Error(ErrorCode::range, "upload limit must be positive", "upload_limit_bytes");
  if (session_ttl.count() <= 0) throw Error(ErrorCode::range, "session ttl must be positive", "session_ttl_s");
  if (worker_threads < 1) throw Error(ErrorCode::range, "need at least one worker", "worker_threads");
}

nlohmann::json ServiceConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"data_dir", data_dir.string()},
          {"model_path", model_path.string()},
          {"model_config", model_config.string()},
          {"threshold", threshold},
          {"upload_limit_bytes", upload_limit_bytes},
          {"session_ttl_s", session_ttl.count()},
          {"worker_threads", worker_threads}};
}

ServiceConfig config_from_json(const nlohmann::json& j, const EnvLookup& env) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known_keys.count(k)) throw Error(ErrorCode::invalid_argument, "unknown config key \"" + k + "\"", k);

  ServiceConfig c;
  if (j.contains("host")) c.host = json_field<std::string>(j, "host");
  if (j.contains("port")) c.port = json_field<int>(j, "port");
  if (j.contains("data_dir")) c.data_dir = json_field<std::string>(j, "data_dir");
  if (j.contains("model_path")) c.model_path = json_field<std::string>(j, "model_path");
  if (j.contains("model_config")) c.model_config = json_field<std::string>(j, "model_config");
  if (j.contains("threshold")) c.threshold = json_field<double>(j, "threshold");
  if (j.contains("upload_limit_bytes")) c.upload_limit_bytes = json_field<std::uint64_t>(j, "upload_limit_bytes");
  if (j.contains("session_ttl_s")) c.session_ttl = std::chrono::seconds(json_field<long long>(j, "session_ttl_s"));
  if (j.contains("worker_threads")) c.worker_threads = json_field<int>(j, "worker_threads");

  auto over = [&](const std::string& key) { return env ? env(env_name(key)) : std::nullopt; };
  if (auto v = over("host")) c.host = *v;
  if (auto v = over("port")) c.port = static_cast<int>(parse_integer("port", *v));
  if (auto v = over("data_dir")) c.data_dir = *v;
  if (auto v = over("model_path")) c.model_path = *v;
  if (auto v = over("model_config")) c.model_config = *v;
  if (auto v = over("threshold")) c.threshold = parse_double("threshold", *v);
  if (auto v = over("upload_limit_bytes")) {
    const long long n = parse_integer("upload_limit_bytes", *v);
    if (n <= 0) throw Error(ErrorCode::range, "upload limit must be positive", "upload_limit_bytes");
    c.upload_limit_bytes = static_cast<std::uint64_t>(n);
  }
  if (auto v = over("session_ttl_s")) c.session_ttl = std::chrono::seconds(parse_integer("session_ttl_s", *v));
  if (auto v = over("worker_threads")) c.worker_threads = static_cast<int>(parse_integer("worker_threads", *v));
  c.validate();
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open config " + path.string(), "config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::format, "config " + path.string() + " is not valid JSON: " + e.what(), "config");
  }
  // Relative paths in the file are relative to the file itself; environment values are not.
  if (j.is_object()) {
    for (const char* key : {"data_dir", "model_path", "model_config"}) {
      if (!j.contains(key) || !j[key].is_string()) continue;
      const std::filesystem::path p = j[key].get<std::string>();
      if (!p.empty() && p.is_relative()) j[key] = (path.parent_path() / p).string();
    }
  }
  return config_from_json(j, env);
}

}  // namespace woundcare::api
