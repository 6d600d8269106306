#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace woundcare::store {

using Json = nlohmann::json;

struct Document {
  std::string collection;
  std::string key;
  std::uint64_t version = 0;
  Json body;
};

struct Blob {
  std::string key;
  std::string media_type;
  std::vector<std::uint8_t> bytes;
};

/// Points in the durable write sequence where a fault hook fires.
enum class WriteStage { temp_opened, chunk_written, temp_synced, renamed, directory_synced };

struct StoreOptions {
  /// Called at every WriteStage; test harnesses use it to kill the process mid-write.
  std::function<void(WriteStage)> fault_hook;
  /// Write temp files in chunks of this many bytes (0 = one write).
  std::size_t write_chunk = 0;
  bool fsync = true;
};

/// Directory-backed document store.
///
///   <root>/collections/<collection>/<escaped key>.json   {"body":...,"key":...,"version":N}
///   <root>/blobs/<sha256>                                 raw bytes
///   <root>/blobs/<sha256>.type                            media type
///
/// Every file is replaced by temp file + fsync + rename + directory fsync, so a reader
/// or a restarted process sees either the previous or the next version of a document.
class Store {
 public:
  explicit Store(std::filesystem::path root, StoreOptions options = {});

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Unconditional write; version becomes previous + 1 (1 for a new key).
  Document put(const std::string& collection, const std::string& key, const Json& body);
  /// Write only if the key does not exist yet; ErrorCode::conflict otherwise.
  Document create(const std::string& collection, const std::string& key, const Json& body);
  /// Compare-and-swap on version.
  Document atomic_update(const std::string& collection, const std::string& key, std::uint64_t expected_version,
                         const Json& body);
  /// Read-modify-write under the key's writer lock. `mutate` receives the current document
  /// (nullopt if absent) and returns the new body.
  Document update(const std::string& collection, const std::string& key,
                  const std::function<Json(const std::optional<Document>&)>& mutate);

  std::optional<Document> find(const std::string& collection, const std::string& key) const;
  Document get(const std::string& collection, const std::string& key) const;
  /// Documents whose key starts with `prefix`, ascending by key.
  std::vector<Document> list(const std::string& collection, const std::string& prefix = "") const;
  bool remove(const std::string& collection, const std::string& key);

  /// Monotone counter starting at 1, persisted like any other document.
  std::uint64_t next_sequence(const std::string& name);

  std::string put_blob(std::span<const std::uint8_t> bytes, const std::string& media_type);
  Blob get_blob(const std::string& key) const;
  bool has_blob(const std::string& key) const;

  static std::string escape_key(const std::string& key);
  static std::string unescape_key(const std::string& name);

 private:
  std::filesystem::path document_path(const std::string& collection, const std::string& key) const;
  std::mutex& lock_for(const std::string& collection, const std::string& key);
  Document write_locked(const std::string& collection, const std::string& key, std::uint64_t version,
                        const Json& body);
  void durable_write(const std::filesystem::path& target, std::span<const std::uint8_t> bytes);
  void sweep_temp_files();

  std::filesystem::path root_;
  StoreOptions options_;
  std::array<std::mutex, 64> stripes_;
};

}  // namespace woundcare::store
