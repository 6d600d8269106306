#include "woundcare/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "woundcare/crypto.hpp"
#include "woundcare/error.hpp"

namespace woundcare::store {
namespace fs = std::filesystem;
namespace {

constexpr const char* kTempMarker = ".tmp.";

void check_collection(const std::string& c) {
  const bool ok = !c.empty() && std::all_of(c.begin(), c.end(), [](char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
  });
  if (!ok) throw_invalid("invalid collection name \"" + c + "\"");
}

void check_key(const std::string& k) {
  if (k.empty()) throw_invalid("document key must not be empty");
  if (k.size() > 200) throw_invalid("document key is too long");
}

bool is_blob_key(const std::string& k) {
  return k.size() == 64 &&
         std::all_of(k.begin(), k.end(), [](char ch) { return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f'); });
}

[[noreturn]] void throw_errno(const std::string& what, const fs::path& p) {
  throw Error(ErrorCode::io, what + " " + p.string() + ": " + std::strerror(errno));
}

void fsync_directory(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) throw_errno("open directory", dir);
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw_errno("fsync directory", dir);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Document parse_document(const std::string& collection, const fs::path& p) {
  const std::string text = read_text(p);
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("version") || !j.contains("body") || !j.contains("key")) {
    throw Error(ErrorCode::format, "corrupt document " + p.string());
  }
  return {collection, j.at("key").get<std::string>(), j.at("version").get<std::uint64_t>(), std::move(j.at("body"))};
}

std::atomic<std::uint64_t> temp_counter{0};

}  // namespace

Store::Store(fs::path root, StoreOptions options) : root_(std::move(root)), options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(root_ / "collections", ec);
  fs::create_directories(root_ / "blobs", ec);
  if (!fs::is_directory(root_ / "collections") || !fs::is_directory(root_ / "blobs")) {
    throw Error(ErrorCode::io, "cannot create store directories under " + root_.string());
  }
  sweep_temp_files();
}

void Store::sweep_temp_files() {
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().filename().string().find(kTempMarker) != std::string::npos) {
      std::error_code ec;
      fs::remove(entry.path(), ec);
    }
  }
}

std::string Store::escape_key(const std::string& key) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    const auto ch = static_cast<unsigned char>(key[i]);
    const bool plain = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                       ch == '-' || (ch == '.' && i > 0);
    if (plain) {
      out += static_cast<char>(ch);
    } else {
      out += '%';
      out += hex[ch >> 4];
      out += hex[ch & 0xf];
    }
  }
  return out;
}

std::string Store::unescape_key(const std::string& name) {
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw Error(ErrorCode::format, "bad escape in document file name \"" + name + "\"");
  };
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] != '%') {
      out += name[i];
      continue;
    }
    if (i + 2 >= name.size()) {
      throw Error(ErrorCode::format, "truncated escape in document file name \"" + name + "\"");
    }
    out += static_cast<char>(nibble(name[i + 1]) * 16 + nibble(name[i + 2]));
    i += 2;
  }
  return out;
}

fs::path Store::document_path(const std::string& collection, const std::string& key) const {
  check_collection(collection);
  check_key(key);
  return root_ / "collections" / collection / (escape_key(key) + ".json");
}

std::mutex& Store::lock_for(const std::string& collection, const std::string& key) {
  return stripes_[std::hash<std::string>{}(collection + '\0' + key) % stripes_.size()];
}

void Store::durable_write(const fs::path& target, std::span<const std::uint8_t> bytes) {
  const fs::path dir = target.parent_path();
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path temp = dir / (target.filename().string() + kTempMarker + std::to_string(::getpid()) + "." +
                               std::to_string(temp_counter.fetch_add(1)));
  const auto hook = [&](WriteStage s) {
    if (options_.fault_hook) options_.fault_hook(s);
  };

  const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("create", temp);
  hook(WriteStage::temp_opened);
  const std::size_t chunk = options_.write_chunk == 0 ? std::max<std::size_t>(bytes.size(), 1) : options_.write_chunk;
  std::size_t done = 0;
  while (done < bytes.size()) {
    const std::size_t n = std::min(chunk, bytes.size() - done);
    const ssize_t w = ::write(fd, bytes.data() + done, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fs::remove(temp, ec);
      throw_errno("write", temp);
    }
    done += static_cast<std::size_t>(w);
    hook(WriteStage::chunk_written);
  }
  if (options_.fsync && ::fsync(fd) != 0) {
    ::close(fd);
    fs::remove(temp, ec);
    throw_errno("fsync", temp);
  }
  ::close(fd);
  hook(WriteStage::temp_synced);
  if (::rename(temp.c_str(), target.c_str()) != 0) {
    fs::remove(temp, ec);
    throw_errno("rename", temp);
  }
  hook(WriteStage::renamed);
  if (options_.fsync) fsync_directory(dir);
  hook(WriteStage::directory_synced);
}

Document Store::write_locked(const std::string& collection, const std::string& key, std::uint64_t version,
                             const Json& body) {
  Json file = {{"key", key}, {"version", version}, {"body", body}};
  const std::string text = file.dump();
  durable_write(document_path(collection, key),
                std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return {collection, key, version, body};
}

std::optional<Document> Store::find(const std::string& collection, const std::string& key) const {
  const fs::path p = document_path(collection, key);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return parse_document(collection, p);
  } catch (const Error& e) {
    // A concurrent remove between exists() and open() reads as absent.
    if (e.code() == ErrorCode::not_found) return std::nullopt;
    throw;
  }
}

Document Store::get(const std::string& collection, const std::string& key) const {
  auto d = find(collection, key);
  if (!d) throw Error(ErrorCode::not_found, collection + "/" + key + " not found");
  return std::move(*d);
}

std::vector<Document> Store::list(const std::string& collection, const std::string& prefix) const {
  check_collection(collection);
  std::vector<Document> out;
  const fs::path dir = root_ / "collections" / collection;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.find(kTempMarker) != std::string::npos || entry.path().extension() != ".json") continue;
    const std::string key = unescape_key(entry.path().stem().string());
    if (key.compare(0, prefix.size(), prefix) != 0) continue;
    try {
      out.push_back(parse_document(collection, entry.path()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::not_found) throw;
    }
  }
  std::sort(out.begin(), out.end(), [](const Document& a, const Document& b) { return a.key < b.key; });
  return out;
}

Document Store::put(const std::string& collection, const std::string& key, const Json& body) {
  std::lock_guard lock(lock_for(collection, key));
  const auto current = find(collection, key);
  return write_locked(collection, key, current ? current->version + 1 : 1, body);
}

Document Store::create(const std::string& collection, const std::string& key, const Json& body) {
  std::lock_guard lock(lock_for(collection, key));
  if (find(collection, key)) throw Error(ErrorCode::conflict, collection + "/" + key + " already exists");
  return write_locked(collection, key, 1, body);
}

Document Store::atomic_update(const std::string& collection, const std::string& key, std::uint64_t expected_version,
                              const Json& body) {
  std::lock_guard lock(lock_for(collection, key));
  const auto current = find(collection, key);
  if (!current) throw Error(ErrorCode::not_found, collection + "/" + key + " not found");
  if (current->version != expected_version) {
    throw Error(ErrorCode::conflict, collection + "/" + key + " is at version " + std::to_string(current->version) +
                                         ", expected " + std::to_string(expected_version));
  }
  return write_locked(collection, key, expected_version + 1, body);
}

Document Store::update(const std::string& collection, const std::string& key,
                       const std::function<Json(const std::optional<Document>&)>& mutate) {
  std::lock_guard lock(lock_for(collection, key));
  const auto current = find(collection, key);
  Json body = mutate(current);
  return write_locked(collection, key, current ? current->version + 1 : 1, body);
}

bool Store::remove(const std::string& collection, const std::string& key) {
  std::lock_guard lock(lock_for(collection, key));
  const fs::path p = document_path(collection, key);
  std::error_code ec;
  if (!fs::remove(p, ec)) return false;
  if (options_.fsync) fsync_directory(p.parent_path());
  return true;
}

std::uint64_t Store::next_sequence(const std::string& name) {
  const Document d = update("sequences", name, [](const std::optional<Document>& cur) {
    return Json(cur ? cur->body.get<std::uint64_t>() + 1 : 1);
  });
  return d.body.get<std::uint64_t>();
}

std::string Store::put_blob(std::span<const std::uint8_t> bytes, const std::string& media_type) {
  const std::string key = crypto::sha256_hex(bytes);
  const fs::path data = root_ / "blobs" / key;
  if (fs::exists(data)) return key;
  durable_write(root_ / "blobs" / (key + ".type"),
                std::span(reinterpret_cast<const std::uint8_t*>(media_type.data()), media_type.size()));
  durable_write(data, bytes);
  return key;
}

bool Store::has_blob(const std::string& key) const { return is_blob_key(key) && fs::exists(root_ / "blobs" / key); }

Blob Store::get_blob(const std::string& key) const {
  if (!has_blob(key)) throw Error(ErrorCode::not_found, "blob " + key + " not found");
  Blob b;
  b.key = key;
  const std::string text = read_text(root_ / "blobs" / key);
  b.bytes.assign(text.begin(), text.end());
  const fs::path type = root_ / "blobs" / (key + ".type");
  b.media_type = fs::exists(type) ? read_text(type) : "application/octet-stream";
  return b;
}

}  // namespace woundcare::store
