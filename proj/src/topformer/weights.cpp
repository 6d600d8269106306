#include "woundcare/topformer/weights.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "woundcare/error.hpp"

namespace woundcare::topformer {
namespace {

using nlohmann::json;

constexpr std::uint8_t kMagic[4] = {'W', 'A', 'I', 'W'};
constexpr std::size_t kHeaderBytes = 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::string crc_hex(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << static_cast<std::uint32_t>(crc);
  return os.str();
}

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

}  // namespace

Shape shape_from_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() > 4) throw_invalid("tensor rank " + std::to_string(dims.size()) + " exceeds 4");
  std::size_t padded[4] = {1, 1, 1, 1};
  std::copy(dims.begin(), dims.end(), padded + (4 - dims.size()));
  return Shape{padded[0], padded[1], padded[2], padded[3]};
}

bool is_buffer_name(const std::string& name) {
  const auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

void WeightBundle::add(const std::string& name, std::vector<std::size_t> dims, std::vector<float> values) {
  if (name.empty()) throw_invalid("tensor name must not be empty");
  Shape shape = shape_from_dims(dims);
  tensors_.insert_or_assign(name, NamedTensor{std::move(dims), Tensor(shape, std::move(values))});
}

const NamedTensor& WeightBundle::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::not_found, "weight bundle has no tensor \"" + name + "\"");
  return it->second;
}

NamedTensor& WeightBundle::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::not_found, "weight bundle has no tensor \"" + name + "\"");
  return it->second;
}

std::size_t WeightBundle::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.tensor.size();
  return n;
}

std::size_t WeightBundle::trainable_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) {
    if (!is_buffer_name(name)) n += t.tensor.size();
  }
  return n;
}

std::vector<std::uint8_t> serialize_weights(const WeightBundle& bundle) {
  std::vector<std::uint8_t> data;
  json entries = json::array();
  for (const auto& [name, t] : bundle.tensors()) {
    const std::size_t offset = data.size();
    for (float v : t.tensor.data()) put_u32(data, std::bit_cast<std::uint32_t>(v));
    entries.push_back({{"name", name},
                       {"shape", t.dims},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"nbytes", data.size() - offset}});
  }
  const json manifest = {
      {"version", bundle.version()}, {"arch", bundle.arch()}, {"tensors", entries}, {"crc32", crc_hex(data)}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

WeightBundle parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("truncated header: expected 8 bytes, got " + std::to_string(bytes.size()), bytes.size());
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FormatError("bad magic, expected \"WAIW\"", 0);
  const std::uint32_t manifest_len = get_u32(bytes.data() + 4);
  if (bytes.size() - kHeaderBytes < manifest_len) {
    throw FormatError("truncated manifest: expected " + std::to_string(manifest_len) + " bytes, got " +
                          std::to_string(bytes.size() - kHeaderBytes),
                      bytes.size());
  }

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + kHeaderBytes, bytes.begin() + kHeaderBytes + manifest_len);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), kHeaderBytes + e.byte);
  }
  if (!manifest.is_object()) throw FormatError("manifest must be a JSON object", kHeaderBytes);
  if (manifest.value("version", -1) != WeightBundle::kFormatVersion) {
    throw FormatError("unsupported version " + manifest.value("version", json(nullptr)).dump(), kHeaderBytes);
  }
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw FormatError("manifest lacks a tensors array", kHeaderBytes);
  }

  const std::size_t data_start = kHeaderBytes + manifest_len;
  const std::span<const std::uint8_t> data = bytes.subspan(data_start);

  struct Entry {
    std::string name;
    std::vector<std::size_t> dims;
    std::size_t offset;
    std::size_t nbytes;
  };
  std::vector<Entry> entries;
  std::size_t expected_len = 0;
  for (const json& t : manifest["tensors"]) {
    Entry e;
    try {
      e.name = t.at("name").get<std::string>();
      e.dims = t.at("shape").get<std::vector<std::size_t>>();
      e.offset = t.at("offset").get<std::size_t>();
      e.nbytes = t.at("nbytes").get<std::size_t>();
      if (t.at("dtype").get<std::string>() != "f32") throw FormatError("tensor \"" + e.name + "\" has unsupported dtype", kHeaderBytes);
    } catch (const json::exception& ex) {
      throw FormatError(std::string("malformed tensor entry: ") + ex.what(), kHeaderBytes);
    }
    if (e.dims.size() > 4) throw FormatError("tensor \"" + e.name + "\" has rank > 4", kHeaderBytes);
    if (e.nbytes != product(e.dims) * 4) {
      throw FormatError("tensor \"" + e.name + "\" nbytes " + std::to_string(e.nbytes) + " does not match shape (" +
                            std::to_string(product(e.dims) * 4) + " bytes)",
                        data_start + e.offset);
    }
    expected_len = std::max(expected_len, e.offset + e.nbytes);
    entries.push_back(std::move(e));
  }

  if (data.size() < expected_len) {
    throw FormatError("truncated data section: expected " + std::to_string(expected_len) + " bytes, got " +
                          std::to_string(data.size()),
                      bytes.size());
  }
  if (data.size() > expected_len) {
    throw FormatError("data section has " + std::to_string(data.size() - expected_len) + " trailing bytes",
                      data_start + expected_len);
  }

  std::vector<const Entry*> by_offset;
  for (const Entry& e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(), [](const Entry* a, const Entry* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    const Entry& prev = *by_offset[i - 1];
    if (prev.offset + prev.nbytes > by_offset[i]->offset) {
      throw FormatError("tensor \"" + by_offset[i]->name + "\" overlaps \"" + prev.name + "\"",
                        data_start + by_offset[i]->offset);
    }
  }

  if (manifest.contains("crc32")) {
    const std::string want = manifest["crc32"].get<std::string>();
    const std::string got = crc_hex(data);
    if (want != got) throw FormatError("data checksum mismatch: manifest " + want + ", data " + got, data_start);
  } else {
    throw FormatError("manifest lacks crc32", kHeaderBytes);
  }

  WeightBundle bundle(manifest.value("arch", std::string{}));
  for (const Entry& e : entries) {
    if (bundle.contains(e.name)) throw FormatError("duplicate tensor \"" + e.name + "\"", data_start + e.offset);
    std::vector<float> values(e.nbytes / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = std::bit_cast<float>(get_u32(data.data() + e.offset + 4 * i));
    }
    bundle.add(e.name, e.dims, std::move(values));
  }
  return bundle;
}

void write_weights(const WeightBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

WeightBundle load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open weights " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_weights(bytes);
}

WeightBundle make_bundle(const ModelConfig& config, BundleInit init, std::uint32_t seed) {
  WeightBundle bundle(config.arch);
  std::mt19937 rng(seed);
  const auto uniform = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };
  const auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };

  for (const ParamSlot& slot : parameter_slots(config)) {
    std::vector<float> values(slot.elements(), 0.0f);
    if (init == BundleInit::random) {
      if (slot.dims.size() == 4) {
        const float fan_in = static_cast<float>(slot.dims[1] * slot.dims[2] * slot.dims[3]);
        const float bound = std::sqrt(6.0f / fan_in);
        for (float& v : values) v = uniform(-bound, bound);
      } else if (ends_with(slot.name, ".bn.weight")) {
        for (float& v : values) v = uniform(0.5f, 1.0f);
      } else if (ends_with(slot.name, ".running_var")) {
        for (float& v : values) v = uniform(0.5f, 1.5f);
      } else {
        for (float& v : values) v = uniform(-0.1f, 0.1f);
      }
    }
    bundle.add(slot.name, slot.dims, std::move(values));
  }
  return bundle;
}

}  // namespace woundcare::topformer
