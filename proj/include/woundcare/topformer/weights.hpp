#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "woundcare/tensor.hpp"
#include "woundcare/topformer/config.hpp"

namespace woundcare::topformer {

struct NamedTensor {
  std::vector<std::size_t> dims;  // as written in the manifest
  Tensor tensor;                  // dims right-aligned into (n, c, h, w)
};

/// Named parameter tensors as stored in a WAIW container.
///
/// Layout (all integers little-endian):
///   bytes 0..3      "WAIW"
///   bytes 4..7      u32 manifest length L
///   bytes 8..8+L    UTF-8 JSON manifest {version, arch, tensors[], crc32}
///   bytes 8+L..     data section, f32 values, offsets relative to its start
class WeightBundle {
 public:
  static constexpr int kFormatVersion = 1;

  WeightBundle() = default;
  explicit WeightBundle(std::string arch) : arch_(std::move(arch)) {}

  const std::string& arch() const noexcept { return arch_; }
  int version() const noexcept { return version_; }

  void add(const std::string& name, std::vector<std::size_t> dims, std::vector<float> values);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  /// Throws not_found naming the missing tensor.
  const NamedTensor& at(const std::string& name) const;
  NamedTensor& at(const std::string& name);

  const std::map<std::string, NamedTensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t total_elements() const;
  /// Elements excluding batch-norm running statistics.
  std::size_t trainable_elements() const;

 private:
  std::string arch_ = "topformer-tiny";
  int version_ = kFormatVersion;
  std::map<std::string, NamedTensor> tensors_;
};

/// True for names of non-trainable buffers (batch-norm running statistics).
bool is_buffer_name(const std::string& name);

Shape shape_from_dims(const std::vector<std::size_t>& dims);

std::vector<std::uint8_t> serialize_weights(const WeightBundle& bundle);
WeightBundle parse_weights(std::span<const std::uint8_t> bytes);
void write_weights(const WeightBundle& bundle, const std::filesystem::path& path);
WeightBundle load_weights(const std::filesystem::path& path);

enum class BundleInit { zeros, random };

/// A bundle containing exactly the slots demanded by `config`.
/// `random` draws He-scaled conv weights and near-identity batch norms.
WeightBundle make_bundle(const ModelConfig& config, BundleInit init, std::uint32_t seed = 0);

}  // namespace woundcare::topformer
