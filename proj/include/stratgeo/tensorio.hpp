#pragma once

// Tensor-bundle container: one file holding named little-endian arrays.
//
// Layout:
//   "STRATGEO"            8-byte magic
//   u32 version           currently 1
//   u64 manifest_length   bytes of UTF-8 JSON that follow
//   manifest              {"arrays":[{name,dtype,shape,byte_offset,byte_length}],
//                          "metadata":{string:string}}
//   payload               raw bytes; byte_offset is relative to payload start

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stratgeo {

enum class Dtype { F32, I64, U8 };

std::string_view dtype_name(Dtype d) noexcept;
std::size_t dtype_width(Dtype d) noexcept;

struct ArrayDescriptor {
  std::string name;
  Dtype dtype = Dtype::F32;
  std::vector<std::uint64_t> shape;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;

  std::uint64_t element_count() const noexcept;
  bool operator==(const ArrayDescriptor&) const = default;
};

class TensorBundle {
 public:
  static constexpr std::string_view kMagic = "STRATGEO";
  static constexpr std::uint32_t kVersion = 1;

  TensorBundle() = default;
  TensorBundle(std::vector<ArrayDescriptor> manifest, std::vector<unsigned char> payload,
               std::map<std::string, std::string> metadata);

  // Appending keeps the payload padding-free: each array starts where the
  // previous one ended.
  void add_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values);
  void add_i64(std::string name, std::vector<std::uint64_t> shape, std::span<const std::int64_t> values);
  void add_u8(std::string name, std::vector<std::uint64_t> shape, std::span<const std::uint8_t> values);

  bool has(std::string_view name) const noexcept;
  const ArrayDescriptor& descriptor(std::string_view name) const;

  std::vector<float> f32(std::string_view name) const;
  std::vector<std::int64_t> i64(std::string_view name) const;
  std::vector<std::uint8_t> u8(std::string_view name) const;

  const std::vector<ArrayDescriptor>& manifest() const noexcept { return manifest_; }
  const std::vector<unsigned char>& payload() const noexcept { return payload_; }
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Throws InvariantViolation / PayloadBoundsError when a bundle invariant fails.
  void validate() const;

  /// FNV-1a over manifest JSON and payload, as 16 hex digits.
  std::string content_hash() const;

  std::string manifest_json() const;

  bool operator==(const TensorBundle&) const = default;

 private:
  void append(std::string name, Dtype dtype, std::vector<std::uint64_t> shape, const void* data,
              std::size_t bytes);
  std::span<const unsigned char> bytes_of(const ArrayDescriptor& d, Dtype expected) const;

  std::vector<ArrayDescriptor> manifest_;
  std::vector<unsigned char> payload_;
  std::map<std::string, std::string> metadata_;
};

TensorBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const TensorBundle& bundle, const std::filesystem::path& path);

/// Per-token tensor (batch × seq × width) in row-major order with a keep-mask.
struct TokenTensor {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::size_t width = 0;
  std::vector<float> data;
  std::vector<std::uint8_t> mask;  // batch × seq, nonzero = kept

  std::size_t tokens() const noexcept { return batch_size * seq_len; }
  std::size_t kept() const noexcept;
  bool kept_at(std::size_t token) const noexcept { return mask[token] != 0; }
  std::span<const float> row(std::size_t token) const noexcept {
    return {data.data() + token * width, width};
  }
  std::span<float> row(std::size_t token) noexcept { return {data.data() + token * width, width}; }

  void validate() const;
};

/// Residual-stream activations; width is d_model.
using ActivationTensor = TokenTensor;

/// Token positions where the mask is true, in row-major scan order, as f64 rows.
Eigen::MatrixXd masked_rows(const TokenTensor& t);

/// Indices (b * seq_len + s) of kept tokens in scan order.
std::vector<std::size_t> kept_tokens(const TokenTensor& t);

/// Reads "resid" (f32, 3-D) and "mask" (u8, 2-D; all-true when absent).
ActivationTensor activation_from_bundle(const TensorBundle& bundle, std::string_view data_name = "resid",
                                        std::string_view mask_name = "mask");

void add_token_tensor(TensorBundle& bundle, const TokenTensor& t, std::string data_name,
                      std::string mask_name);

}  // namespace stratgeo
