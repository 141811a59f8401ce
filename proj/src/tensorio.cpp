#include "stratgeo/tensorio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "stratgeo/error.hpp"
#include "stratgeo/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "bundle payloads are little-endian; big-endian hosts need byte swapping");

namespace stratgeo {

using nlohmann::json;

std::string_view dtype_name(Dtype d) noexcept {
  switch (d) {
    case Dtype::F32: return "f32";
    case Dtype::I64: return "i64";
    case Dtype::U8: return "u8";
  }
  return "?";
}

std::size_t dtype_width(Dtype d) noexcept {
  switch (d) {
    case Dtype::F32: return 4;
    case Dtype::I64: return 8;
    case Dtype::U8: return 1;
  }
  return 0;
}

namespace {

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::F32;
  if (s == "i64") return Dtype::I64;
  if (s == "u8") return Dtype::U8;
  fail(ErrorCode::DtypeUnsupported, "dtype '" + s + "'");
}

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t ArrayDescriptor::element_count() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
}

TensorBundle::TensorBundle(std::vector<ArrayDescriptor> manifest, std::vector<unsigned char> payload,
                           std::map<std::string, std::string> metadata)
    : manifest_(std::move(manifest)), payload_(std::move(payload)), metadata_(std::move(metadata)) {}

void TensorBundle::append(std::string name, Dtype dtype, std::vector<std::uint64_t> shape,
                          const void* data, std::size_t bytes) {
  require(!has(name), ErrorCode::InvariantViolation, "duplicate array name '" + name + "'");
  ArrayDescriptor d{std::move(name), dtype, std::move(shape), payload_.size(), bytes};
  require(d.element_count() * dtype_width(dtype) == bytes, ErrorCode::InvariantViolation,
          "array '" + d.name + "' shape does not match value count");
  const auto* p = static_cast<const unsigned char*>(data);
  payload_.insert(payload_.end(), p, p + bytes);
  manifest_.push_back(std::move(d));
}

void TensorBundle::add_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values) {
  append(std::move(name), Dtype::F32, std::move(shape), values.data(), values.size_bytes());
}

void TensorBundle::add_i64(std::string name, std::vector<std::uint64_t> shape,
                           std::span<const std::int64_t> values) {
  append(std::move(name), Dtype::I64, std::move(shape), values.data(), values.size_bytes());
}

void TensorBundle::add_u8(std::string name, std::vector<std::uint64_t> shape,
                          std::span<const std::uint8_t> values) {
  append(std::move(name), Dtype::U8, std::move(shape), values.data(), values.size_bytes());
}

bool TensorBundle::has(std::string_view name) const noexcept {
  return std::any_of(manifest_.begin(), manifest_.end(), [&](const auto& d) { return d.name == name; });
}

const ArrayDescriptor& TensorBundle::descriptor(std::string_view name) const {
  auto it = std::find_if(manifest_.begin(), manifest_.end(), [&](const auto& d) { return d.name == name; });
  require(it != manifest_.end(), ErrorCode::InvariantViolation, "no array named '" + std::string(name) + "'");
  return *it;
}

std::span<const unsigned char> TensorBundle::bytes_of(const ArrayDescriptor& d, Dtype expected) const {
  require(d.dtype == expected, ErrorCode::DtypeUnsupported,
          "array '" + d.name + "' is " + std::string(dtype_name(d.dtype)) + ", expected " +
              std::string(dtype_name(expected)));
  return {payload_.data() + d.byte_offset, static_cast<std::size_t>(d.byte_length)};
}

std::vector<float> TensorBundle::f32(std::string_view name) const {
  auto bytes = bytes_of(descriptor(name), Dtype::F32);
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::int64_t> TensorBundle::i64(std::string_view name) const {
  auto bytes = bytes_of(descriptor(name), Dtype::I64);
  std::vector<std::int64_t> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::uint8_t> TensorBundle::u8(std::string_view name) const {
  auto bytes = bytes_of(descriptor(name), Dtype::U8);
  return {bytes.begin(), bytes.end()};
}

void TensorBundle::validate() const {
  std::set<std::string> names;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& d : manifest_) {
    require(names.insert(d.name).second, ErrorCode::InvariantViolation, "duplicate array name '" + d.name + "'");
    std::uint64_t expected = d.element_count() * dtype_width(d.dtype);
    require(d.byte_length == expected, ErrorCode::PayloadBoundsError,
            "array '" + d.name + "' declares " + std::to_string(d.byte_length) + " bytes, shape needs " +
                std::to_string(expected));
    require(d.byte_offset <= payload_.size() && d.byte_length <= payload_.size() - d.byte_offset,
            ErrorCode::PayloadBoundsError,
            "array '" + d.name + "' [" + std::to_string(d.byte_offset) + ", +" + std::to_string(d.byte_length) +
                ") exceeds payload of " + std::to_string(payload_.size()) + " bytes");
    if (d.byte_length > 0) spans.emplace_back(d.byte_offset, d.byte_offset + d.byte_length);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    require(spans[i].first >= spans[i - 1].second, ErrorCode::PayloadBoundsError, "overlapping arrays");
}

std::string TensorBundle::manifest_json() const {
  json arrays = json::array();
  for (const auto& d : manifest_) {
    arrays.push_back({{"name", d.name},
                      {"dtype", dtype_name(d.dtype)},
                      {"shape", d.shape},
                      {"byte_offset", d.byte_offset},
                      {"byte_length", d.byte_length}});
  }
  json meta = json::object();
  for (const auto& [k, v] : metadata_) meta[k] = v;
  return json{{"arrays", arrays}, {"metadata", meta}}.dump();
}

std::string TensorBundle::content_hash() const {
  std::string m = manifest_json();
  std::uint64_t h = rng::fnv1a64(std::span(reinterpret_cast<const unsigned char*>(m.data()), m.size()));
  h = rng::fnv1a64(payload_, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TensorBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());

  std::array<unsigned char, 20> header{};
  in.read(reinterpret_cast<char*>(header.data()), 8);
  require(in.gcount() == 8 && std::memcmp(header.data(), TensorBundle::kMagic.data(), 8) == 0,
          ErrorCode::MagicMismatch, path.string());
  in.read(reinterpret_cast<char*>(header.data() + 8), 12);
  require(in.gcount() == 12, ErrorCode::ManifestParseError, "truncated header");
  auto version = get_le<std::uint32_t>(header.data() + 8);
  require(version == TensorBundle::kVersion, ErrorCode::ManifestParseError,
          "unsupported version " + std::to_string(version));
  auto manifest_len = get_le<std::uint64_t>(header.data() + 12);

  in.seekg(0, std::ios::end);
  auto file_size = static_cast<std::uint64_t>(in.tellg());
  require(manifest_len <= file_size - 20, ErrorCode::ManifestParseError, "manifest length exceeds file");
  in.seekg(20);

  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  std::vector<unsigned char> payload(file_size - 20 - manifest_len);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  require(static_cast<bool>(in) || payload.empty(), ErrorCode::IoError, "short read on " + path.string());

  std::vector<ArrayDescriptor> manifest;
  std::map<std::string, std::string> metadata;
  json doc;
  try {
    doc = json::parse(manifest_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ManifestParseError, e.what());
  }
  try {
    for (const auto& a : doc.at("arrays")) {
      ArrayDescriptor d;
      d.name = a.at("name").get<std::string>();
      d.dtype = parse_dtype(a.at("dtype").get<std::string>());
      d.shape = a.at("shape").get<std::vector<std::uint64_t>>();
      d.byte_offset = a.at("byte_offset").get<std::uint64_t>();
      d.byte_length = a.at("byte_length").get<std::uint64_t>();
      manifest.push_back(std::move(d));
    }
    if (doc.contains("metadata"))
      for (const auto& [k, v] : doc.at("metadata").items()) metadata[k] = v.get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ManifestParseError, e.what());
  }

  TensorBundle bundle(std::move(manifest), std::move(payload), std::move(metadata));
  bundle.validate();
  return bundle;
}

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& path) {
  bundle.validate();
  std::string manifest = bundle.manifest_json();
  std::string header(TensorBundle::kMagic);
  put_le<std::uint32_t>(header, TensorBundle::kVersion);
  put_le<std::uint64_t>(header, manifest.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  out.write(reinterpret_cast<const char*>(bundle.payload().data()),
            static_cast<std::streamsize>(bundle.payload().size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

std::size_t TokenTensor::kept() const noexcept {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

void TokenTensor::validate() const {
  require(batch_size >= 1 && seq_len >= 1 && width >= 1, ErrorCode::InvariantViolation,
          "token tensor dimensions must be >= 1");
  require(data.size() == batch_size * seq_len * width, ErrorCode::InvariantViolation,
          "token tensor data size does not match shape");
  require(mask.size() == batch_size * seq_len, ErrorCode::InvariantViolation,
          "mask shape does not match leading dimensions");
  require(kept() > 0, ErrorCode::EmptyMask, "mask has no kept tokens");
}

std::vector<std::size_t> kept_tokens(const TokenTensor& t) {
  std::vector<std::size_t> idx;
  idx.reserve(t.kept());
  for (std::size_t i = 0; i < t.tokens(); ++i)
    if (t.kept_at(i)) idx.push_back(i);
  return idx;
}

Eigen::MatrixXd masked_rows(const TokenTensor& t) {
  auto idx = kept_tokens(t);
  require(!idx.empty(), ErrorCode::EmptyMask, "mask has no kept tokens");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(t.width));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto row = t.row(idx[r]);
    for (std::size_t k = 0; k < t.width; ++k) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
  }
  return out;
}

ActivationTensor activation_from_bundle(const TensorBundle& bundle, std::string_view data_name,
                                        std::string_view mask_name) {
  const auto& d = bundle.descriptor(data_name);
  require(d.shape.size() == 3, ErrorCode::ShapeMismatch,
          "array '" + d.name + "' must be 3-D (batch, seq, width)");
  ActivationTensor t;
  t.batch_size = d.shape[0];
  t.seq_len = d.shape[1];
  t.width = d.shape[2];
  t.data = bundle.f32(data_name);
  if (bundle.has(mask_name)) {
    const auto& m = bundle.descriptor(mask_name);
    require(m.shape == std::vector<std::uint64_t>{d.shape[0], d.shape[1]}, ErrorCode::ShapeMismatch,
            "mask shape does not match leading dimensions of '" + d.name + "'");
    t.mask = bundle.u8(mask_name);
  } else {
    t.mask.assign(t.batch_size * t.seq_len, 1);
  }
  t.validate();
  return t;
}

void add_token_tensor(TensorBundle& bundle, const TokenTensor& t, std::string data_name, std::string mask_name) {
  bundle.add_f32(std::move(data_name), {t.batch_size, t.seq_len, t.width}, t.data);
  bundle.add_u8(std::move(mask_name), {t.batch_size, t.seq_len}, t.mask);
}

}  // namespace stratgeo
