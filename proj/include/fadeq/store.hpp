/*
 * Copyright 2026 The fadeq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "fadeq/error.hpp"
#include "fadeq/quant.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fadeq {

enum class DType : std::uint8_t { f32 = 0, i32 = 1 };

/// One named array as stored on disk: f32 or i32, row-major.
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::variant<std::vector<float>, std::vector<std::int32_t>> data;

  DType dtype() const noexcept { return data.index() == 0 ? DType::f32 : DType::i32; }

  std::size_t element_count() const noexcept {
    return std::visit([](const auto &v) { return v.size(); }, data);
  }

  std::uint64_t shape_product() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
  }

  static Tensor from_matrix(const Matrix &m) {
    Tensor t;
    t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    std::vector<float> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        v[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
      }
    }
    t.data = std::move(v);
    return t;
  }

  static Tensor from_codes(const CodeMatrix &m) {
    Tensor t;
    t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    std::vector<std::int32_t> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    }
    t.data = std::move(v);
    return t;
  }

  /// Rank-2 f32 tensor widened to a double matrix (rank 1 becomes a column).
  Matrix to_matrix() const {
    if (dtype() != DType::f32) throw Error(ErrorCode::invalid_argument, "tensor is not f32");
    if (shape.size() != 1 && shape.size() != 2) {
      throw Error(ErrorCode::shape_mismatch, "tensor of rank " + std::to_string(shape.size()) + " is not a matrix");
    }
    const auto rows = static_cast<Eigen::Index>(shape[0]);
    const auto cols = shape.size() == 2 ? static_cast<Eigen::Index>(shape[1]) : Eigen::Index{1};
    const auto &v = std::get<std::vector<float>>(data);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
    }
    return m;
  }

  friend bool operator==(const Tensor &, const Tensor &) = default;
};

/// Named tensors plus string metadata.
struct TensorStore {
  std::map<std::string, Tensor> entries;
  std::map<std::string, std::string> metadata;

  const Tensor &at(const std::string &name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error(ErrorCode::invalid_argument, "tensor '" + name + "' not found in store");
    return it->second;
  }

  bool contains(const std::string &name) const { return entries.count(name) != 0; }

  friend bool operator==(const TensorStore &, const TensorStore &) = default;
};

/// File layout (all integers little-endian):
///   "FADETNSR" | u32 version | u32 count
///   per entry: u16 name_len | name | u8 dtype | u8 rank | u64 dims[rank] | u64 offset
///   payload (raw row-major values; offsets relative to payload start)
///   u32 CRC32 of payload
/// Metadata travels as an i32 entry named "__metadata__" holding UTF-8 JSON
/// packed four bytes per element, space padded.
namespace store_format {

inline constexpr char kMagic[8] = {'F', 'A', 'D', 'E', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::string_view kMetadataEntry = "__metadata__";

}  // namespace store_format

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t> &out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t> &bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) throw Error(ErrorCode::truncated, "tensor store header is truncated");
  }

  const std::vector<std::uint8_t> &bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t *data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline Tensor pack_metadata(const std::map<std::string, std::string> &metadata) {
  std::string text = nlohmann::json(metadata).dump();
  while (text.size() % 4 != 0) text.push_back(' ');
  std::vector<std::int32_t> words(text.size() / 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t w = 0;
    for (std::size_t b = 0; b < 4; ++b) w |= static_cast<std::uint32_t>(static_cast<unsigned char>(text[4 * i + b])) << (8 * b);
    words[i] = static_cast<std::int32_t>(w);
  }
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(words.size())};
  t.data = std::move(words);
  return t;
}

inline std::map<std::string, std::string> unpack_metadata(const Tensor &t) {
  if (t.dtype() != DType::i32) throw Error(ErrorCode::malformed, "metadata entry must be i32");
  std::string text;
  for (std::int32_t word : std::get<std::vector<std::int32_t>>(t.data)) {
    const auto w = static_cast<std::uint32_t>(word);
    for (std::size_t b = 0; b < 4; ++b) text.push_back(static_cast<char>((w >> (8 * b)) & 0xFFu));
  }
  try {
    return nlohmann::json::parse(text).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::malformed, std::string("metadata entry is not a JSON string map: ") + e.what());
  }
}

inline void append_payload(std::vector<std::uint8_t> &out, const Tensor &t) {
  std::visit(
      [&](const auto &values) {
        for (auto v : values) {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, float>) {
            put_le(out, std::bit_cast<std::uint32_t>(v));
          } else {
            put_le(out, v);
          }
        }
      },
      t.data);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_store(const TensorStore &store) {
  std::vector<std::pair<std::string, const Tensor *>> items;
  for (const auto &[name, tensor] : store.entries) {
    if (name == store_format::kMetadataEntry) {
      throw Error(ErrorCode::invalid_argument, "entry name '__metadata__' is reserved");
    }
    if (name.size() > 0xFFFF) throw Error(ErrorCode::invalid_argument, "entry name too long");
    if (tensor.shape.size() > 0xFF) throw Error(ErrorCode::invalid_argument, "tensor rank too large");
    if (tensor.shape_product() != tensor.element_count()) {
      throw Error(ErrorCode::shape_mismatch, "tensor '" + name + "' data length does not match its shape");
    }
    items.emplace_back(name, &tensor);
  }
  Tensor meta;
  if (!store.metadata.empty()) {
    meta = detail::pack_metadata(store.metadata);
    items.emplace_back(std::string(store_format::kMetadataEntry), &meta);
  }

  std::vector<std::uint8_t> out(std::begin(store_format::kMagic), std::end(store_format::kMagic));
  detail::put_le(out, store_format::kVersion);
  detail::put_le(out, static_cast<std::uint32_t>(items.size()));
  std::uint64_t offset = 0;
  for (const auto &[name, t] : items) {
    detail::put_le(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t->dtype()));
    out.push_back(static_cast<std::uint8_t>(t->shape.size()));
    for (auto d : t->shape) detail::put_le(out, d);
    detail::put_le(out, offset);
    offset += t->element_count() * 4;
  }
  const std::size_t payload_start = out.size();
  for (const auto &item : items) detail::append_payload(out, *item.second);
  detail::put_le(out, detail::crc32_of(out.data() + payload_start, out.size() - payload_start));
  return out;
}

inline TensorStore decode_store(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < sizeof(store_format::kMagic)) throw Error(ErrorCode::truncated, "tensor store is truncated");
  if (std::memcmp(bytes.data(), store_format::kMagic, sizeof(store_format::kMagic)) != 0) {
    throw Error(ErrorCode::bad_magic, "not a FADETNSR tensor store");
  }
  if (bytes.size() < 8 + 4 + 4 + 4) throw Error(ErrorCode::truncated, "tensor store is truncated");
  const std::size_t body_end = bytes.size() - 4;
  detail::ByteReader reader(bytes, body_end);
  reader.get_string(8);
  const auto version = reader.get<std::uint32_t>();
  if (version != store_format::kVersion) {
    throw Error(ErrorCode::version_mismatch, "unsupported tensor store version " + std::to_string(version));
  }
  const auto count = reader.get<std::uint32_t>();

  struct Header {
    std::string name;
    DType dtype;
    std::vector<std::uint64_t> shape;
    std::uint64_t offset;
  };
  std::vector<Header> headers;
  headers.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t e = 0; e < count; ++e) {
    Header h;
    h.name = reader.get_string(reader.get<std::uint16_t>());
    const auto dtype = reader.get<std::uint8_t>();
    if (dtype > 1) throw Error(ErrorCode::malformed, "entry '" + h.name + "' has unknown dtype " + std::to_string(dtype));
    h.dtype = static_cast<DType>(dtype);
    const auto rank = reader.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) h.shape.push_back(reader.get<std::uint64_t>());
    h.offset = reader.get<std::uint64_t>();
    headers.push_back(std::move(h));
  }

  const std::size_t payload_start = reader.pos();
  const std::size_t payload_size = body_end - payload_start;
  std::uint64_t expected = 0;
  for (const auto &h : headers) {
    const std::uint64_t n = std::accumulate(h.shape.begin(), h.shape.end(), std::uint64_t{1}, std::multiplies<>());
    if (h.offset != expected) throw Error(ErrorCode::malformed, "entry '" + h.name + "' has an unexpected offset");
    if (n > (std::uint64_t{1} << 40)) throw Error(ErrorCode::malformed, "entry '" + h.name + "' is implausibly large");
    expected += n * 4;
  }
  if (payload_size < expected) throw Error(ErrorCode::truncated, "tensor store payload is truncated");
  if (payload_size > expected) throw Error(ErrorCode::malformed, "tensor store has trailing bytes");

  detail::ByteReader crc_reader(bytes, bytes.size());
  crc_reader.get_string(body_end);
  const auto stored_crc = crc_reader.get<std::uint32_t>();
  if (stored_crc != detail::crc32_of(bytes.data() + payload_start, payload_size)) {
    throw Error(ErrorCode::crc_mismatch, "tensor store payload CRC mismatch");
  }

  TensorStore store;
  for (const auto &h : headers) {
    Tensor t;
    t.shape = h.shape;
    const std::size_t n = static_cast<std::size_t>(t.shape_product());
    const std::uint8_t *p = bytes.data() + payload_start + h.offset;
    auto word = [p](std::size_t i) {
      return static_cast<std::uint32_t>(p[4 * i]) | static_cast<std::uint32_t>(p[4 * i + 1]) << 8 |
             static_cast<std::uint32_t>(p[4 * i + 2]) << 16 | static_cast<std::uint32_t>(p[4 * i + 3]) << 24;
    };
    if (h.dtype == DType::f32) {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(word(i));
      t.data = std::move(v);
    } else {
      std::vector<std::int32_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int32_t>(word(i));
      t.data = std::move(v);
    }
    if (h.name == store_format::kMetadataEntry) {
      store.metadata = detail::unpack_metadata(t);
    } else if (!store.entries.emplace(h.name, std::move(t)).second) {
      throw Error(ErrorCode::malformed, "duplicate entry '" + h.name + "'");
    }
  }
  return store;
}

inline void write_bytes(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_failure, "write to '" + path.string() + "' failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_store(const TensorStore &store, const std::filesystem::path &path) {
  write_bytes(path, encode_store(store));
}

inline TensorStore read_store(const std::filesystem::path &path) {
  try {
    return decode_store(read_bytes(path));
  } catch (const Error &e) {
    throw e.with_context(path.string());
  }
}

}  // namespace fadeq
