#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asyncfs/common/errors.h"

namespace asyncfs {

using Bytes = std::vector<uint8_t>;

// Big-endian append-only encoder.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes initial) : buf_(std::move(initial)) {}

  void U8(uint8_t v) { buf_.push_back(v); }
  void U16(uint16_t v) { PutBE(v, 2); }
  void U32(uint32_t v) { PutBE(v, 4); }
  void U64(uint64_t v) { PutBE(v, 8); }
  void I64(int64_t v) { PutBE(static_cast<uint64_t>(v), 8); }
  void Bool(bool v) { U8(v ? 1 : 0); }
  void Raw(std::span<const uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  // 1-byte length prefix; names are at most 255 bytes.
  void ShortString(std::string_view s);
  // 4-byte length prefix.
  void Blob(std::span<const uint8_t> data);
  void String(std::string_view s);

  size_t size() const { return buf_.size(); }
  const Bytes& bytes() const { return buf_; }
  Bytes Take() { return std::move(buf_); }

 private:
  void PutBE(uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

// Bounds-checked big-endian decoder; throws DecodeError on underflow.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t U8() { return static_cast<uint8_t>(GetBE(1)); }
  uint16_t U16() { return static_cast<uint16_t>(GetBE(2)); }
  uint32_t U32() { return static_cast<uint32_t>(GetBE(4)); }
  uint64_t U64() { return GetBE(8); }
  int64_t I64() { return static_cast<int64_t>(GetBE(8)); }
  bool Bool() { return U8() != 0; }
  std::span<const uint8_t> Raw(size_t n);
  std::string ShortString();
  Bytes Blob();
  std::string String();

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  size_t position() const { return pos_; }

 private:
  uint64_t GetBE(int width);

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

}  // namespace asyncfs
