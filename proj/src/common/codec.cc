#include "asyncfs/common/codec.h"

namespace asyncfs {

void ByteWriter::ShortString(std::string_view s) {
  if (s.size() > 255) throw std::length_error("short string longer than 255 bytes");
  U8(static_cast<uint8_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::Blob(std::span<const uint8_t> data) {
  U32(static_cast<uint32_t>(data.size()));
  Raw(data);
}

void ByteWriter::String(std::string_view s) {
  U32(static_cast<uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

uint64_t ByteReader::GetBE(int width) {
  if (remaining() < static_cast<size_t>(width)) throw DecodeError("truncated integer");
  uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
  return v;
}

std::span<const uint8_t> ByteReader::Raw(size_t n) {
  if (remaining() < n) throw DecodeError("truncated raw bytes");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::ShortString() {
  size_t n = U8();
  auto raw = Raw(n);
  return std::string(raw.begin(), raw.end());
}

Bytes ByteReader::Blob() {
  size_t n = U32();
  auto raw = Raw(n);
  return Bytes(raw.begin(), raw.end());
}

std::string ByteReader::String() {
  size_t n = U32();
  auto raw = Raw(n);
  return std::string(raw.begin(), raw.end());
}

}  // namespace asyncfs
