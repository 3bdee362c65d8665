#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "vtranse/error.hpp"

namespace vtranse::detail {

// Little-endian encoding independent of the host byte order.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buffer_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buffer_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& buffer() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& data, std::string source) : data_(data), source_(std::move(source)) {}

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(source_ + ": truncated payload");
  }

  const std::vector<char>& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& data);

}  // namespace vtranse::detail
