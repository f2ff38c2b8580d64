// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian encode/decode helpers shared by the binary file codecs.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pclip/error.hpp"

namespace pclip::binary {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

/// Bounds-checked cursor. Errors are FormatErrors naming the byte offset.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string file_kind)
      : bytes_(bytes), kind_(std::move(file_kind)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(kind_ + " truncated while reading " + what,
                        "byte " + std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = bytes_[pos_] | (std::uint16_t(bytes_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string kind_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pclip::binary
