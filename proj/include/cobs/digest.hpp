#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "cobs/error.hpp"

namespace cobs {

/// 128-bit MD5 digest. Used both for stored-object integrity and for ring
/// placement of canonical paths.
class Digest128 {
 public:
  using Bytes = std::array<std::uint8_t, 16>;

  Digest128() = default;
  explicit Digest128(const Bytes& b) : bytes_(b) {}

  const Bytes& bytes() const noexcept { return bytes_; }

  /// Big-endian value of the first four bytes.
  std::uint32_t top32() const noexcept {
    return (std::uint32_t{bytes_[0]} << 24) | (std::uint32_t{bytes_[1]} << 16) |
           (std::uint32_t{bytes_[2]} << 8) | std::uint32_t{bytes_[3]};
  }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(32, '0');
    for (std::size_t i = 0; i < bytes_.size(); ++i) {
      out[2 * i] = kDigits[bytes_[i] >> 4];
      out[2 * i + 1] = kDigits[bytes_[i] & 0xF];
    }
    return out;
  }

  static Digest128 from_hex(std::string_view hex) {
    if (hex.size() != 32) throw Error(Errc::HashMismatch, "digest hex must be 32 chars");
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    Bytes b{};
    for (std::size_t i = 0; i < 16; ++i) {
      int hi = nibble(hex[2 * i]);
      int lo = nibble(hex[2 * i + 1]);
      if (hi < 0 || lo < 0) throw Error(Errc::HashMismatch, "bad hex digit in digest");
      b[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return Digest128(b);
  }

  friend bool operator==(const Digest128&, const Digest128&) = default;

 private:
  Bytes bytes_{};
};

inline Digest128 content_hash(std::span<const std::byte> data) {
  Digest128::Bytes out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_md5(), nullptr) != 1 ||
      len != out.size()) {
    throw Error(Errc::IoError, "MD5 digest failed");
  }
  return Digest128(out);
}

inline Digest128 content_hash(std::string_view text) {
  return content_hash(std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace cobs
