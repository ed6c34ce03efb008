#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "cobs/error.hpp"
#include "cobs/model.hpp"

namespace cobs {

enum class DetectedBy { MagicBytes, Extension };

struct ClassificationResult {
  ContentType content_type;
  DetectedBy detected_by;
};

namespace detail {

inline std::string lower_extension(std::string_view filename) {
  auto dot = filename.rfind('.');
  if (dot == std::string_view::npos) return {};
  auto slash = filename.rfind('/');
  if (slash != std::string_view::npos && slash > dot) return {};
  std::string ext(filename.substr(dot + 1));
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

/// Strict UTF-8 validation (rejects overlongs, surrogates, > U+10FFFF) and
/// NUL bytes, which no plain-text document carries.
inline bool is_text(BytesView data) {
  std::size_t i = 0;
  while (i < data.size()) {
    auto c = static_cast<std::uint8_t>(data[i]);
    if (c == 0) return false;
    if (c < 0x80) { ++i; continue; }
    int extra;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) { extra = 1; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { extra = 2; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { extra = 3; cp = c & 0x07; }
    else return false;
    for (int k = 1; k <= extra; ++k) {
      if (i + k >= data.size()) return false;
      auto cc = static_cast<std::uint8_t>(data[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

inline bool has_prefix(BytesView data, std::string_view magic) { return data.substr(0, magic.size()) == magic; }

}  // namespace detail

/// Image or document, decided by magic bytes first and the filename
/// extension only as fallback. Throws UnsupportedType otherwise.
inline ClassificationResult classify(BytesView data, std::string_view filename) {
  using namespace std::string_view_literals;
  if (detail::has_prefix(data, "\xFF\xD8\xFF"sv))
    return {ContentType::image(ContentFormat::JPEG), DetectedBy::MagicBytes};
  if (detail::has_prefix(data, "\x89PNG\r\n\x1A\n"sv))
    return {ContentType::image(ContentFormat::PNG), DetectedBy::MagicBytes};
  if (detail::has_prefix(data, "%PDF-"sv))
    return {ContentType::document(ContentFormat::PDF), DetectedBy::MagicBytes};

  const std::string ext = detail::lower_extension(filename);
  if (detail::has_prefix(data, "PK\x03\x04"sv) && ext == "docx")
    return {ContentType::document(ContentFormat::DOCX), DetectedBy::MagicBytes};
  if (ext == "txt" && detail::is_text(data))
    return {ContentType::document(ContentFormat::PlainText), DetectedBy::Extension};

  throw Error(Errc::UnsupportedType, "unrecognised payload '" + std::string(filename) + "'");
}

}  // namespace cobs
