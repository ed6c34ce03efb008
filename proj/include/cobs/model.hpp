#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <optional>
#include <string>
#include <string_view>

#include "cobs/digest.hpp"
#include "cobs/error.hpp"

namespace cobs {

/// Raw object payload. Byte-transparent; never assumed to be text.
using Bytes = std::string;
using BytesView = std::string_view;

using UtcSeconds = std::chrono::sys_seconds;

inline UtcSeconds utc_now() {
  return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

/// "YYYY-MM-DDTHH:MM:SSZ"
inline std::string to_iso8601(UtcSeconds t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::optional<UtcSeconds> parse_iso8601(std::string_view s) {
  std::tm tm{};
  std::string str(s);
  const char* end = strptime(str.c_str(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  if (end == nullptr || *end != '\0') return std::nullopt;
  return UtcSeconds(std::chrono::seconds(timegm(&tm)));
}

/// account/container/object identity. The canonical rendering
/// `/v1/{account}/{container}/{object}` is the object's URL.
class ObjectPath {
 public:
  ObjectPath(std::string account, std::string container, std::string object)
      : account_(std::move(account)), container_(std::move(container)), object_(std::move(object)) {
    if (account_.empty() || container_.empty() || object_.empty())
      throw Error(Errc::EmptyComponent, "path components must be non-empty");
    if (account_.find('/') != std::string::npos || container_.find('/') != std::string::npos)
      throw Error(Errc::IllegalSlash, "account and container must not contain '/'");
  }

  /// Parses `/v1/{a}/{c}/{o}`; the object part keeps any further slashes.
  static ObjectPath parse(std::string_view s) {
    constexpr std::string_view kPrefix = "/v1/";
    if (!s.starts_with(kPrefix)) throw Error(Errc::MalformedPath, std::string(s));
    s.remove_prefix(kPrefix.size());
    auto a_end = s.find('/');
    if (a_end == std::string_view::npos) throw Error(Errc::MalformedPath, "missing container");
    auto rest = s.substr(a_end + 1);
    auto c_end = rest.find('/');
    if (c_end == std::string_view::npos) throw Error(Errc::MalformedPath, "missing object");
    return ObjectPath(std::string(s.substr(0, a_end)), std::string(rest.substr(0, c_end)),
                      std::string(rest.substr(c_end + 1)));
  }

  const std::string& account() const noexcept { return account_; }
  const std::string& container() const noexcept { return container_; }
  const std::string& object() const noexcept { return object_; }

  std::string render() const { return "/v1/" + account_ + "/" + container_ + "/" + object_; }

  friend bool operator==(const ObjectPath&, const ObjectPath&) = default;
  friend auto operator<=>(const ObjectPath&, const ObjectPath&) = default;

 private:
  std::string account_;
  std::string container_;
  std::string object_;
};

inline ObjectPath canonical_path(std::string account, std::string container, std::string object) {
  return ObjectPath(std::move(account), std::move(container), std::move(object));
}

enum class ContentKind { Image, Document, Other };
enum class ContentFormat { JPEG, PNG, PlainText, PDF, DOCX, Unknown };

struct ContentType {
  ContentKind kind = ContentKind::Other;
  ContentFormat format = ContentFormat::Unknown;

  static ContentType image(ContentFormat f) { return {ContentKind::Image, f}; }
  static ContentType document(ContentFormat f) { return {ContentKind::Document, f}; }
  static ContentType other() { return {}; }

  bool consistent() const noexcept {
    switch (kind) {
      case ContentKind::Image: return format == ContentFormat::JPEG || format == ContentFormat::PNG;
      case ContentKind::Document:
        return format == ContentFormat::PlainText || format == ContentFormat::PDF ||
               format == ContentFormat::DOCX;
      case ContentKind::Other: return format == ContentFormat::Unknown;
    }
    return false;
  }

  friend bool operator==(const ContentType&, const ContentType&) = default;
};

constexpr std::string_view to_string(ContentKind k) noexcept {
  switch (k) {
    case ContentKind::Image: return "image";
    case ContentKind::Document: return "document";
    case ContentKind::Other: return "other";
  }
  return "other";
}

constexpr std::string_view to_string(ContentFormat f) noexcept {
  switch (f) {
    case ContentFormat::JPEG: return "jpeg";
    case ContentFormat::PNG: return "png";
    case ContentFormat::PlainText: return "text";
    case ContentFormat::PDF: return "pdf";
    case ContentFormat::DOCX: return "docx";
    case ContentFormat::Unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<ContentKind> parse_kind(std::string_view s) {
  if (s == "image") return ContentKind::Image;
  if (s == "document") return ContentKind::Document;
  if (s == "other") return ContentKind::Other;
  return std::nullopt;
}

inline ContentFormat parse_format(std::string_view s) {
  for (auto f : {ContentFormat::JPEG, ContentFormat::PNG, ContentFormat::PlainText, ContentFormat::PDF,
                 ContentFormat::DOCX}) {
    if (to_string(f) == s) return f;
  }
  return ContentFormat::Unknown;
}

/// "image/jpeg", "document/pdf", "other/unknown"
inline std::string render_content_type(const ContentType& t) {
  return std::string(to_string(t.kind)) + "/" + std::string(to_string(t.format));
}

inline ContentType parse_content_type(std::string_view s) {
  auto slash = s.find('/');
  if (slash == std::string_view::npos) return ContentType::other();
  auto kind = parse_kind(s.substr(0, slash));
  if (!kind) return ContentType::other();
  ContentType t{*kind, parse_format(s.substr(slash + 1))};
  return t.consistent() ? t : ContentType::other();
}

struct ObjectDescriptor {
  ObjectPath path;
  std::uint64_t size_bytes = 0;
  Digest128 content_hash;
  ContentType content_type;
  UtcSeconds uploaded_at{};

  static ObjectDescriptor describe(ObjectPath path, BytesView data, ContentType type, UtcSeconds at) {
    return ObjectDescriptor{std::move(path), data.size(), cobs::content_hash(data), type, at};
  }

  bool matches(BytesView data) const { return size_bytes == data.size() && cobs::content_hash(data) == content_hash; }

  friend bool operator==(const ObjectDescriptor&, const ObjectDescriptor&) = default;
};

}  // namespace cobs
