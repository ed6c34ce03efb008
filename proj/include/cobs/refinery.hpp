#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cobs/detection.hpp"
#include "cobs/error.hpp"
#include "cobs/keywords.hpp"
#include "cobs/model.hpp"

namespace cobs {

/// The filtered metadata record the search engine indexes. Detector
/// geometry and class ids never make it into this type.
struct IndexDocument {
  std::string object_name;
  std::string account;
  std::string container;
  std::string url_path;
  ContentKind content_type = ContentKind::Other;
  std::vector<std::string> contents;
  std::optional<std::map<std::string, double>> confidences;
  std::uint64_t size_bytes = 0;
  UtcSeconds uploaded_at{};
  bool extraction_failed = false;

  friend bool operator==(const IndexDocument&, const IndexDocument&) = default;
};

inline nlohmann::json to_json(const IndexDocument& d) {
  nlohmann::json j{
      {"object_name", d.object_name},
      {"account", d.account},
      {"container", d.container},
      {"url_path", d.url_path},
      {"content_type", std::string(to_string(d.content_type))},
      {"contents", d.contents},
      {"size_bytes", d.size_bytes},
      {"uploaded_at", to_iso8601(d.uploaded_at)},
  };
  if (d.confidences) j["confidences"] = *d.confidences;
  if (d.extraction_failed) j["extraction_failed"] = true;
  return j;
}

/// Canonical serialization: sorted keys, compact, UTF-8.
inline std::string serialize(const IndexDocument& d) { return to_json(d).dump(); }

inline void validate(const IndexDocument& d) {
  ObjectPath path = [&] {
    try {
      return canonical_path(d.account, d.container, d.object_name);
    } catch (const Error& e) {
      throw Error(Errc::InvalidDocument, e.what());
    }
  }();
  if (path.render() != d.url_path) throw Error(Errc::InvalidDocument, "url_path is not the canonical rendering");
  for (const auto& c : d.contents) {
    if (c.empty()) throw Error(Errc::InvalidDocument, "empty content entry");
    if (std::any_of(c.begin(), c.end(), [](unsigned char ch) { return ch < 0x80 && std::isupper(ch); }))
      throw Error(Errc::InvalidDocument, "contents must be lowercase");
  }
}

inline IndexDocument index_document_from_json(const nlohmann::json& j) {
  try {
    IndexDocument d;
    d.object_name = j.at("object_name").get<std::string>();
    d.account = j.at("account").get<std::string>();
    d.container = j.at("container").get<std::string>();
    d.url_path = j.at("url_path").get<std::string>();
    auto kind = parse_kind(j.at("content_type").get<std::string>());
    if (!kind) throw Error(Errc::InvalidDocument, "unknown content_type");
    d.content_type = *kind;
    d.contents = j.at("contents").get<std::vector<std::string>>();
    if (j.contains("confidences")) d.confidences = j.at("confidences").get<std::map<std::string, double>>();
    d.size_bytes = j.at("size_bytes").get<std::uint64_t>();
    auto at = parse_iso8601(j.at("uploaded_at").get<std::string>());
    if (!at) throw Error(Errc::InvalidDocument, "bad uploaded_at");
    d.uploaded_at = *at;
    d.extraction_failed = j.value("extraction_failed", false);
    validate(d);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidDocument, e.what());
  }
}

namespace detail {

/// Geometry and class-id field names the filter strips from detector output.
/// A label spelled like one of these stays searchable in `contents` but gets
/// no `confidences` entry, which would reintroduce it as a key.
inline bool is_filtered_field(std::string_view key) {
  static constexpr std::string_view kFields[] = {"bbox", "class_id", "x", "y", "w", "h", "xmin", "ymin",
                                                 "xmax", "ymax", "width", "height", "coordinates"};
  return std::find(std::begin(kFields), std::end(kFields), key) != std::end(kFields);
}

inline IndexDocument base_document(const ObjectDescriptor& desc, ContentKind kind) {
  IndexDocument d;
  d.object_name = desc.path.object();
  d.account = desc.path.account();
  d.container = desc.path.container();
  d.url_path = desc.path.render();
  d.content_type = kind;
  d.size_bytes = desc.size_bytes;
  d.uploaded_at = desc.uploaded_at;
  return d;
}

inline void push_unique(std::vector<std::string>& list, std::unordered_set<std::string>& seen, std::string value) {
  if (seen.insert(value).second) list.push_back(std::move(value));
}

}  // namespace detail

/// Distinct labels in first-seen order with the best confidence per label.
inline IndexDocument build_image_doc(const ObjectDescriptor& desc, const ImageExtraction& ext) {
  IndexDocument d = detail::base_document(desc, ContentKind::Image);
  std::map<std::string, double> best;
  std::unordered_set<std::string> seen;
  for (const auto& det : ext.detections) {
    std::string label = det.label;
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!detail::is_filtered_field(label)) {
      auto [it, inserted] = best.emplace(label, det.confidence);
      if (!inserted) it->second = std::max(it->second, det.confidence);
    }
    detail::push_unique(d.contents, seen, std::move(label));
  }
  d.confidences = std::move(best);
  return d;
}

inline IndexDocument build_document_doc(const ObjectDescriptor& desc, const std::vector<ScoredPhrase>& phrases) {
  IndexDocument d = detail::base_document(desc, ContentKind::Document);
  std::unordered_set<std::string> seen;
  for (const auto& p : phrases) detail::push_unique(d.contents, seen, p.phrase.text);
  return d;
}

/// Record for objects stored without content extraction.
inline IndexDocument build_other_doc(const ObjectDescriptor& desc) {
  return detail::base_document(desc, ContentKind::Other);
}

}  // namespace cobs
