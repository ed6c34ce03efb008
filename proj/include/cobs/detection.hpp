#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cobs/error.hpp"
#include "cobs/model.hpp"

namespace cobs {

struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  std::string label;
  double confidence = 0.0;
  BoundingBox bbox;
  std::int64_t class_id = 0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ImageExtraction {
  std::vector<Detection> detections;
  std::string detector_name;
  std::int64_t detection_millis = 0;
};

/// Per-upload side information a detector may consult. The reference
/// detector reads its annotations from here.
struct DetectHints {
  std::optional<std::string> sidecar;
};

/// Object-detection backend. `image` is a private copy the adapter is free
/// to mutate.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Detection> detect(Bytes& image, const DetectHints& hints) = 0;
};

/// Parses `{"detections":[{"label","confidence","bbox":[x,y,w,h],"class_id"}]}`.
/// Any schema violation raises `failure`.
inline std::vector<Detection> parse_detections(std::string_view text, Errc failure) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(failure, "reply is not a JSON object");
  auto it = doc.find("detections");
  if (it == doc.end() || !it->is_array()) throw Error(failure, "missing 'detections' array");

  std::vector<Detection> out;
  out.reserve(it->size());
  for (const auto& d : *it) {
    if (!d.is_object()) throw Error(failure, "detection is not an object");
    auto label = d.find("label");
    auto conf = d.find("confidence");
    auto bbox = d.find("bbox");
    auto cls = d.find("class_id");
    if (label == d.end() || !label->is_string() || label->get_ref<const std::string&>().empty())
      throw Error(failure, "detection label missing");
    if (conf == d.end() || !conf->is_number()) throw Error(failure, "detection confidence missing");
    if (bbox == d.end() || !bbox->is_array() || bbox->size() != 4)
      throw Error(failure, "detection bbox must be [x,y,w,h]");
    if (cls == d.end() || !cls->is_number_integer() || cls->get<std::int64_t>() < 0)
      throw Error(failure, "detection class_id must be a non-negative integer");

    Detection det;
    det.label = label->get<std::string>();
    det.confidence = conf->get<double>();
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) throw Error(failure, "confidence outside [0,1]");
    for (const auto& v : *bbox)
      if (!v.is_number() || v.get<double>() < 0) throw Error(failure, "bbox values must be non-negative numbers");
    det.bbox = {(*bbox)[0].get<double>(), (*bbox)[1].get<double>(), (*bbox)[2].get<double>(),
                (*bbox)[3].get<double>()};
    if (det.bbox.w <= 0 || det.bbox.h <= 0) throw Error(failure, "bbox width/height must be positive");
    det.class_id = cls->get<std::int64_t>();
    out.push_back(std::move(det));
  }
  return out;
}

inline nlohmann::json detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) {
    arr.push_back({{"label", d.label},
                   {"confidence", d.confidence},
                   {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                   {"class_id", d.class_id}});
  }
  return nlohmann::json{{"detections", std::move(arr)}};
}

/// Deterministic stand-in for a trained detector: echoes the sidecar
/// annotations verbatim, in order.
inline std::vector<Detection> reference_detector(BytesView /*image*/, std::string_view sidecar) {
  return parse_detections(sidecar, Errc::MalformedSidecar);
}

class SidecarDetector final : public DetectorAdapter {
 public:
  std::string name() const override { return "sidecar"; }

  // No sidecar means nothing was annotated.
  std::vector<Detection> detect(Bytes& image, const DetectHints& hints) override {
    if (!hints.sidecar) return {};
    return reference_detector(image, *hints.sidecar);
  }
};

struct DetectOptions {
  double min_confidence = 0.25;
};

/// Runs `detector` on a private copy of `image`; the caller's buffer is
/// never handed out. Labels are lowercased and low-confidence detections
/// dropped.
inline ImageExtraction detect_on_copy(BytesView image, DetectorAdapter& detector, const DetectHints& hints = {},
                                      const DetectOptions& opts = {}) {
  ImageExtraction result;
  result.detector_name = detector.name();
  std::vector<Detection> raw;
  {
    Bytes copy(image);
    auto start = std::chrono::steady_clock::now();
    raw = detector.detect(copy, hints);
    result.detection_millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
  }
  for (auto& d : raw) {
    if (d.confidence < opts.min_confidence) continue;
    std::transform(d.label.begin(), d.label.end(), d.label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    result.detections.push_back(std::move(d));
  }
  return result;
}

}  // namespace cobs
