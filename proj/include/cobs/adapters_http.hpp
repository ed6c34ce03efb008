#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cobs/detection.hpp"
#include "cobs/http_util.hpp"
#include "cobs/keywords.hpp"

namespace cobs {

/// Detector behind `POST /detect` (raw image body, JSON detections reply).
class HttpDetector final : public DetectorAdapter {
 public:
  explicit HttpDetector(std::string url) : url_(std::move(url)), endpoint_(http::parse_endpoint(url_)) {}

  std::string name() const override { return "http:" + url_; }

  std::vector<Detection> detect(Bytes& image, const DetectHints&) override {
    auto res = http::make_client(endpoint_, 120)->Post("/detect", image.data(), image.size(), "application/octet-stream");
    if (!res) throw Error(Errc::DetectorUnavailable, url_ + " unreachable");
    if (res->status != 200) throw Error(Errc::DetectorUnavailable, url_ + " replied " + std::to_string(res->status));
    return parse_detections(res->body, Errc::DetectorProtocolError);
  }

 private:
  std::string url_;
  http::Endpoint endpoint_;
};

/// Embedder behind `POST /embed` with `{"texts":[...]}` -> `{"vectors":[[...]...]}`.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string url, std::size_t dimension)
      : url_(std::move(url)), endpoint_(http::parse_endpoint(url_)), dimension_(dimension) {}

  std::size_t dimension() const override { return dimension_; }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    nlohmann::json body{{"texts", texts}};
    auto res = http::make_client(endpoint_, 300)->Post("/embed", body.dump(), "application/json");
    if (!res) throw Error(Errc::EmbedderUnavailable, url_ + " unreachable");
    if (res->status != 200) throw Error(Errc::EmbedderUnavailable, url_ + " replied " + std::to_string(res->status));
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("vectors") || !reply["vectors"].is_array())
      throw Error(Errc::EmbedderUnavailable, "malformed /embed reply");
    std::vector<EmbeddingVector> out;
    for (const auto& v : reply["vectors"]) {
      if (!v.is_array()) throw Error(Errc::EmbedderUnavailable, "malformed vector in /embed reply");
      EmbeddingVector e;
      for (const auto& c : v) {
        if (!c.is_number()) throw Error(Errc::EmbedderUnavailable, "non-numeric vector component");
        e.components.push_back(c.get<double>());
      }
      if (e.dimension() != dimension_) throw Error(Errc::DimensionMismatch, "embedder returned wrong dimension");
      out.push_back(std::move(e));
    }
    if (out.size() != texts.size()) throw Error(Errc::EmbedderUnavailable, "vector count mismatch");
    return out;
  }

 private:
  std::string url_;
  http::Endpoint endpoint_;
  std::size_t dimension_;
};

}  // namespace cobs
