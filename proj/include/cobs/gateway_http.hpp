#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "cobs/gateway.hpp"
#include "cobs/http_util.hpp"

namespace cobs {

inline nlohmann::json to_json(const WriteReceipt& r) {
  return {{"acks", r.acks}, {"replicas_attempted", r.replicas_attempted}, {"failed_nodes", r.failed_nodes}};
}

inline nlohmann::json to_json(const UploadOutcome& o) {
  return {{"descriptor", descriptor_to_json(o.descriptor)},
          {"write", to_json(o.write)},
          {"document", to_json(o.document)},
          {"indexed", o.indexed},
          {"extraction_failed", o.extraction_failed},
          {"extraction_millis", o.extraction_millis},
          {"upload_millis", o.upload_millis},
          {"total_millis", o.total_millis}};
}

inline nlohmann::json hits_to_json(const std::vector<SearchHit>& hits) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& h : hits) arr.push_back({{"url_path", h.url_path}, {"score", h.score}, {"document", to_json(*h.document)}});
  return arr;
}

inline QueryResponse query_response_from_json(const nlohmann::json& j) {
  QueryResponse r;
  for (const auto& h : j.at("hits"))
    r.hits.push_back(SearchHit{h.at("url_path").get<std::string>(),
                               std::make_shared<const IndexDocument>(index_document_from_json(h.at("document"))),
                               h.at("score").get<double>()});
  r.query_millis = j.at("query_millis").get<double>();
  if (j.contains("request_millis")) r.request_millis = j.at("request_millis").get<double>();
  return r;
}

/// Query from `/v1/search` parameters: q, mode (and|or), limit, type,
/// container, min_size, max_size, since, until.
inline Query query_from_params(const httplib::Params& params) {
  auto param = [&](const char* key) -> std::optional<std::string> {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
  };
  auto number = [&](const char* key) -> std::optional<std::uint64_t> {
    auto v = param(key);
    if (!v) return std::nullopt;
    try {
      std::size_t used = 0;
      auto n = std::stoull(*v, &used);
      if (used != v->size() || v->starts_with('-')) throw std::invalid_argument(key);
      return n;
    } catch (const std::exception&) {
      throw Error(Errc::BadQuery, std::string(key) + " must be a non-negative integer");
    }
  };
  auto time = [&](const char* key) -> std::optional<UtcSeconds> {
    auto v = param(key);
    if (!v) return std::nullopt;
    auto t = parse_iso8601(*v);
    if (!t) throw Error(Errc::BadQuery, std::string(key) + " must be YYYY-MM-DDTHH:MM:SSZ");
    return t;
  };

  Query q = Query::from_text(param("q").value_or(""));
  if (auto mode = param("mode")) {
    if (*mode == "or" || *mode == "OR") q.mode = QueryMode::Or;
    else if (*mode != "and" && *mode != "AND") throw Error(Errc::BadQuery, "mode must be and|or");
  }
  if (auto limit = number("limit")) q.limit = static_cast<std::size_t>(*limit);
  if (auto type = param("type")) {
    auto kind = parse_kind(*type);
    if (!kind) throw Error(Errc::BadQuery, "type must be image|document|other");
    q.filters.content_type = *kind;
  }
  q.filters.container = param("container");
  q.filters.min_size = number("min_size");
  q.filters.max_size = number("max_size");
  q.filters.since = time("since");
  q.filters.until = time("until");
  return q;
}

/// Header carrying per-upload detector annotations (compact JSON).
inline constexpr const char* kSidecarHeader = "X-Detect-Sidecar";

/// HTTP binding of Gateway.
class GatewayServer {
 public:
  explicit GatewayServer(std::shared_ptr<Gateway> gateway, std::size_t threads = 32)
      : gateway_(std::move(gateway)), server_(std::make_shared<httplib::Server>()), runner_(server_) {
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_->set_payload_max_length(std::size_t{1} << 30);
    server_->set_tcp_nodelay(true);
    server_->set_keep_alive_max_count(1000);
    server_->set_keep_alive_timeout(2);
    routes();
  }

  int start(const std::string& host = "127.0.0.1", int port = 0) { return runner_.start(host, port); }
  void stop() { runner_.stop(); }
  int port() const noexcept { return runner_.port(); }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port()); }
  Gateway& gateway() { return *gateway_; }

  static int status_for(Errc code) {
    switch (code) {
      case Errc::Unauthorized: return 401;
      case Errc::Forbidden: return 403;
      case Errc::NotFound: return 404;
      case Errc::QuorumFailed: return 503;
      case Errc::DiskFull: return 507;
      case Errc::BadQuery:
      case Errc::EmptyInput:
      case Errc::EmptyComponent:
      case Errc::IllegalSlash:
      case Errc::MalformedPath:
      case Errc::MalformedSidecar: return 400;
      default: return 500;
    }
  }

 private:
  using Clock = std::chrono::steady_clock;

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const QuorumError& e) {
      res.status = 503;
      res.set_content(nlohmann::json{{"error", e.what()}, {"write", to_json(e.receipt())}}.dump(), "application/json");
    } catch (const Error& e) {
      detail_reply(res, status_for(e.code()), e.what());
    } catch (const std::exception& e) {
      detail_reply(res, 500, e.what());
    }
  }

  static void detail_reply(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
  }

  static std::string token_of(const httplib::Request& req) { return req.get_header_value("X-Auth-Token"); }
  static ObjectPath path_of(const httplib::Request& req) { return ObjectPath::parse("/v1/" + req.matches[1].str()); }

  static void descriptor_headers(httplib::Response& res, const ObjectDescriptor& d) {
    res.set_header("X-Object-Size", std::to_string(d.size_bytes));
    res.set_header("X-Content-Hash", d.content_hash.hex());
    res.set_header("X-Uploaded-At", to_iso8601(d.uploaded_at));
    res.set_header("X-Content-Type", render_content_type(d.content_type));
  }

  void routes() {
    server_->Post("/auth", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("user") || !body.contains("key") ||
            !body["user"].is_string() || !body["key"].is_string())
          throw Error(Errc::BadQuery, "expected {\"user\":..., \"key\":...}");
        auto t = gateway_->authenticate(body["user"].get<std::string>(), body["key"].get<std::string>());
        res.set_content(nlohmann::json{{"token", t.token}, {"account", t.account}, {"expires_at", to_iso8601(t.expires_at)}}
                            .dump(),
                        "application/json");
      });
    });

    server_->Get("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
      const auto start = Clock::now();
      guarded(res, [&] {
        auto token = token_of(req);
        gateway_->authorize(token);
        auto resp = gateway_->search(token, query_from_params(req.params));
        std::string hits = hits_to_json(resp.hits).dump();
        double request_millis = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        request_millis = std::max(request_millis, resp.query_millis);
        res.set_content("{\"hits\":" + hits + ",\"query_millis\":" + nlohmann::json(resp.query_millis).dump() +
                            ",\"request_millis\":" + nlohmann::json(request_millis).dump() + "}",
                        "application/json");
      });
    });

    server_->Get("/v1/suggest", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::size_t n = 5;
        if (req.has_param("n")) {
          try {
            n = std::stoul(req.get_param_value("n"));
          } catch (const std::exception&) {
            throw Error(Errc::BadQuery, "n must be a positive integer");
          }
        }
        auto terms = gateway_->suggest(token_of(req), req.get_param_value("prefix"), n);
        res.set_content(nlohmann::json{{"suggestions", terms}}.dump(), "application/json");
      });
    });

    const std::string object = R"(/v1/(.+))";
    server_->Put(object, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto path = path_of(req);
        DetectHints hints;
        if (req.has_header(kSidecarHeader)) hints.sidecar = req.get_header_value(kSidecarHeader);
        auto outcome = gateway_->upload(token_of(req), path, req.body, req.get_header_value("X-Filename"), hints);
        res.status = outcome.extraction_failed ? 207 : 201;
        descriptor_headers(res, outcome.descriptor);
        res.set_content(to_json(outcome).dump(), "application/json");
      });
    });

    // HEAD is dispatched here too; it only reads a descriptor.
    server_->Get(object, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto path = path_of(req);
        if (req.method == "HEAD") {
          descriptor_headers(res, gateway_->head_object(token_of(req), path));
          return;
        }
        auto obj = gateway_->get_object(token_of(req), path);
        descriptor_headers(res, obj.descriptor);
        res.set_content(std::move(obj.bytes), "application/octet-stream");
      });
    });

    server_->Delete(object, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        gateway_->delete_object(token_of(req), path_of(req));
        res.status = 204;
      });
    });
  }

  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<httplib::Server> server_;
  http::ServerThread runner_;
};

/// Thin client for the gateway HTTP API.
class GatewayClient {
 public:
  struct Reply {
    int status = 0;
    std::string body;
    httplib::Headers headers;

    nlohmann::json json() const { return nlohmann::json::parse(body, nullptr, false); }
    std::string header(const std::string& key) const {
      auto it = headers.find(key);
      return it == headers.end() ? std::string() : it->second;
    }
  };

  /// Copies share one connection pool and may be used from different threads.
  explicit GatewayClient(std::string url, std::string token = {})
      : pool_(std::make_shared<http::ClientPool>(http::parse_endpoint(url), 120)), token_(std::move(token)) {}

  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& token() const noexcept { return token_; }
  const std::string& account() const noexcept { return account_; }

  /// Authenticates and keeps the token. Throws Unauthorized on rejection.
  std::string login(const std::string& user, const std::string& key) {
    const auto body = nlohmann::json{{"user", user}, {"key", key}}.dump();
    auto r = call([&](httplib::Client& c) { return c.Post("/auth", body, "application/json"); });
    if (r.status != 200) throw Error(Errc::Unauthorized, "login rejected: " + r.body);
    auto j = r.json();
    token_ = j.at("token").get<std::string>();
    account_ = j.at("account").get<std::string>();
    return token_;
  }

  Reply put(const ObjectPath& path, BytesView data, const std::string& filename = {},
            const std::optional<std::string>& sidecar = std::nullopt) {
    auto h = auth();
    if (!filename.empty()) h.emplace("X-Filename", filename);
    if (sidecar) h.emplace(kSidecarHeader, compact(*sidecar));
    return call([&](httplib::Client& c) {
      return c.Put(http::encode_path(path.render()), h, data.data(), data.size(), "application/octet-stream");
    });
  }

  Reply get(const ObjectPath& path) { return get_raw(http::encode_path(path.render())); }
  Reply head(const ObjectPath& path) {
    return call([&](httplib::Client& c) { return c.Head(http::encode_path(path.render()), auth()); });
  }
  Reply remove(const ObjectPath& path) {
    return call([&](httplib::Client& c) { return c.Delete(http::encode_path(path.render()), auth()); });
  }
  Reply get_raw(const std::string& target) {
    return call([&](httplib::Client& c) { return c.Get(target, auth()); });
  }

  /// `params` are appended verbatim after encoding each value.
  Reply search(const std::string& q, const std::vector<std::pair<std::string, std::string>>& params = {}) {
    std::string target = "/v1/search?q=" + http::encode_query(q);
    for (const auto& [k, v] : params) target += "&" + k + "=" + http::encode_query(v);
    return get_raw(target);
  }

  Reply suggest(const std::string& prefix, std::size_t n = 5) {
    return get_raw("/v1/suggest?prefix=" + http::encode_query(prefix) + "&n=" + std::to_string(n));
  }

 private:
  static std::string compact(const std::string& json) {
    auto j = nlohmann::json::parse(json, nullptr, false);
    return j.is_discarded() ? json : j.dump();
  }

  httplib::Headers auth() const {
    httplib::Headers h;
    if (!token_.empty()) h.emplace("X-Auth-Token", token_);
    return h;
  }

  Reply wrap(httplib::Result res) const {
    if (!res)
      throw Error(Errc::IoError, "gateway unreachable at " + pool_->endpoint().host + ":" +
                                     std::to_string(pool_->endpoint().port) + " (" + httplib::to_string(res.error()) +
                                     ")");
    return Reply{res->status, std::move(res->body), res->headers};
  }

  template <typename Fn>
  Reply call(Fn&& fn) const {
    return wrap(pool_->request(std::forward<Fn>(fn)));
  }

  std::shared_ptr<http::ClientPool> pool_;
  std::string token_;
  std::string account_;
};

}  // namespace cobs
