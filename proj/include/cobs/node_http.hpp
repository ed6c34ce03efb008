#pragma once

#include <memory>
#include <string>

#include "cobs/http_util.hpp"
#include "cobs/storage.hpp"

namespace cobs {

namespace detail {

inline void set_descriptor_headers(httplib::Response& res, const ObjectDescriptor& d) {
  res.set_header("X-Content-Hash", d.content_hash.hex());
  res.set_header("X-Object-Size", std::to_string(d.size_bytes));
  res.set_header("X-Content-Type", render_content_type(d.content_type));
  res.set_header("X-Uploaded-At", to_iso8601(d.uploaded_at));
}

inline ObjectDescriptor descriptor_from_headers(const ObjectPath& path, const httplib::Response& res) {
  auto at = parse_iso8601(res.get_header_value("X-Uploaded-At"));
  if (!at) throw Error(Errc::IoError, "node reply without X-Uploaded-At");
  std::uint64_t size = 0;
  try {
    size = std::stoull(res.get_header_value("X-Object-Size"));
  } catch (const std::exception&) {
    throw Error(Errc::IoError, "node reply without X-Object-Size");
  }
  return ObjectDescriptor{path, size, Digest128::from_hex(res.get_header_value("X-Content-Hash")),
                          parse_content_type(res.get_header_value("X-Content-Type")), *at};
}

inline void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

}  // namespace detail

/// Storage node HTTP service. PUT/GET/HEAD/DELETE `/node/v1/{a}/{c}/{o}`;
/// a PUT must carry `X-Content-Hash`, which is checked before the write is
/// acknowledged.
class NodeServer {
 public:
  explicit NodeServer(std::shared_ptr<NodeStore> store, std::size_t threads = 64)
      : store_(std::move(store)), server_(std::make_shared<httplib::Server>()), runner_(server_) {
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_->set_tcp_nodelay(true);
    server_->set_keep_alive_max_count(1000);
    server_->set_keep_alive_timeout(2);
    routes();
  }

  int start(const std::string& host = "127.0.0.1", int port = 0) { return runner_.start(host, port); }
  void stop() { runner_.stop(); }
  int port() const noexcept { return runner_.port(); }
  std::string address() const { return "127.0.0.1:" + std::to_string(port()); }
  NodeStore& store() { return *store_; }

 private:
  static ObjectPath path_of(const httplib::Request& req) { return ObjectPath::parse("/v1/" + req.matches[1].str()); }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      switch (e.code()) {
        case Errc::HashMismatch: detail::reply_error(res, 422, e.what()); break;
        case Errc::DiskFull: detail::reply_error(res, 507, e.what()); break;
        case Errc::EmptyComponent:
        case Errc::IllegalSlash:
        case Errc::MalformedPath: detail::reply_error(res, 400, e.what()); break;
        default: detail::reply_error(res, 500, e.what());
      }
    } catch (const std::exception& e) {
      detail::reply_error(res, 500, e.what());
    }
  }

  void routes() {
    const std::string pattern = R"(/node/v1/(.+))";
    server_->Put(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto path = path_of(req);
        if (!req.has_header("X-Content-Hash")) return detail::reply_error(res, 400, "X-Content-Hash required");
        auto claimed = Digest128::from_hex(req.get_header_value("X-Content-Hash"));
        if (content_hash(req.body) != claimed) return detail::reply_error(res, 422, "body does not match X-Content-Hash");
        auto at = parse_iso8601(req.get_header_value("X-Uploaded-At")).value_or(utc_now());
        auto desc = ObjectDescriptor{path, req.body.size(), claimed,
                                     parse_content_type(req.get_header_value("X-Content-Type")), at};
        store_->put(path, req.body, desc);
        res.status = 201;
      });
    });
    server_->Get(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto obj = store_->get(path_of(req));
        if (!obj) return detail::reply_error(res, 404, "not found");
        detail::set_descriptor_headers(res, obj->descriptor);
        res.set_content(std::move(obj->bytes), "application/octet-stream");
      });
    });
    server_->Delete(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!store_->remove(path_of(req))) return detail::reply_error(res, 404, "not found");
        res.status = 204;
      });
    });
    // httplib answers HEAD through the GET handler unless one is registered.
    server_->set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.method != "HEAD" || !req.path.starts_with("/node/v1/")) return httplib::Server::HandlerResponse::Unhandled;
      guarded(res, [&] {
        auto desc = store_->head(ObjectPath::parse(req.path.substr(5)));
        if (!desc) {
          res.status = 404;
          return;
        }
        detail::set_descriptor_headers(res, *desc);
        res.status = 200;
      });
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  std::shared_ptr<NodeStore> store_;
  std::shared_ptr<httplib::Server> server_;
  http::ServerThread runner_;
};

/// NodeClient speaking the node HTTP protocol.
class HttpNode final : public NodeClient {
 public:
  explicit HttpNode(std::string address) : address_(std::move(address)), pool_(http::parse_endpoint(address_)) {}

  std::string address() const override { return address_; }

  void put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) override {
    httplib::Headers headers{{"X-Content-Hash", desc.content_hash.hex()},
                             {"X-Content-Type", render_content_type(desc.content_type)},
                             {"X-Uploaded-At", to_iso8601(desc.uploaded_at)}};
    auto res = pool_.request([&](httplib::Client& c) {
      return c.Put(url(path), headers, data.data(), data.size(), "application/octet-stream");
    });
    if (!res) throw Error(Errc::IoError, address_ + " unreachable (" + httplib::to_string(res.error()) + ")");
    if (res->status == 507) throw Error(Errc::DiskFull, address_);
    if (res->status == 422) throw Error(Errc::HashMismatch, address_);
    if (res->status != 201) throw Error(Errc::IoError, address_ + " PUT status " + std::to_string(res->status));
  }

  std::optional<StoredObject> get(const ObjectPath& path) override {
    auto res = pool_.request([&](httplib::Client& c) { return c.Get(url(path)); });
    if (!res) throw Error(Errc::IoError, address_ + " unreachable (" + httplib::to_string(res.error()) + ")");
    if (res->status == 404) return std::nullopt;
    if (res->status != 200) throw Error(Errc::IoError, address_ + " GET status " + std::to_string(res->status));
    return StoredObject{detail::descriptor_from_headers(path, *res), std::move(res->body)};
  }

  std::optional<ObjectDescriptor> head(const ObjectPath& path) override {
    auto res = pool_.request([&](httplib::Client& c) { return c.Head(url(path)); });
    if (!res) throw Error(Errc::IoError, address_ + " unreachable (" + httplib::to_string(res.error()) + ")");
    if (res->status == 404) return std::nullopt;
    if (res->status != 200) throw Error(Errc::IoError, address_ + " HEAD status " + std::to_string(res->status));
    return detail::descriptor_from_headers(path, *res);
  }

  bool remove(const ObjectPath& path) override {
    auto res = pool_.request([&](httplib::Client& c) { return c.Delete(url(path)); });
    if (!res) throw Error(Errc::IoError, address_ + " unreachable (" + httplib::to_string(res.error()) + ")");
    if (res->status == 404) return false;
    if (res->status != 204) throw Error(Errc::IoError, address_ + " DELETE status " + std::to_string(res->status));
    return true;
  }

 private:
  static std::string url(const ObjectPath& path) { return http::encode_path("/node" + path.render()); }
  std::string address_;
  http::ClientPool pool_;
};

/// Node clients for every device of `ring`, addressed by node_address.
inline Cluster::NodeMap http_nodes(const RingMap& ring) {
  Cluster::NodeMap nodes;
  for (const auto& d : ring.devices) nodes[d.id] = std::make_shared<HttpNode>(d.node_address);
  return nodes;
}

}  // namespace cobs
