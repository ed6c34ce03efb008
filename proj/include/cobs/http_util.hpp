#pragma once

// httplib's default backlog of 5 drops connects when many clients reconnect at once
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>

#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cobs/error.hpp"

namespace cobs::http {

/// Percent-encodes everything but unreserved characters and '/'.
inline std::string encode_path(std::string_view path) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : path) {
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
        c == '.' || c == '~' || c == '/') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

inline std::string encode_query(std::string_view value) {
  std::string out = encode_path(value);
  std::string fixed;
  for (char c : out) {
    if (c == '/') fixed += "%2F";
    else fixed.push_back(c);
  }
  return fixed;
}

struct Endpoint {
  std::string host;
  int port = 0;
};

/// "host:port" or "http://host:port[/...]".
inline Endpoint parse_endpoint(std::string_view s) {
  if (s.starts_with("http://")) s.remove_prefix(7);
  if (auto slash = s.find('/'); slash != std::string_view::npos) s = s.substr(0, slash);
  auto colon = s.rfind(':');
  if (colon == std::string_view::npos) throw Error(Errc::IoError, "endpoint needs host:port: " + std::string(s));
  Endpoint e{std::string(s.substr(0, colon)), 0};
  try {
    e.port = std::stoi(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw Error(Errc::IoError, "bad port in endpoint " + std::string(s));
  }
  return e;
}

inline std::unique_ptr<httplib::Client> make_client(const Endpoint& e, int read_timeout_s = 30) {
  auto cli = std::make_unique<httplib::Client>(e.host, e.port);
  cli->set_url_encode(false);
  cli->set_tcp_nodelay(true);
  cli->set_connection_timeout(2, 0);
  cli->set_read_timeout(read_timeout_s, 0);
  cli->set_write_timeout(read_timeout_s, 0);
  return cli;
}

/// Keep-alive clients for one endpoint. A lease returns its client to the
/// pool only after a request that produced a response. A pooled connection
/// the server closed meanwhile gets one retry on a fresh one, so `fn` must
/// be safe to repeat.
class ClientPool {
 public:
  explicit ClientPool(Endpoint e, int read_timeout_s = 30, std::size_t max_idle = 8)
      : endpoint_(std::move(e)), read_timeout_s_(read_timeout_s), max_idle_(max_idle) {}

  const Endpoint& endpoint() const noexcept { return endpoint_; }

  template <typename Fn>
  httplib::Result request(Fn&& fn) {
    auto cli = take_idle();
    const bool reused = cli != nullptr;
    if (!reused) cli = fresh();
    httplib::Result res = fn(*cli);
    if (!res && reused) {
      cli = fresh();
      res = fn(*cli);
    }
    if (res) release(std::move(cli));
    return res;
  }

 private:
  std::unique_ptr<httplib::Client> take_idle() {
    std::lock_guard lock(mutex_);
    if (idle_.empty()) return nullptr;
    auto cli = std::move(idle_.back());
    idle_.pop_back();
    return cli;
  }

  std::unique_ptr<httplib::Client> fresh() const {
    auto cli = make_client(endpoint_, read_timeout_s_);
    cli->set_keep_alive(true);
    return cli;
  }

  void release(std::unique_ptr<httplib::Client> cli) {
    std::lock_guard lock(mutex_);
    if (idle_.size() < max_idle_) idle_.push_back(std::move(cli));
  }

  Endpoint endpoint_;
  int read_timeout_s_;
  std::size_t max_idle_;
  std::mutex mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
};

/// Runs an httplib::Server on its own thread; stops on destruction.
class ServerThread {
 public:
  explicit ServerThread(std::shared_ptr<httplib::Server> server) : server_(std::move(server)) {}
  ServerThread(const ServerThread&) = delete;
  ServerThread& operator=(const ServerThread&) = delete;
  ~ServerThread() { stop(); }

  /// Binds (port 0 picks a free port) and starts serving. Returns the port.
  int start(const std::string& host, int port) {
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    thread_ = std::thread([s = server_] { s->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
  }

  void stop() {
    if (thread_.joinable()) {
      server_->stop();
      thread_.join();
    }
  }

  int port() const noexcept { return port_; }
  httplib::Server& server() { return *server_; }

 private:
  std::shared_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace cobs::http
