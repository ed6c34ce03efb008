#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <json.hpp>

#include "cobs/classifier.hpp"
#include "cobs/detection.hpp"
#include "cobs/keywords.hpp"
#include "cobs/refinery.hpp"
#include "cobs/search_index.hpp"
#include "cobs/storage.hpp"
#include "cobs/text_readers.hpp"

namespace cobs {

struct AuthToken {
  std::string token;
  std::string account;
  UtcSeconds expires_at{};
};

struct UserEntry {
  std::string key;
  std::string account;
};

using UserTable = std::map<std::string, UserEntry>;

/// `{"users":[{"user":..., "key":..., "account":...}, ...]}`
inline UserTable parse_users(const nlohmann::json& j) {
  UserTable users;
  try {
    for (const auto& u : j.at("users")) {
      UserEntry e{u.at("key").get<std::string>(), u.at("account").get<std::string>()};
      ObjectPath(e.account, "c", "o");  // validates the account name
      users[u.at("user").get<std::string>()] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, std::string("bad users file: ") + e.what());
  }
  return users;
}

inline UserTable load_users(const std::filesystem::path& file) {
  auto text = detail::read_file(file);
  if (!text) throw Error(Errc::IoError, "cannot read " + file.string());
  auto j = nlohmann::json::parse(*text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::IoError, file.string() + " is not JSON");
  return parse_users(j);
}

struct UploadOutcome {
  ObjectDescriptor descriptor;
  WriteReceipt write;
  IndexDocument document;
  bool indexed = false;
  bool extraction_failed = false;
  std::int64_t extraction_millis = 0;
  std::int64_t upload_millis = 0;
  std::int64_t total_millis = 0;
};

struct GatewayOptions {
  std::size_t keyphrase_count = 3;
  DetectOptions detect;
  std::chrono::seconds token_ttl = std::chrono::hours(24);
  std::function<UtcSeconds()> clock = utc_now;
};

/// Upload orchestration, object access and search on behalf of
/// authenticated accounts. Transport-independent; see GatewayServer for the
/// HTTP binding.
class Gateway {
 public:
  Gateway(std::shared_ptr<Cluster> cluster, std::shared_ptr<SearchIndex> index,
          std::shared_ptr<DetectorAdapter> detector, std::shared_ptr<Embedder> embedder, UserTable users,
          GatewayOptions options = {})
      : cluster_(std::move(cluster)),
        index_(std::move(index)),
        detector_(std::move(detector)),
        embedder_(std::move(embedder)),
        users_(std::move(users)),
        options_(std::move(options)),
        rng_(std::random_device{}()) {}

  AuthToken authenticate(const std::string& user, const std::string& key) {
    auto it = users_.find(user);
    if (it == users_.end() || it->second.key != key) throw Error(Errc::Unauthorized, "bad credentials");
    std::lock_guard lock(tokens_mutex_);
    purge_expired_locked();
    AuthToken t{random_token_locked(), it->second.account, options_.clock() + options_.token_ttl};
    tokens_[t.token] = t;
    return t;
  }

  /// The live token, or Unauthorized.
  AuthToken authorize(const std::string& token) const {
    std::lock_guard lock(tokens_mutex_);
    auto it = tokens_.find(token);
    if (it == tokens_.end() || it->second.expires_at <= options_.clock())
      throw Error(Errc::Unauthorized, "missing, unknown or expired token");
    return it->second;
  }

  UploadOutcome upload(const std::string& token, const ObjectPath& path, BytesView data, std::string_view filename = {},
                       const DetectHints& hints = {}) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    check_scope(authorize(token), path);
    if (data.empty()) throw Error(Errc::EmptyInput, "empty upload body");
    std::lock_guard path_lock(upload_stripe(path));

    std::optional<ClassificationResult> cls;
    try {
      cls = classify(data, filename.empty() ? std::string_view(path.object()) : filename);
    } catch (const Error& e) {
      if (e.code() != Errc::UnsupportedType) throw;
    }

    UploadOutcome out{
        ObjectDescriptor::describe(path, data, cls ? cls->content_type : ContentType::other(), options_.clock()),
        {},
        {}};
    auto since = [](Clock::time_point t) {
      return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t).count();
    };
    auto store = [&] {
      auto t = Clock::now();
      try {
        out.write = cluster_->replicated_put(path, data, out.descriptor);
      } catch (...) {
        out.upload_millis = since(t);
        throw;
      }
      out.upload_millis = since(t);
    };

    if (!cls) {
      store();
      out.document = build_other_doc(out.descriptor);
    } else if (cls->content_type.kind == ContentKind::Image) {
      // Detection works on its own copy while the original bytes are written.
      auto extraction = std::async(std::launch::async, [&]() -> std::optional<ImageExtraction> {
        auto t = Clock::now();
        try {
          auto r = detect_on_copy(data, *detector_, hints, options_.detect);
          out.extraction_millis = since(t);
          return r;
        } catch (const Error&) {
          out.extraction_millis = since(t);
          return std::nullopt;
        }
      });
      try {
        store();
      } catch (...) {
        extraction.wait();
        throw;
      }
      auto ext = extraction.get();
      if (ext) {
        out.document = build_image_doc(out.descriptor, *ext);
      } else {
        out.document = detail::base_document(out.descriptor, ContentKind::Image);
        out.extraction_failed = true;
      }
    } else {
      auto t = Clock::now();
      std::optional<std::vector<ScoredPhrase>> phrases;
      try {
        phrases = extract_keyphrases(readers_.read(cls->content_type.format, data), *embedder_,
                                     options_.keyphrase_count);
      } catch (const Error& e) {
        if (e.code() == Errc::EmptyInput) phrases.emplace();
      }
      out.extraction_millis = since(t);
      store();
      if (phrases) {
        out.document = build_document_doc(out.descriptor, *phrases);
      } else {
        out.document = detail::base_document(out.descriptor, ContentKind::Document);
        out.extraction_failed = true;
      }
    }

    out.document.extraction_failed = out.extraction_failed;
    if (out.extraction_failed) out.document.contents.clear();
    index_->index_doc(out.document);
    out.indexed = true;
    out.total_millis = since(start);
    return out;
  }

  /// One replicated read on the healthy path.
  StoredObject get_object(const std::string& token, const ObjectPath& path) {
    check_scope(authorize(token), path);
    return cluster_->replicated_get(path);
  }

  ObjectDescriptor head_object(const std::string& token, const ObjectPath& path) {
    check_scope(authorize(token), path);
    auto d = cluster_->replicated_head(path);
    if (!d) throw Error(Errc::NotFound, path.render());
    return *d;
  }

  /// Drops the index entry before the replicas so no hit outlives its object.
  void delete_object(const std::string& token, const ObjectPath& path) {
    check_scope(authorize(token), path);
    std::lock_guard path_lock(upload_stripe(path));
    bool indexed = index_->delete_doc(path.render());
    if (!cluster_->replicated_delete(path) && !indexed) throw Error(Errc::NotFound, path.render());
  }

  QueryResponse search(const std::string& token, Query q) const {
    q.filters.account = authorize(token).account;
    return index_->search(q);
  }

  std::vector<std::string> suggest(const std::string& token, const std::string& prefix, std::size_t n) const {
    auto account = authorize(token).account;
    if (prefix.empty()) throw Error(Errc::BadQuery, "empty prefix");
    if (n == 0) throw Error(Errc::BadQuery, "n must be positive");
    return index_->suggest(prefix, n, account);
  }

  Cluster& cluster() { return *cluster_; }
  SearchIndex& index() { return *index_; }

 private:
  static void check_scope(const AuthToken& t, const ObjectPath& path) {
    if (path.account() != t.account) throw Error(Errc::Forbidden, "token does not cover " + path.account());
  }

  std::mutex& upload_stripe(const ObjectPath& path) {
    return upload_stripes_[std::hash<std::string>{}(path.render()) % upload_stripes_.size()];
  }

  std::string random_token_locked() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string t;
    for (int i = 0; i < 2; ++i) {
      auto v = rng_();
      for (int k = 0; k < 16; ++k, v >>= 4) t.push_back(kHex[v & 0xF]);
    }
    return "tk_" + t;
  }

  void purge_expired_locked() {
    auto now = options_.clock();
    std::erase_if(tokens_, [&](const auto& kv) { return kv.second.expires_at <= now; });
  }

  std::shared_ptr<Cluster> cluster_;
  std::shared_ptr<SearchIndex> index_;
  std::shared_ptr<DetectorAdapter> detector_;
  std::shared_ptr<Embedder> embedder_;
  UserTable users_;
  GatewayOptions options_;
  TextReaders readers_;

  mutable std::mutex tokens_mutex_;
  std::map<std::string, AuthToken> tokens_;
  std::mt19937_64 rng_;
  std::array<std::mutex, 128> upload_stripes_;
};

}  // namespace cobs
