#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cobs/error.hpp"
#include "cobs/model.hpp"
#include "cobs/ring.hpp"

namespace cobs {

struct StoredObject {
  ObjectDescriptor descriptor;
  Bytes bytes;
};

inline nlohmann::json descriptor_to_json(const ObjectDescriptor& d) {
  return {{"path", d.path.render()},
          {"size_bytes", d.size_bytes},
          {"content_hash", d.content_hash.hex()},
          {"content_type", render_content_type(d.content_type)},
          {"uploaded_at", to_iso8601(d.uploaded_at)}};
}

inline ObjectDescriptor descriptor_from_json(const nlohmann::json& j) {
  try {
    auto at = parse_iso8601(j.at("uploaded_at").get<std::string>());
    if (!at) throw Error(Errc::IoError, "bad uploaded_at in descriptor");
    return ObjectDescriptor{ObjectPath::parse(j.at("path").get<std::string>()), j.at("size_bytes").get<std::uint64_t>(),
                            Digest128::from_hex(j.at("content_hash").get<std::string>()),
                            parse_content_type(j.at("content_type").get<std::string>()), *at};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, std::string("bad descriptor: ") + e.what());
  }
}

namespace detail {

inline void write_fully_synced(const std::filesystem::path& file, BytesView data) {
  int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(errno == ENOSPC ? Errc::DiskFull : Errc::IoError, file.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoError, file.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoError, "fsync " + file.string());
  }
  ::close(fd);
}

inline void sync_directory(const std::filesystem::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

inline std::optional<Bytes> read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace detail

/// One storage device's objects on local disk, laid out as
/// `{root}/{partition}/{md5(path)}/data` plus `meta.json`. Writes go to
/// temporaries that are fsynced and renamed into place; per-path access is
/// serialized through striped locks.
class NodeStore {
 public:
  NodeStore(std::filesystem::path root, int part_power, std::optional<std::uint64_t> capacity_bytes = std::nullopt)
      : root_(std::move(root)), part_power_(part_power), capacity_(capacity_bytes) {
    if (part_power_ < 1 || part_power_ > 20) throw Error(Errc::InvalidRing, "part_power must be in [1, 20]");
    std::filesystem::create_directories(root_);
    for (const auto& e : std::filesystem::recursive_directory_iterator(root_))
      if (e.is_regular_file() && e.path().filename() == "data") used_ += e.file_size();
  }

  void put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) {
    if (desc.path != path) throw Error(Errc::IoError, "descriptor path mismatch");
    if (!desc.matches(data)) throw Error(Errc::HashMismatch, "payload does not match its descriptor");
    auto dir = object_dir(path);
    std::unique_lock lock(stripe(path));

    std::uint64_t old_size = 0;
    if (auto existing = std::filesystem::path(dir / "data"); std::filesystem::exists(existing))
      old_size = std::filesystem::file_size(existing);
    {
      std::lock_guard usage(usage_mutex_);
      if (capacity_ && used_ - old_size + data.size() > *capacity_)
        throw Error(Errc::DiskFull, "node capacity exhausted");
    }

    std::filesystem::create_directories(dir);
    const std::string tag = ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    auto data_tmp = dir / ("data" + tag);
    auto meta_tmp = dir / ("meta.json" + tag);
    try {
      detail::write_fully_synced(data_tmp, data);
      detail::write_fully_synced(meta_tmp, descriptor_to_json(desc).dump());
      std::filesystem::rename(data_tmp, dir / "data");
      std::filesystem::rename(meta_tmp, dir / "meta.json");
      detail::sync_directory(dir);
    } catch (...) {
      std::error_code ec;
      std::filesystem::remove(data_tmp, ec);
      std::filesystem::remove(meta_tmp, ec);
      throw;
    }
    std::lock_guard usage(usage_mutex_);
    used_ = used_ - old_size + data.size();
  }

  std::optional<StoredObject> get(const ObjectPath& path) const {
    auto dir = object_dir(path);
    std::shared_lock lock(stripe(path));
    auto meta = detail::read_file(dir / "meta.json");
    auto data = detail::read_file(dir / "data");
    if (!meta || !data) return std::nullopt;
    return StoredObject{parse_meta(*meta), std::move(*data)};
  }

  std::optional<ObjectDescriptor> head(const ObjectPath& path) const {
    std::shared_lock lock(stripe(path));
    auto meta = detail::read_file(object_dir(path) / "meta.json");
    if (!meta) return std::nullopt;
    return parse_meta(*meta);
  }

  bool remove(const ObjectPath& path) {
    auto dir = object_dir(path);
    std::unique_lock lock(stripe(path));
    std::error_code ec;
    if (!std::filesystem::exists(dir / "meta.json", ec)) return false;
    std::uint64_t size = std::filesystem::file_size(dir / "data", ec);
    if (ec) size = 0;
    std::filesystem::remove_all(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot delete " + dir.string());
    detail::sync_directory(dir.parent_path());
    std::lock_guard usage(usage_mutex_);
    used_ -= std::min(used_, size);
    return true;
  }

  std::filesystem::path object_dir(const ObjectPath& path) const {
    Digest128 h = content_hash(path.render());
    return root_ / std::to_string(h.top32() >> (32 - part_power_)) / h.hex();
  }

  std::uint64_t used_bytes() const {
    std::lock_guard usage(usage_mutex_);
    return used_;
  }

  const std::filesystem::path& root() const noexcept { return root_; }
  int part_power() const noexcept { return part_power_; }

 private:
  static ObjectDescriptor parse_meta(const std::string& text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::IoError, "unreadable meta.json");
    return descriptor_from_json(j);
  }

  std::shared_mutex& stripe(const ObjectPath& path) const {
    return stripes_[std::hash<std::string>{}(path.render()) % stripes_.size()];
  }

  std::filesystem::path root_;
  int part_power_;
  std::optional<std::uint64_t> capacity_;
  mutable std::mutex usage_mutex_;
  std::uint64_t used_ = 0;
  mutable std::array<std::shared_mutex, 64> stripes_;
};

/// A storage node as seen from the replication layer. Transport failures
/// surface as Error(IoError); a missing object is an empty optional.
class NodeClient {
 public:
  virtual ~NodeClient() = default;
  virtual std::string address() const = 0;
  virtual void put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) = 0;
  virtual std::optional<StoredObject> get(const ObjectPath& path) = 0;
  virtual std::optional<ObjectDescriptor> head(const ObjectPath& path) = 0;
  virtual bool remove(const ObjectPath& path) = 0;
};

/// In-process node; can be switched off to simulate a crashed server.
class LocalNode final : public NodeClient {
 public:
  LocalNode(std::string address, std::shared_ptr<NodeStore> store)
      : address_(std::move(address)), store_(std::move(store)) {}

  std::string address() const override { return address_; }
  void set_down(bool down) { down_ = down; }
  NodeStore& store() { return *store_; }

  void put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) override {
    check();
    store_->put(path, data, desc);
  }
  std::optional<StoredObject> get(const ObjectPath& path) override {
    check();
    return store_->get(path);
  }
  std::optional<ObjectDescriptor> head(const ObjectPath& path) override {
    check();
    return store_->head(path);
  }
  bool remove(const ObjectPath& path) override {
    check();
    return store_->remove(path);
  }

 private:
  void check() const {
    if (down_) throw Error(Errc::IoError, address_ + " is down");
  }

  std::string address_;
  std::shared_ptr<NodeStore> store_;
  std::atomic<bool> down_{false};
};

/// Adds a fixed latency in front of every write, e.g. to emulate a capped
/// uplink.
class ThrottledNode final : public NodeClient {
 public:
  ThrottledNode(std::shared_ptr<NodeClient> inner, std::chrono::milliseconds write_delay)
      : inner_(std::move(inner)), delay_(write_delay) {}

  std::string address() const override { return inner_->address(); }
  void put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) override {
    std::this_thread::sleep_for(delay_);
    inner_->put(path, data, desc);
  }
  std::optional<StoredObject> get(const ObjectPath& path) override { return inner_->get(path); }
  std::optional<ObjectDescriptor> head(const ObjectPath& path) override { return inner_->head(path); }
  bool remove(const ObjectPath& path) override { return inner_->remove(path); }

 private:
  std::shared_ptr<NodeClient> inner_;
  std::chrono::milliseconds delay_;
};

struct WriteReceipt {
  int acks = 0;
  int replicas_attempted = 0;
  std::vector<std::string> failed_nodes;
};

/// QuorumFailed, carrying the receipt of the failed write.
class QuorumError : public Error {
 public:
  explicit QuorumError(WriteReceipt receipt)
      : Error(Errc::QuorumFailed, std::to_string(receipt.acks) + "/" + std::to_string(receipt.replicas_attempted) +
                                      " replicas acknowledged"),
        receipt_(std::move(receipt)) {}
  const WriteReceipt& receipt() const noexcept { return receipt_; }

 private:
  WriteReceipt receipt_;
};

inline int write_quorum(int replica_count) { return replica_count / 2 + 1; }

struct RepairReport {
  std::vector<std::string> healthy;
  std::vector<std::string> repaired;
  std::vector<std::string> unreachable;
};

/// Replication over the ring's placement. Writes fan out to every replica
/// and succeed on a majority of acknowledgements; reads walk replicas in
/// placement order and return the first copy whose digest verifies.
class Cluster {
 public:
  using NodeMap = std::map<int, std::shared_ptr<NodeClient>>;

  Cluster(std::shared_ptr<const RingMap> ring, NodeMap nodes) : ring_(std::move(ring)), nodes_(std::move(nodes)) {
    check_nodes(*ring_);
  }

  std::shared_ptr<const RingMap> ring() const {
    std::lock_guard lock(ring_mutex_);
    return ring_;
  }

  /// Atomically replaces the ring; in-flight requests keep the old one.
  void swap_ring(std::shared_ptr<const RingMap> next) {
    check_nodes(*next);
    std::lock_guard lock(ring_mutex_);
    ring_ = std::move(next);
  }

  WriteReceipt replicated_put(const ObjectPath& path, BytesView data, const ObjectDescriptor& desc) {
    auto ring = this->ring();
    auto placement = locate(*ring, path);
    std::vector<std::future<bool>> acks;
    for (const auto& dev : placement.devices) {
      auto node = nodes_.at(dev.id);
      acks.push_back(std::async(std::launch::async, [node, &path, data, &desc] {
        try {
          node->put(path, data, desc);
          return true;
        } catch (const std::exception&) {
          return false;
        }
      }));
    }
    WriteReceipt receipt;
    receipt.replicas_attempted = static_cast<int>(placement.devices.size());
    for (std::size_t i = 0; i < acks.size(); ++i) {
      if (acks[i].get())
        ++receipt.acks;
      else
        receipt.failed_nodes.push_back(placement.devices[i].node_address);
    }
    if (receipt.acks < write_quorum(ring->replica_count)) throw QuorumError(std::move(receipt));
    return receipt;
  }

  StoredObject replicated_get(const ObjectPath& path) {
    auto placement = locate(*ring(), path);
    bool corrupt = false;
    for (const auto& dev : placement.devices) {
      replica_reads_.fetch_add(1, std::memory_order_relaxed);
      try {
        auto obj = nodes_.at(dev.id)->get(path);
        if (!obj) continue;
        if (!obj->descriptor.matches(obj->bytes)) {
          corrupt = true;
          continue;
        }
        return std::move(*obj);
      } catch (const std::exception&) {
        continue;
      }
    }
    if (corrupt) throw Error(Errc::CorruptReplica, "no replica of " + path.render() + " verifies");
    throw Error(Errc::NotFound, path.render());
  }

  /// Descriptor from the first replica that has one.
  std::optional<ObjectDescriptor> replicated_head(const ObjectPath& path) {
    for (const auto& dev : locate(*ring(), path).devices) {
      try {
        if (auto d = nodes_.at(dev.id)->head(path)) return d;
      } catch (const std::exception&) {
      }
    }
    return std::nullopt;
  }

  /// Removes every replica; true if any existed.
  bool replicated_delete(const ObjectPath& path) {
    bool removed = false;
    for (const auto& dev : locate(*ring(), path).devices) {
      try {
        removed = nodes_.at(dev.id)->remove(path) || removed;
      } catch (const std::exception&) {
      }
    }
    return removed;
  }

  /// Re-pushes a verified copy to every replica that is missing the object
  /// or holds bytes that fail their digest.
  RepairReport repair(const ObjectPath& path) {
    StoredObject good = replicated_get(path);
    RepairReport report;
    for (const auto& dev : locate(*ring(), path).devices) {
      auto& node = nodes_.at(dev.id);
      try {
        auto obj = node->get(path);
        if (obj && obj->descriptor == good.descriptor && obj->descriptor.matches(obj->bytes)) {
          report.healthy.push_back(dev.node_address);
          continue;
        }
        node->put(path, good.bytes, good.descriptor);
        report.repaired.push_back(dev.node_address);
      } catch (const std::exception&) {
        report.unreachable.push_back(dev.node_address);
      }
    }
    return report;
  }

  std::shared_ptr<NodeClient> node(int device_id) const { return nodes_.at(device_id); }
  std::uint64_t replica_reads() const noexcept { return replica_reads_.load(); }

 private:
  void check_nodes(const RingMap& ring) const {
    for (const auto& d : ring.devices)
      if (!nodes_.count(d.id)) throw Error(Errc::InvalidRing, "no node client for device " + std::to_string(d.id));
  }

  mutable std::mutex ring_mutex_;
  std::shared_ptr<const RingMap> ring_;
  NodeMap nodes_;
  std::atomic<std::uint64_t> replica_reads_{0};
};

}  // namespace cobs
