#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cobs/ring.hpp"
#include "cobs/storage.hpp"

namespace testenv {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cobs-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// `n` in-process nodes over `zones` zones, one device each.
struct LocalCluster {
  TempDir dir;
  std::vector<std::shared_ptr<cobs::LocalNode>> nodes;
  std::shared_ptr<cobs::RingMap> ring;
  std::shared_ptr<cobs::Cluster> cluster;

  LocalCluster(int n, int zones, int part_power = 8, int replicas = 3,
               std::optional<std::uint64_t> capacity = std::nullopt,
               std::chrono::milliseconds write_delay = std::chrono::milliseconds(0)) {
    std::vector<cobs::Device> devices;
    cobs::Cluster::NodeMap map;
    for (int i = 0; i < n; ++i) {
      std::string addr = "node" + std::to_string(i);
      devices.push_back({i, i % zones, addr, 1.0});
      auto store = std::make_shared<cobs::NodeStore>(dir.path() / addr, part_power, capacity);
      nodes.push_back(std::make_shared<cobs::LocalNode>(addr, store));
      if (write_delay.count() > 0)
        map[i] = std::make_shared<cobs::ThrottledNode>(nodes.back(), write_delay);
      else
        map[i] = nodes.back();
    }
    ring = std::make_shared<cobs::RingMap>(cobs::build_ring(devices, part_power, replicas));
    cluster = std::make_shared<cobs::Cluster>(ring, map);
  }

  cobs::LocalNode& node(int id) { return *nodes.at(static_cast<std::size_t>(id)); }
};

}  // namespace testenv
