#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cobs/digest.hpp"
#include "cobs/error.hpp"
#include "cobs/model.hpp"

namespace cobs {

struct Device {
  int id = 0;
  int zone = 0;
  std::string node_address;  // host:port
  double weight = 1.0;
  friend bool operator==(const Device&, const Device&) = default;
};

/// Partition to replica-device table. Immutable once built; swap whole
/// rings to change placement.
struct RingMap {
  int part_power = 0;
  int replica_count = 3;
  std::vector<Device> devices;
  std::vector<std::vector<int>> assignment;
  // Fewer zones than replicas: replicas are only guaranteed distinct devices.
  bool degraded_zones = false;
  // Fewer devices than replicas (only with allow_degraded).
  bool degraded_devices = false;
  std::string hash_salt;

  std::size_t partition_count() const noexcept { return std::size_t{1} << part_power; }

  const Device& device(int id) const {
    for (const auto& d : devices)
      if (d.id == id) return d;
    throw Error(Errc::InvalidRing, "unknown device id " + std::to_string(id));
  }

  std::size_t partition_of(const ObjectPath& path) const {
    Digest128 h = content_hash(hash_salt + path.render());
    return static_cast<std::size_t>(h.top32() >> (32 - part_power));
  }
};

struct RingOptions {
  bool allow_degraded = false;
  std::string hash_salt;
};

struct Placement {
  std::size_t partition = 0;
  std::vector<Device> devices;
};

inline Placement locate(const RingMap& ring, const ObjectPath& path) {
  Placement p;
  p.partition = ring.partition_of(path);
  for (int id : ring.assignment.at(p.partition)) p.devices.push_back(ring.device(id));
  return p;
}

/// Number of (partition, replica) assignments present in `after` but not
/// in `before`.
inline std::size_t moved_slots(const RingMap& before, const RingMap& after) {
  std::size_t moved = 0;
  for (std::size_t p = 0; p < after.assignment.size(); ++p) {
    const auto& old_row = p < before.assignment.size() ? before.assignment[p] : std::vector<int>{};
    for (int id : after.assignment[p])
      if (std::find(old_row.begin(), old_row.end(), id) == old_row.end()) ++moved;
  }
  return moved;
}

inline std::size_t distinct_zones(const std::vector<Device>& devices) {
  std::set<int> zones;
  for (const auto& d : devices) zones.insert(d.zone);
  return zones.size();
}

namespace detail {

/// Splits `total` slots across `weights` proportionally, with no member
/// exceeding `cap`; excess flows to the uncapped members.
inline std::vector<double> water_fill(const std::vector<double>& weights, double total, double cap) {
  std::vector<double> share(weights.size(), 0.0);
  std::vector<bool> capped(weights.size(), false);
  double remaining = total;
  for (;;) {
    double w = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (!capped[i]) w += weights[i];
    if (w <= 0) break;
    bool changed = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (capped[i]) continue;
      if (remaining * weights[i] / w > cap) {
        capped[i] = true;
        share[i] = cap;
        remaining -= cap;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t i = 0; i < weights.size(); ++i)
        if (!capped[i]) share[i] = remaining * weights[i] / w;
      break;
    }
  }
  return share;
}

inline void validate_devices(const std::vector<Device>& devices) {
  std::set<int> ids;
  for (const auto& d : devices) {
    if (!ids.insert(d.id).second) throw Error(Errc::InvalidRing, "duplicate device id " + std::to_string(d.id));
    if (!(d.weight > 0)) throw Error(Errc::InvalidRing, "device weight must be positive");
  }
}

class RingBuilder {
 public:
  RingBuilder(std::vector<Device> devices, std::size_t partitions, std::size_t replicas, bool disperse)
      : devices_(std::move(devices)), partitions_(partitions), replicas_(replicas), disperse_(disperse) {
    // Zone-sorted device cycle.
    std::stable_sort(devices_.begin(), devices_.end(),
                     [](const Device& a, const Device& b) { return a.zone != b.zone ? a.zone < b.zone : a.id < b.id; });
    for (std::size_t i = 0; i < devices_.size(); ++i) index_of_[devices_[i].id] = i;
    for (const auto& d : devices_) zones_.insert(d.zone);
    counts_.assign(devices_.size(), 0);
    compute_targets();
  }

  /// Adopts surviving assignments of a previous ring.
  void seed(const std::vector<std::vector<int>>& old_rows) {
    rows_.assign(partitions_, {});
    for (std::size_t p = 0; p < partitions_ && p < old_rows.size(); ++p) {
      for (int id : old_rows[p]) {
        auto it = index_of_.find(id);
        if (it == index_of_.end() || rows_[p].size() == replicas_) continue;
        if (!allowed(rows_[p], it->second, std::nullopt)) continue;
        place(p, it->second);
      }
    }
  }

  void fill() {
    if (rows_.empty()) rows_.assign(partitions_, {});
    for (std::size_t p = 0; p < partitions_; ++p) {
      while (rows_[p].size() < replicas_) {
        auto pick = best_candidate(p, disperse_);
        if (!pick) {
          pick = best_candidate(p, false);
          degraded_zones_ = true;
        }
        place(p, *pick);
      }
    }
  }

  /// Single-slot moves from overloaded to underloaded devices while each
  /// strictly reduces the squared deviation from target.
  void balance() {
    const std::size_t n = devices_.size();
    std::vector<std::size_t> order(n);
    for (;;) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return excess(a) > excess(b); });
      bool moved = false;
      for (std::size_t ui = n; ui-- > 0 && !moved;) {
        const std::size_t u = order[ui];
        if (excess(u) >= 0) break;
        for (std::size_t oi = 0; oi < n && !moved; ++oi) {
          const std::size_t o = order[oi];
          if (excess(o) - excess(u) <= 1.0) break;
          moved = try_move(o, u);
        }
      }
      if (!moved) return;
    }
  }

  std::vector<std::vector<int>> rows() const {
    std::vector<std::vector<int>> out(partitions_);
    for (std::size_t p = 0; p < partitions_; ++p)
      for (std::size_t i : rows_[p]) out[p].push_back(devices_[i].id);
    return out;
  }

  bool degraded_zones() const noexcept { return degraded_zones_; }

 private:
  double excess(std::size_t d) const { return static_cast<double>(counts_[d]) - targets_[d]; }

  void compute_targets() {
    const double total = static_cast<double>(partitions_ * replicas_);
    const double cap = static_cast<double>(partitions_);
    targets_.assign(devices_.size(), 0.0);
    if (!disperse_) {
      std::vector<double> w;
      for (const auto& d : devices_) w.push_back(d.weight);
      targets_ = water_fill(w, total, cap);
      return;
    }
    std::vector<int> zone_list(zones_.begin(), zones_.end());
    std::vector<double> zone_w(zone_list.size(), 0.0);
    for (const auto& d : devices_)
      zone_w[std::lower_bound(zone_list.begin(), zone_list.end(), d.zone) - zone_list.begin()] += d.weight;
    auto zone_share = water_fill(zone_w, total, cap);
    for (std::size_t z = 0; z < zone_list.size(); ++z) {
      std::vector<std::size_t> members;
      std::vector<double> w;
      for (std::size_t i = 0; i < devices_.size(); ++i)
        if (devices_[i].zone == zone_list[z]) {
          members.push_back(i);
          w.push_back(devices_[i].weight);
        }
      auto share = water_fill(w, zone_share[z], cap);
      for (std::size_t k = 0; k < members.size(); ++k) targets_[members[k]] = share[k];
      zone_target_[zone_list[z]] = zone_share[z];
    }
  }

  bool allowed(const std::vector<std::size_t>& row, std::size_t cand, std::optional<std::size_t> replacing) const {
    for (std::size_t i : row) {
      if (replacing && i == *replacing) continue;
      if (i == cand) return false;
      if (disperse_ && devices_[i].zone == devices_[cand].zone) return false;
    }
    return true;
  }

  double zone_deficit(int zone) const {
    auto it = zone_target_.find(zone);
    double target = it == zone_target_.end() ? 0.0 : it->second;
    auto c = zone_count_.find(zone);
    return target - (c == zone_count_.end() ? 0.0 : static_cast<double>(c->second));
  }

  std::optional<std::size_t> best_candidate(std::size_t p, bool disperse) const {
    const std::size_t n = devices_.size();
    std::optional<std::size_t> best;
    double best_zone = 0, best_dev = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = (p + k) % n;
      const auto& row = rows_[p];
      if (std::find(row.begin(), row.end(), i) != row.end()) continue;
      if (disperse && std::any_of(row.begin(), row.end(), [&](std::size_t j) { return devices_[j].zone == devices_[i].zone; }))
        continue;
      double zd = disperse_ ? zone_deficit(devices_[i].zone) : 0.0;
      double dd = targets_[i] - static_cast<double>(counts_[i]);
      if (!best || zd > best_zone + 1e-9 || (zd > best_zone - 1e-9 && dd > best_dev + 1e-9)) {
        best = i;
        best_zone = zd;
        best_dev = dd;
      }
    }
    return best;
  }

  void place(std::size_t p, std::size_t d) {
    rows_[p].push_back(d);
    ++counts_[d];
    ++zone_count_[devices_[d].zone];
  }

  bool try_move(std::size_t from, std::size_t to) {
    for (std::size_t k = 0; k < partitions_; ++k) {
      const std::size_t p = (cursor_ + k) % partitions_;
      auto& row = rows_[p];
      auto slot = std::find(row.begin(), row.end(), from);
      if (slot == row.end() || !allowed(row, to, from)) continue;
      *slot = to;
      --counts_[from];
      ++counts_[to];
      --zone_count_[devices_[from].zone];
      ++zone_count_[devices_[to].zone];
      cursor_ = p + 1;
      return true;
    }
    return false;
  }

  std::vector<Device> devices_;
  std::size_t partitions_;
  std::size_t replicas_;
  bool disperse_;
  bool degraded_zones_ = false;
  std::map<int, std::size_t> index_of_;
  std::set<int> zones_;
  std::vector<double> targets_;
  std::map<int, double> zone_target_;
  std::vector<std::size_t> counts_;
  std::map<int, std::size_t> zone_count_;
  std::vector<std::vector<std::size_t>> rows_;
  std::size_t cursor_ = 0;
};

inline RingMap assemble(std::vector<Device> devices, int part_power, int replica_count, const RingOptions& opts,
                        const std::vector<std::vector<int>>* previous) {
  if (part_power < 1 || part_power > 20) throw Error(Errc::InvalidRing, "part_power must be in [1, 20]");
  if (replica_count < 1) throw Error(Errc::InvalidRing, "replica_count must be positive");
  validate_devices(devices);
  const bool short_devices = devices.size() < static_cast<std::size_t>(replica_count);
  if (devices.empty() || (short_devices && !opts.allow_degraded))
    throw Error(Errc::InsufficientDevices, std::to_string(devices.size()) + " devices for " +
                                               std::to_string(replica_count) + " replicas");
  const std::size_t replicas = std::min<std::size_t>(replica_count, devices.size());
  const bool disperse = distinct_zones(devices) >= replicas;

  RingMap ring;
  ring.part_power = part_power;
  ring.replica_count = replica_count;
  ring.hash_salt = opts.hash_salt;
  ring.devices = devices;
  ring.degraded_devices = short_devices;

  RingBuilder builder(std::move(devices), std::size_t{1} << part_power, replicas, disperse);
  if (previous) builder.seed(*previous);
  builder.fill();
  builder.balance();
  ring.assignment = builder.rows();
  ring.degraded_zones = !disperse || builder.degraded_zones();
  return ring;
}

}  // namespace detail

inline RingMap build_ring(std::vector<Device> devices, int part_power, int replica_count = 3,
                          const RingOptions& opts = {}) {
  return detail::assemble(std::move(devices), part_power, replica_count, opts, nullptr);
}

/// New ring over `devices` keeping as many existing assignments as the new
/// balance targets allow.
inline RingMap rebalance(const RingMap& ring, std::vector<Device> devices, bool allow_degraded = false) {
  RingOptions opts{allow_degraded, ring.hash_salt};
  return detail::assemble(std::move(devices), ring.part_power, ring.replica_count, opts, &ring.assignment);
}

/// Per-device assigned slot counts keyed by device id.
inline std::map<int, std::size_t> device_loads(const RingMap& ring) {
  std::map<int, std::size_t> loads;
  for (const auto& d : ring.devices) loads[d.id] = 0;
  for (const auto& row : ring.assignment)
    for (int id : row) ++loads[id];
  return loads;
}

inline nlohmann::json to_json(const RingMap& ring) {
  nlohmann::json devs = nlohmann::json::array();
  for (const auto& d : ring.devices)
    devs.push_back({{"id", d.id}, {"zone", d.zone}, {"node_address", d.node_address}, {"weight", d.weight}});
  nlohmann::json j{{"part_power", ring.part_power},
                   {"replica_count", ring.replica_count},
                   {"devices", std::move(devs)},
                   {"assignment", ring.assignment}};
  if (ring.degraded_zones) j["degraded_zones"] = true;
  if (ring.degraded_devices) j["degraded_devices"] = true;
  if (!ring.hash_salt.empty()) j["hash_salt"] = ring.hash_salt;
  return j;
}

inline std::vector<Device> devices_from_json(const nlohmann::json& arr) {
  std::vector<Device> out;
  for (const auto& d : arr)
    out.push_back(Device{d.at("id").get<int>(), d.value("zone", 0), d.value("node_address", std::string{}),
                         d.value("weight", 1.0)});
  return out;
}

inline RingMap ring_from_json(const nlohmann::json& j) {
  try {
    RingMap ring;
    ring.part_power = j.at("part_power").get<int>();
    ring.replica_count = j.at("replica_count").get<int>();
    ring.devices = devices_from_json(j.at("devices"));
    ring.assignment = j.at("assignment").get<std::vector<std::vector<int>>>();
    ring.degraded_zones = j.value("degraded_zones", false);
    ring.degraded_devices = j.value("degraded_devices", false);
    ring.hash_salt = j.value("hash_salt", std::string{});
    if (ring.part_power < 1 || ring.part_power > 20) throw Error(Errc::InvalidRing, "part_power out of range");
    detail::validate_devices(ring.devices);
    if (ring.assignment.size() != ring.partition_count()) throw Error(Errc::InvalidRing, "assignment size");
    const std::size_t want = std::min<std::size_t>(ring.replica_count, ring.devices.size());
    for (const auto& row : ring.assignment) {
      if (row.size() != want) throw Error(Errc::InvalidRing, "partition with wrong replica count");
      std::set<int> distinct(row.begin(), row.end());
      if (distinct.size() != row.size()) throw Error(Errc::InvalidRing, "partition repeats a device");
      for (int id : row) ring.device(id);
    }
    return ring;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidRing, e.what());
  }
}

inline RingMap load_ring(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::IoError, "cannot read ring " + file.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::InvalidRing, "ring file is not JSON");
  return ring_from_json(j);
}

inline void save_ring(const RingMap& ring, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  out << to_json(ring).dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "cannot write ring " + file.string());
}

}  // namespace cobs
