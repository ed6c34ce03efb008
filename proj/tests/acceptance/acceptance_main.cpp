// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cobs/bench.hpp"
#include "support/corpus_gen.hpp"
#include "support/gateway_env.hpp"
#include "support/keyphrase_oracle.hpp"
#include "support/ring_checks.hpp"
#include "support/search_oracle.hpp"

using namespace cobs;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_data(const std::string& name) {
  std::ifstream in(std::string(COBS_TEST_DATA) + "/" + name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// search-oracle --------------------------------------------------------------

Outcome search_oracle_equivalence() {
  std::size_t queries = 0, mismatches = 0;
  std::mt19937_64 rng(2024);
  for (std::size_t n : {1000u, 5000u, 20000u}) {
    auto docs = oracle::synthetic_corpus(n, n);
    SearchIndex index;
    for (const auto& d : docs) index.index_doc(d);

    auto check = [&](const std::vector<IndexDocument>& live, int count) {
      for (int i = 0; i < count; ++i) {
        const std::size_t limits[] = {1, 10, 50, n};
        auto q = oracle::random_query(rng, limits[rng() % 4]);
        ++queries;
        if (oracle::hits_of(index.search(q)) != oracle::scan(live, q)) ++mismatches;
      }
    };
    check(docs, 300);

    // churn: drop 5% and relabel 5%, then compare again
    std::vector<IndexDocument> live;
    for (auto& d : docs) {
      auto r = rng() % 20;
      if (r == 0) {
        index.delete_doc(d.url_path);
        continue;
      }
      if (r == 1) {
        d.contents = {std::string(kCocoClasses[rng() % kCocoClasses.size()])};
        index.index_doc(d);
      }
      live.push_back(d);
    }
    check(live, 100);
  }
  return {mismatches == 0, fmt("%zu queries over 1k/5k/20k corpora, %zu mismatches", queries, mismatches)};
}

// query scaling ---------------------------------------------------------------

Outcome query_time_scaling() {
  // one gateway per corpus size, swept round-robin
  const std::vector<std::size_t> sizes = {1000, 5000, 20000};
  std::vector<std::unique_ptr<testenv::GatewayEnv>> envs;
  std::vector<bench::IngestResult> ingested;
  testenv::TempDir corpora;
  std::size_t failed_uploads = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    bench::GenOptions gen;
    gen.images = sizes[i];
    gen.seed = i + 1;
    gen.min_bytes = 512;
    gen.max_bytes = 2048;
    auto dir = corpora.path() / std::to_string(sizes[i]);
    bench::generate_corpus(dir, gen);
    envs.push_back(std::make_unique<testenv::GatewayEnv>());
    ingested.push_back(bench::ingest(dir, *envs.back()->client));
    failed_uploads += ingested.back().failed;
  }
  std::vector<GatewayClient*> clients;
  for (auto& e : envs) clients.push_back(e->client.get());
  auto sweeps = bench::interleaved_sweep(clients, bench::default_keywords(), 5);
  auto wide = bench::interleaved_sweep(clients, bench::default_keywords(), 5, 50);

  std::size_t samples = 0, violations = 0;
  std::vector<bench::BenchReport> rows;
  bool sizes_ok = true, keywords_ok = true;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    samples += sweeps[i].samples.size() + wide[i].samples.size();
    violations += sweeps[i].ordering_violations() + wide[i].ordering_violations();
    rows.push_back(bench::make_report(ingested[i], &sweeps[i]));
    sizes_ok = sizes_ok && envs[i]->index->size() == sizes[i];
    keywords_ok = keywords_ok && rows.back().keyword_count == 80;
  }
  std::cout << "  " << bench::kCsvHeader << "\n";
  for (const auto& r : rows) std::cout << "  " << bench::csv_row(r) << "\n";
  const double ratio = rows[2].avg_query_ms / rows[0].avg_query_ms;
  const double wide_ratio = wide[2].avg_query_ms / wide[0].avg_query_ms;
  bool pass = ratio <= 1.25 && violations == 0 && failed_uploads == 0 && keywords_ok && sizes_ok;
  return {pass, fmt("mean query 20k/1k = %.3f at %zu hits per query (limit 1.25; %.3f at 50 hits, not scored); "
                    "query<=request violations %zu of %zu samples; %zu failed uploads",
                    ratio, bench::kSweepLimit, wide_ratio, violations, samples, failed_uploads)};
}

// replication & durability ----------------------------------------------------

Outcome replication_durability() {
  testenv::GatewayEnv env;
  std::mt19937_64 rng(77);
  struct Stored {
    ObjectPath path;
    std::string bytes;
  };
  std::vector<Stored> stored;
  std::size_t failures = 0, bad_placement = 0, bad_replica = 0, wrong_holders = 0, wrong_acks = 0;

  auto random_payload = [&](std::size_t i) -> std::pair<std::string, std::string> {
    std::size_t n = 1 + rng() % 65536;
    switch (rng() % 3) {
      case 0: return {"obj_" + std::to_string(i) + ".jpg", testenv::jpeg_bytes(std::max<std::size_t>(n, 4), rng())};
      case 1: {
        std::mt19937_64 r2(rng());
        return {"obj_" + std::to_string(i) + ".txt", testgen::random_document(r2, 3 + n % 400)};
      }
      default: {
        std::string s(n, '\0');
        for (auto& c : s) c = static_cast<char>(rng() & 0xFF);
        s[0] = '\0';
        return {"obj_" + std::to_string(i) + ".bin", s};
      }
    }
  };

  auto verify = [&](const ObjectPath& path, const std::string& bytes, std::set<int> down) {
    auto placement = locate(*env.storage.ring, path);
    std::set<int> devs, zones;
    for (const auto& d : placement.devices) {
      devs.insert(d.id);
      zones.insert(d.zone);
    }
    if (devs.size() != 3 || zones.size() != 3) ++bad_placement;
    for (const auto& d : placement.devices) {
      if (down.count(d.id)) continue;
      auto obj = env.storage.node(d.id).store().get(path);
      if (!obj || obj->bytes != bytes || !obj->descriptor.matches(obj->bytes)) ++bad_replica;
    }
    // live nodes hold the object exactly when they are in its placement
    for (int i = 0; i < 6; ++i) {
      if (down.count(i)) continue;
      if (env.storage.node(i).store().head(path).has_value() != (devs.count(i) > 0)) {
        ++wrong_holders;
        break;
      }
    }
  };

  for (std::size_t i = 0; i < 500; ++i) {
    auto [name, bytes] = random_payload(i);
    ObjectPath p("AUTH_test", "durable", name);
    auto r = env.client->put(p, bytes);
    if (r.status != 201 && r.status != 207) {
      ++failures;
      continue;
    }
    if (r.json()["write"]["acks"] != 3) ++wrong_acks;
    verify(p, bytes, {});
    stored.push_back({p, bytes});
  }

  const int dead = 0;
  env.storage.node(dead).set_down(true);
  std::size_t degraded_writes = 0;
  for (std::size_t i = 500; i < 600; ++i) {
    auto [name, bytes] = random_payload(i);
    ObjectPath p("AUTH_test", "durable", name);
    auto r = env.client->put(p, bytes);
    if (r.status != 201 && r.status != 207) {
      ++failures;
      continue;
    }
    auto placement = locate(*env.storage.ring, p);
    bool hits_dead = std::any_of(placement.devices.begin(), placement.devices.end(),
                                 [](const Device& d) { return d.id == dead; });
    int acks = r.json()["write"]["acks"].get<int>();
    if (acks != (hits_dead ? 2 : 3)) ++wrong_acks;
    if (hits_dead) ++degraded_writes;
    verify(p, bytes, {dead});
    stored.push_back({p, bytes});
  }

  std::size_t unreadable = 0;
  for (const auto& s : stored) {
    auto r = env.client->get(s.path);
    if (r.status != 200 || r.body != s.bytes || r.header("X-Content-Hash") != content_hash(s.bytes).hex()) ++unreadable;
  }
  bool pass = failures == 0 && bad_placement == 0 && bad_replica == 0 && wrong_holders == 0 && wrong_acks == 0 &&
              unreadable == 0 && degraded_writes > 0;
  return {pass, fmt("%zu stored (%zu written with a node down, acks=2); failures %zu, placement %zu, replica %zu, "
                    "holder-count %zu, ack %zu, unreadable %zu",
                    stored.size(), degraded_writes, failures, bad_placement, bad_replica, wrong_holders, wrong_acks,
                    unreadable)};
}

// ring ------------------------------------------------------------------------

Outcome ring_properties() {
  std::mt19937_64 rng(8);
  std::size_t dispersion_bad = 0, load_bad = 0, literal_checked = 0, literal_bad = 0, capped_sets = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto devs = oracle::random_devices(rng);
    auto ring = build_ring(devs, 8, 3);
    auto audit = oracle::audit(ring);
    if (!audit.rows_complete || !audit.devices_distinct) ++dispersion_bad;
    if (distinct_zones(devs) >= 3 && !audit.zones_distinct) ++dispersion_bad;

    auto share = oracle::fair_share(ring);
    const double mean = static_cast<double>(ring.partition_count() * 3) / static_cast<double>(devs.size());
    bool capped = std::any_of(share.begin(), share.end(), [&](const auto& kv) { return std::abs(kv.second - mean) > 1e-9; });
    capped_sets += capped;
    for (auto [id, load] : device_loads(ring)) {
      if (std::abs(static_cast<double>(load) - share[id]) > 0.10 * share[id]) ++load_bad;
      if (!capped) {
        ++literal_checked;
        if (std::abs(static_cast<double>(load) - mean) > 0.10 * mean) ++literal_bad;
      }
    }
  }

  // add the fifth of five equal devices under several zone layouts
  std::size_t rebalance_bad = 0;
  std::string worst;
  double worst_ratio = 0;
  const std::vector<std::vector<int>> layouts = {{0, 1, 2, 3, 4}, {0, 1, 2, 0, 1}, {0, 1, 2, 3, 0}, {0, 0, 1, 1, 2},
                                                 {0, 1, 2, 0, 3}, {0, 1, 2, 2, 1}};
  for (const auto& zones : layouts) {
    std::vector<Device> devs;
    for (int i = 0; i < 5; ++i) devs.push_back({i, zones[i], "n" + std::to_string(i), 1.0});
    auto before = build_ring({devs.begin(), devs.begin() + 4}, 8, 3);
    auto after = rebalance(before, devs);
    const double slots = static_cast<double>(after.partition_count() * 3);
    // a lone device opening a third zone must take one replica of every
    // partition once dispersion applies
    const bool opens_third_zone = distinct_zones(before.devices) < 3 && distinct_zones(devs) >= 3;
    const double share = opens_third_zone ? static_cast<double>(after.partition_count()) : slots / 5.0;
    const double bound = share + 0.10 * slots;
    const double moved = static_cast<double>(moved_slots(before, after));
    if (moved > bound) ++rebalance_bad;
    std::cout << "  rebalance zones";
    for (int z : zones) std::cout << ' ' << z;
    std::cout << fmt(": moved %.0f of %.0f slots (bound %.1f%s)\n", moved, slots, bound,
                     opens_third_zone ? ", share forced to one replica per partition" : "");
    if (moved / share > worst_ratio) worst_ratio = moved / share;
    if (!oracle::audit(after).zones_distinct && distinct_zones(devs) >= 3 && distinct_zones(before.devices) >= 3)
      ++rebalance_bad;
  }
  bool pass = dispersion_bad == 0 && load_bad == 0 && literal_bad == 0 && rebalance_bad == 0;
  return {pass, fmt("200 device sets: dispersion violations %zu, load outside +-10%% of fair share %zu "
                    "(%zu sets zone-capped; %zu uncapped devices checked against the plain mean, %zu outside); "
                    "rebalance worst moved/share = %.3f, violations %zu",
                    dispersion_bad, load_bad, capped_sets, literal_checked, literal_bad, worst_ratio, rebalance_bad)};
}

// keyword extraction ----------------------------------------------------------

bool is_verbatim_trigram(const std::vector<std::string>& tokens, const std::string& phrase) {
  for (std::size_t i = 0; i + 2 < tokens.size(); ++i)
    if (tokens[i] + " " + tokens[i + 1] + " " + tokens[i + 2] == phrase) return true;
  return false;
}

Outcome keyword_oracle() {
  ReferenceEmbedder emb;
  std::mt19937_64 rng(1000);
  std::size_t docs = 0, mismatches = 0, not_verbatim = 0;
  auto check = [&](const std::string& text) {
    ++docs;
    auto got = extract_keyphrases(text, emb, 3);
    std::vector<std::string> texts;
    for (const auto& p : got) texts.push_back(p.phrase.text);
    if (texts != oracle::top_k(text, 3)) ++mismatches;
    auto tokens = tokenize(text);
    for (const auto& t : texts)
      if (!is_verbatim_trigram(tokens, t)) ++not_verbatim;
  };
  for (int i = 0; i < 1000; ++i) check(testgen::random_document(rng, 3 + rng() % 998));
  auto a = read_data("document_a.txt");
  auto b = read_data("document_b.txt");
  if (a.empty() || b.empty()) return {false, "appendix fixtures missing"};
  check(a);
  check(b);
  std::string shown;
  for (const auto* doc : {&a, &b}) {
    shown += " [";
    for (const auto& p : extract_keyphrases(*doc, emb, 3)) shown += p.phrase.text + "; ";
    shown += "]";
  }
  return {mismatches == 0 && not_verbatim == 0,
          fmt("%zu documents, %zu oracle mismatches, %zu non-verbatim phrases; A/B:", docs, mismatches, not_verbatim) +
              shown};
}

// refinery --------------------------------------------------------------------

bool has_forbidden_key(const nlohmann::json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() == "bbox" || it.key() == "class_id" || has_forbidden_key(it.value())) return true;
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (has_forbidden_key(v)) return true;
  }
  return false;
}

Outcome refinery_filter() {
  std::mt19937_64 rng(10000);
  std::vector<std::string> labels(kCocoClasses.begin(), kCocoClasses.end());
  for (const char* hostile : {"bbox", "class_id", "BBOX", "Class_ID", "x", "width", "coordinates"})
    labels.push_back(hostile);
  std::size_t leaks = 0, invalid = 0;
  auto when = *parse_iso8601("2024-01-01T00:00:00Z");
  for (int i = 0; i < 10000; ++i) {
    ObjectPath p("AUTH_test", "c", "img_" + std::to_string(i) + ".jpg");
    ObjectDescriptor desc{p, rng() % 100000, content_hash(std::to_string(i)), ContentType::image(ContentFormat::JPEG),
                          when};
    ImageExtraction ext;
    for (int k = static_cast<int>(rng() % 6); k > 0; --k) {
      Detection d;
      d.label = labels[rng() % labels.size()];
      d.confidence = static_cast<double>(rng() % 1001) / 1000.0;
      d.bbox = {static_cast<double>(rng() % 500), static_cast<double>(rng() % 500), 1.0 + rng() % 90,
                1.0 + rng() % 90};
      d.class_id = static_cast<std::int64_t>(rng() % 80);
      ext.detections.push_back(d);
    }
    auto doc = build_image_doc(desc, ext);
    if (has_forbidden_key(nlohmann::json::parse(serialize(doc)))) ++leaks;
    try {
      validate(doc);
    } catch (const Error&) {
      ++invalid;
    }
  }
  return {leaks == 0 && invalid == 0,
          fmt("10000 extractions, %zu serialized documents with bbox/class_id keys, %zu invalid", leaks, invalid)};
}

// pipeline overlap ------------------------------------------------------------

Outcome pipeline_overlap() {
  testenv::GatewaySettings s;
  s.detector = std::make_shared<testenv::SlowDetector>(std::chrono::milliseconds(300));
  s.write_delay = std::chrono::milliseconds(300);
  testenv::GatewayEnv env(s);
  const std::int64_t margin = 100;
  std::size_t over_margin = 0, over_sum = 0, failed = 0;
  std::int64_t worst = 0;
  for (int i = 0; i < 10; ++i) {
    auto r = env.client->put(ObjectPath("AUTH_test", "slow", std::to_string(i) + ".jpg"), testenv::jpeg_bytes(4096, i),
                             "", testenv::sidecar_for({{"dog", 0.9}}));
    if (r.status != 201) {
      ++failed;
      continue;
    }
    auto j = r.json();
    auto total = j["total_millis"].get<std::int64_t>();
    auto ext = j["extraction_millis"].get<std::int64_t>();
    auto up = j["upload_millis"].get<std::int64_t>();
    worst = std::max(worst, total);
    if (total >= 600 - margin) ++over_margin;
    if (total >= ext + up + 250) ++over_sum;
  }
  return {failed == 0 && over_margin == 0 && over_sum == 0,
          fmt("10 uploads with 300 ms detection and 300 ms writes: worst total %lld ms (bound %lld), "
              "%zu above 600-%lld, %zu above extraction+upload+250",
              static_cast<long long>(worst), static_cast<long long>(600 - margin), over_margin,
              static_cast<long long>(margin), over_sum)};
}

// index-store consistency -----------------------------------------------------

Outcome index_store_consistency() {
  testenv::GatewayEnv env;
  const auto deadline = Clock::now() + std::chrono::seconds(60);
  const std::vector<std::string> labels = {"dog", "cat", "person", "car", "kite", "boat", "bird", "horse"};
  std::atomic<std::size_t> uploads{0}, upload_errors{0}, searches{0}, hits{0}, dangling{0}, search_errors{0};
  std::atomic<bool> stop{false};
  std::mutex errors_mutex;
  std::vector<std::string> first_errors;
  auto note_error = [&](std::string what) {
    std::lock_guard lock(errors_mutex);
    if (first_errors.size() < 3) first_errors.push_back(std::move(what));
  };

  auto uploader = [&](unsigned id) {
    std::mt19937_64 rng(id);
    GatewayClient c(env.server->url(), env.client->token());
    while (Clock::now() < deadline) {
      ObjectPath p("AUTH_test", "live", "u" + std::to_string(id) + "_" + std::to_string(rng() % 300) + ".jpg");
      auto sidecar = testenv::sidecar_for({{labels[rng() % labels.size()].c_str(), 0.9}});
      const auto sent = Clock::now();
      auto waited = [&] {
        return fmt(" after %.0f ms", std::chrono::duration<double, std::milli>(Clock::now() - sent).count());
      };
      try {
        auto r = c.put(p, testenv::jpeg_bytes(256 + rng() % 4096, static_cast<unsigned>(rng())), "", sidecar);
        if (r.status == 201) {
          ++uploads;
        } else {
          ++upload_errors;
          note_error(std::to_string(r.status) + " " + r.body + waited());
        }
      } catch (const Error& e) {
        ++upload_errors;
        note_error(e.what() + waited());
      }
    }
  };
  auto searcher = [&](unsigned id) {
    std::mt19937_64 rng(1000 + id);
    GatewayClient c(env.server->url(), env.client->token());
    while (Clock::now() < deadline) {
      try {
        auto r = c.search(labels[rng() % labels.size()], {{"limit", "20"}});
        if (r.status != 200) {
          ++search_errors;
          note_error(std::to_string(r.status) + " " + r.body);
          continue;
        }
        ++searches;
        auto j = r.json();
        for (const auto& h : j["hits"]) {
          ++hits;
          if (c.get(ObjectPath::parse(h["url_path"].get<std::string>())).status != 200) ++dangling;
        }
      } catch (const Error& e) {
        ++search_errors;
        note_error(e.what());
      }
    }
  };
  // one node at a time flaps, so quorum holds and reads route around it
  auto flapper = [&] {
    std::mt19937_64 rng(5);
    while (!stop) {
      int id = static_cast<int>(rng() % 6);
      env.storage.node(id).set_down(true);
      std::this_thread::sleep_for(std::chrono::milliseconds(300));
      env.storage.node(id).set_down(false);
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
  };

  std::vector<std::thread> threads;
  for (unsigned i = 0; i < 16; ++i) threads.emplace_back(uploader, i);
  for (unsigned i = 0; i < 4; ++i) threads.emplace_back(searcher, i);
  std::thread flap(flapper);
  for (auto& t : threads) t.join();
  stop = true;
  flap.join();

  for (const auto& e : first_errors) std::cout << "  error: " << e << "\n";
  bool pass = dangling == 0 && search_errors == 0 && upload_errors == 0 && hits > 0 && uploads > 0;
  return {pass, fmt("60 s, 16 uploaders + 4 searchers: %zu uploads (%zu errors), %zu searches (%zu errors), "
                    "%zu hits checked, %zu dangling",
                    uploads.load(), upload_errors.load(), searches.load(), search_errors.load(), hits.load(),
                    dangling.load())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"search-oracle-equivalence", search_oracle_equivalence},
      {"query-time-scaling", query_time_scaling},
      {"replication-durability", replication_durability},
      {"ring-properties", ring_properties},
      {"keyword-extraction-oracle", keyword_oracle},
      {"refinery-filter", refinery_filter},
      {"pipeline-overlap", pipeline_overlap},
      {"index-store-consistency", index_store_consistency},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << fmt(" (%.1f s): ", secs) << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
