#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cobs/classes.hpp"
#include "cobs/gateway_http.hpp"

namespace cobs::bench {

struct GenOptions {
  std::size_t images = 1000;
  std::size_t classes = 80;
  std::size_t min_bytes = 1024;
  std::size_t max_bytes = 4096;
  std::size_t max_labels = 3;
  std::uint64_t seed = 1;
};

/// Sidecar file that drives the reference detector for `image`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& image) {
  auto p = image;
  p.replace_extension(".labels.json");
  return p;
}

inline bool is_sidecar(const std::filesystem::path& p) { return p.filename().string().ends_with(".labels.json"); }

/// Writes `images` JPEG-magic files of random bytes, each with a sidecar of
/// 1..max_labels distinct labels drawn from the first `classes` class names.
inline void generate_corpus(const std::filesystem::path& dir, const GenOptions& opt) {
  if (opt.classes == 0 || opt.classes > kCocoClasses.size())
    throw Error(Errc::BadQuery, "classes must be in [1, " + std::to_string(kCocoClasses.size()) + "]");
  if (opt.min_bytes < 4 || opt.max_bytes < opt.min_bytes) throw Error(Errc::BadQuery, "bad payload size range");
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> size_dist(opt.min_bytes, opt.max_bytes);
  std::uniform_int_distribution<std::size_t> label_count(1, std::max<std::size_t>(1, opt.max_labels));
  std::uniform_int_distribution<std::size_t> class_dist(0, opt.classes - 1);
  std::uniform_real_distribution<double> conf(0.3, 1.0);
  for (std::size_t i = 0; i < opt.images; ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(6) << std::setfill('0') << i << ".jpg";
    Bytes bytes = "\xFF\xD8\xFF\xE0";
    const std::size_t n = size_dist(rng);
    while (bytes.size() < n) bytes.push_back(static_cast<char>(rng() & 0xFF));
    std::ofstream(dir / name.str(), std::ios::binary) << bytes;

    std::set<std::size_t> picked;
    const std::size_t want = std::min(label_count(rng), opt.classes);
    while (picked.size() < want) picked.insert(class_dist(rng));
    nlohmann::json dets = nlohmann::json::array();
    for (auto c : picked) {
      dets.push_back({{"label", std::string(kCocoClasses[c])},
                      {"confidence", std::round(conf(rng) * 1000) / 1000},
                      {"bbox", {static_cast<int>(rng() % 400), static_cast<int>(rng() % 400),
                                1 + static_cast<int>(rng() % 200), 1 + static_cast<int>(rng() % 200)}},
                      {"class_id", c}});
    }
    std::ofstream(sidecar_path(dir / name.str())) << nlohmann::json{{"detections", dets}}.dump();
  }
}

struct FileRecord {
  std::string file;
  int status = 0;
  std::string error;
  std::string content_type;
  bool extraction_failed = false;
  double extraction_ms = 0;
  double upload_ms = 0;
  double total_ms = 0;
};

struct IngestResult {
  std::vector<FileRecord> files;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t stored_not_extracted = 0;

  /// More than 1% of files failed, or there was nothing to ingest.
  bool unhealthy() const { return files.empty() || failed * 100 > files.size(); }
};

struct SweepSample {
  std::string keyword;
  double query_ms = 0;
  double request_ms = 0;
  std::size_t hits = 0;
};

struct SweepResult {
  std::vector<SweepSample> samples;
  std::size_t keyword_count = 0;
  double avg_query_ms = 0;
  double avg_request_ms = 0;

  std::size_t ordering_violations() const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(),
                                                  [](const SweepSample& s) { return s.query_ms > s.request_ms; }));
  }
};

struct BenchReport {
  std::size_t corpus_size = 0;
  double avg_detection_ms = 0;
  double avg_upload_ms = 0;
  double total_pipeline_ms = 0;
  double avg_query_ms = 0;
  double avg_request_ms = 0;
  std::size_t keyword_count = 0;
};

inline constexpr const char* kCsvHeader =
    "corpus_size,avg_detection_ms,avg_upload_ms,total_pipeline_ms,avg_query_ms,avg_request_ms,keyword_count";

inline std::string csv_row(const BenchReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.3f,%.3f,%.3f,%.4f,%.4f,%zu", r.corpus_size, r.avg_detection_ms,
                r.avg_upload_ms, r.total_pipeline_ms, r.avg_query_ms, r.avg_request_ms, r.keyword_count);
  return buf;
}

/// Uploadable files under `dir` (sidecars excluded), sorted by name.
inline std::vector<std::filesystem::path> corpus_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::IoError, dir.string() + " is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && !is_sidecar(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct IngestOptions {
  std::string container = "bench";
  std::size_t concurrency = 4;
  std::function<void(const FileRecord&)> on_file;
};

/// Uploads every file of `dir` into the client's account. Per-file errors
/// are recorded and the run continues.
inline IngestResult ingest(const std::filesystem::path& dir, const GatewayClient& prototype,
                           const IngestOptions& opt = {}) {
  if (prototype.account().empty()) throw Error(Errc::Unauthorized, "client is not logged in");
  auto files = corpus_files(dir);
  IngestResult result;
  result.files.resize(files.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto worker = [&] {
    GatewayClient client = prototype;
    for (std::size_t i; (i = next.fetch_add(1)) < files.size();) {
      FileRecord rec;
      rec.file = files[i].filename().string();
      try {
        auto bytes = detail::read_file(files[i]);
        if (!bytes) throw Error(Errc::IoError, "cannot read " + files[i].string());
        auto sidecar = detail::read_file(sidecar_path(files[i]));
        auto reply = client.put(ObjectPath(prototype.account(), opt.container, rec.file), *bytes, rec.file, sidecar);
        rec.status = reply.status;
        auto j = reply.json();
        if (reply.status == 201 || reply.status == 207) {
          rec.content_type = j["document"]["content_type"].get<std::string>();
          rec.extraction_failed = j["extraction_failed"].get<bool>();
          rec.extraction_ms = j["extraction_millis"].get<double>();
          rec.upload_ms = j["upload_millis"].get<double>();
          rec.total_ms = j["total_millis"].get<double>();
        } else {
          rec.error = j.is_object() && j.contains("error") ? j["error"].get<std::string>() : reply.body;
        }
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      result.files[i] = rec;
      if (opt.on_file) {
        std::lock_guard lock(report_mutex);
        opt.on_file(rec);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, opt.concurrency); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (const auto& f : result.files) {
    if (f.status == 201 || f.status == 207) {
      ++result.succeeded;
      if (f.content_type == "other" || f.extraction_failed) ++result.stored_not_extracted;
    } else {
      ++result.failed;
    }
  }
  return result;
}

inline constexpr std::size_t kSweepLimit = 10;  // Elasticsearch's default page size

namespace detail {

inline SweepSample search_once(GatewayClient& client, const std::string& keyword, std::size_t limit) {
  auto reply = client.search(keyword, {{"limit", std::to_string(limit)}});
  if (reply.status != 200) throw Error(Errc::BadQuery, "search '" + keyword + "' failed: " + reply.body);
  auto j = reply.json();
  return SweepSample{keyword, j.at("query_millis").get<double>(), j.at("request_millis").get<double>(),
                     j.at("hits").size()};
}

inline void average(SweepResult& r) {
  r.avg_query_ms = r.avg_request_ms = 0;
  for (const auto& s : r.samples) {
    r.avg_query_ms += s.query_ms;
    r.avg_request_ms += s.request_ms;
  }
  if (r.samples.empty()) return;
  r.avg_query_ms /= static_cast<double>(r.samples.size());
  r.avg_request_ms /= static_cast<double>(r.samples.size());
}

}  // namespace detail

/// Sweeps several gateways at once: each keyword goes to every gateway in
/// turn, so machine drift lands on all of them alike.
inline std::vector<SweepResult> interleaved_sweep(const std::vector<GatewayClient*>& clients,
                                                  const std::vector<std::string>& keywords, std::size_t repeats = 5,
                                                  std::size_t limit = kSweepLimit) {
  if (keywords.empty()) throw Error(Errc::EmptyInput, "keyword list is empty");
  if (repeats == 0) throw Error(Errc::BadQuery, "repeats must be positive");
  std::vector<SweepResult> out(clients.size());
  const std::size_t distinct = std::set<std::string>(keywords.begin(), keywords.end()).size();
  for (auto& r : out) r.keyword_count = distinct;
  for (std::size_t r = 0; r < repeats; ++r)
    for (const auto& k : keywords)
      for (std::size_t c = 0; c < clients.size(); ++c)
        out[c].samples.push_back(detail::search_once(*clients[c], k, limit));
  for (auto& r : out) detail::average(r);
  return out;
}

/// Runs every keyword `repeats` times, sequentially.
inline SweepResult query_sweep(GatewayClient& client, const std::vector<std::string>& keywords, std::size_t repeats = 5,
                               std::size_t limit = kSweepLimit) {
  return interleaved_sweep({&client}, keywords, repeats, limit).front();
}

inline std::vector<std::string> default_keywords() { return {kCocoClasses.begin(), kCocoClasses.end()}; }

/// One CSV row. total_pipeline_ms sums the per-file totals; the other
/// timings are means.
inline BenchReport make_report(const IngestResult& ingest, const SweepResult* sweep = nullptr) {
  BenchReport r;
  r.corpus_size = ingest.succeeded;
  std::size_t n = 0;
  for (const auto& f : ingest.files) {
    if (f.status != 201 && f.status != 207) continue;
    ++n;
    r.avg_detection_ms += f.extraction_ms;
    r.avg_upload_ms += f.upload_ms;
    r.total_pipeline_ms += f.total_ms;
  }
  if (n > 0) {
    r.avg_detection_ms /= static_cast<double>(n);
    r.avg_upload_ms /= static_cast<double>(n);
  }
  if (sweep) {
    r.avg_query_ms = sweep->avg_query_ms;
    r.avg_request_ms = sweep->avg_request_ms;
    r.keyword_count = sweep->keyword_count;
  }
  return r;
}

}  // namespace cobs::bench
