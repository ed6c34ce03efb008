// cobs: operator CLI for nodes, gateway, ring files, ingest, search and bench.

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cobs/adapters_http.hpp"
#include "cobs/bench.hpp"
#include "cobs/gateway_http.hpp"
#include "cobs/node_http.hpp"
#include "cobs/ring.hpp"

using namespace cobs;

namespace {

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

// Must run before any thread starts so every thread inherits the mask.
void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

nlohmann::json read_json(const std::string& file) {
  auto text = detail::read_file(file);
  if (!text) throw Error(Errc::IoError, "cannot read " + file);
  auto j = nlohmann::json::parse(*text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::IoError, file + " is not JSON");
  return j;
}

/// Devices file: either a bare array or {"devices": [...]}.
std::vector<Device> read_devices(const std::string& file) {
  auto j = read_json(file);
  return devices_from_json(j.is_array() ? j : j.at("devices"));
}

/// "id=host:port" overrides for ring device addresses.
void apply_node_overrides(RingMap& ring, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidRing, "--nodes entries are id=host:port, got " + o);
    int id = std::stoi(o.substr(0, eq));
    bool found = false;
    for (auto& d : ring.devices)
      if (d.id == id) d.node_address = o.substr(eq + 1), found = true;
    if (!found) throw Error(Errc::InvalidRing, "no device " + std::to_string(id) + " in ring");
  }
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::trunc);
  if (!file) throw Error(Errc::IoError, "cannot write " + path);
  return file;
}

struct Login {
  std::string gateway = "127.0.0.1:8080";
  std::string user;
  std::string key;

  void add(CLI::App* cmd) {
    cmd->add_option("--gateway", gateway, "gateway host:port")->capture_default_str();
    cmd->add_option("--user", user, "user name")->required();
    cmd->add_option("--key", key, "user key")->required();
  }

  GatewayClient connect() const {
    GatewayClient c(gateway);
    c.login(user, key);
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-aware object storage"};
  app.require_subcommand(1);

  // serve-node
  auto* node_cmd = app.add_subcommand("serve-node", "Run a storage node");
  std::string node_root, node_listen = "127.0.0.1:6000";
  int node_part_power = 10;
  std::optional<std::uint64_t> node_capacity;
  node_cmd->add_option("--root", node_root, "data directory")->required();
  node_cmd->add_option("--part-power", node_part_power, "ring part power")->capture_default_str();
  node_cmd->add_option("--listen", node_listen, "host:port")->capture_default_str();
  node_cmd->add_option("--capacity", node_capacity, "capacity in bytes");

  // serve-gateway
  auto* gw_cmd = app.add_subcommand("serve-gateway", "Run the gateway");
  std::string gw_ring, gw_listen = "127.0.0.1:8080", gw_detector = "sidecar", gw_embedder = "reference", gw_users,
                       gw_index;
  std::vector<std::string> gw_nodes;
  std::size_t gw_dim = 256, gw_threads = 32, gw_k = 3;
  double gw_min_conf = 0.25;
  gw_cmd->add_option("--ring", gw_ring, "ring file")->required();
  gw_cmd->add_option("--nodes", gw_nodes, "device address overrides, id=host:port")->delimiter(',');
  gw_cmd->add_option("--listen", gw_listen, "host:port")->capture_default_str();
  gw_cmd->add_option("--detector", gw_detector, "detector URL or 'sidecar'")->capture_default_str();
  gw_cmd->add_option("--embedder", gw_embedder, "embedder URL or 'reference'")->capture_default_str();
  gw_cmd->add_option("--embed-dim", gw_dim, "embedding dimension")->capture_default_str();
  gw_cmd->add_option("--users", gw_users, "users file")->required();
  gw_cmd->add_option("--index", gw_index, "index snapshot file (in-memory if omitted)");
  gw_cmd->add_option("--threads", gw_threads, "worker threads")->capture_default_str();
  gw_cmd->add_option("--keyphrases", gw_k, "keyphrases per document")->capture_default_str();
  gw_cmd->add_option("--min-confidence", gw_min_conf, "detection threshold")->capture_default_str();

  // ring
  auto* ring_cmd = app.add_subcommand("ring", "Build or rebalance a ring file");
  ring_cmd->require_subcommand(1);
  auto* ring_build = ring_cmd->add_subcommand("build", "Build a new ring");
  auto* ring_rebalance = ring_cmd->add_subcommand("rebalance", "Rebalance onto a new device set");
  std::string ring_devices, ring_out, ring_in, ring_salt;
  int ring_part_power = 10, ring_replicas = 3;
  bool ring_degraded = false;
  ring_build->add_option("--devices", ring_devices, "devices JSON file")->required();
  ring_build->add_option("--part-power", ring_part_power, "log2 of partition count")->capture_default_str();
  ring_build->add_option("--replicas", ring_replicas, "replica count")->capture_default_str();
  ring_build->add_option("--salt", ring_salt, "hash salt");
  ring_build->add_flag("--allow-degraded", ring_degraded, "allow fewer devices or zones than replicas");
  ring_build->add_option("--out", ring_out, "output ring file")->required();
  ring_rebalance->add_option("--ring", ring_in, "existing ring file")->required();
  ring_rebalance->add_option("--devices", ring_devices, "new devices JSON file")->required();
  ring_rebalance->add_flag("--allow-degraded", ring_degraded, "allow fewer devices or zones than replicas");
  ring_rebalance->add_option("--out", ring_out, "output ring file")->required();

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Upload a directory through the gateway");
  Login ingest_login;
  ingest_login.add(ingest_cmd);
  std::string ingest_dir, ingest_container = "bench", ingest_out;
  std::size_t ingest_conc = 4;
  ingest_cmd->add_option("--dir", ingest_dir, "corpus directory")->required();
  ingest_cmd->add_option("--container", ingest_container, "target container")->capture_default_str();
  ingest_cmd->add_option("--concurrency", ingest_conc, "parallel uploads")->capture_default_str();
  ingest_cmd->add_option("--out", ingest_out, "CSV output (stdout if omitted)");

  // search
  auto* search_cmd = app.add_subcommand("search", "Query the index");
  Login search_login;
  search_login.add(search_cmd);
  std::string search_q, search_mode = "and", search_type, search_container;
  std::size_t search_limit = 50;
  search_cmd->add_option("q", search_q, "query text")->required();
  search_cmd->add_option("--mode", search_mode, "and|or")->capture_default_str();
  search_cmd->add_option("--limit", search_limit, "maximum hits")->capture_default_str();
  search_cmd->add_option("--type", search_type, "image|document|other");
  search_cmd->add_option("--container", search_container, "container filter");

  // suggest
  auto* suggest_cmd = app.add_subcommand("suggest", "Complete a prefix");
  Login suggest_login;
  suggest_login.add(suggest_cmd);
  std::string suggest_prefix;
  std::size_t suggest_n = 5;
  suggest_cmd->add_option("prefix", suggest_prefix, "term prefix")->required();
  suggest_cmd->add_option("-n", suggest_n, "number of suggestions")->capture_default_str();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Generate corpora and run the timing benchmark");
  bench_cmd->require_subcommand(1);
  auto* gen_cmd = bench_cmd->add_subcommand("gen", "Write a synthetic image corpus");
  bench::GenOptions gen;
  std::string gen_out;
  gen_cmd->add_option("--images", gen.images, "number of images")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "distinct labels")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  auto* run_cmd = bench_cmd->add_subcommand("run", "Ingest a corpus and sweep the keywords");
  Login run_login;
  run_login.add(run_cmd);
  std::string run_dir, run_container = "bench", run_out;
  std::size_t run_conc = 4, run_repeats = 5, run_limit = bench::kSweepLimit;
  bool run_skip_ingest = false, run_header = true;
  run_cmd->add_option("--dir", run_dir, "corpus directory");
  run_cmd->add_option("--container", run_container, "target container")->capture_default_str();
  run_cmd->add_option("--concurrency", run_conc, "parallel uploads")->capture_default_str();
  run_cmd->add_option("--repeats", run_repeats, "sweep repeats per keyword")->capture_default_str();
  run_cmd->add_option("--limit", run_limit, "hits per query")->capture_default_str();
  run_cmd->add_flag("--skip-ingest", run_skip_ingest, "only sweep");
  run_cmd->add_flag("--header,!--no-header", run_header, "print the CSV header")->capture_default_str();
  run_cmd->add_option("--out", run_out, "CSV output (stdout if omitted)");

  // repair
  auto* repair_cmd = app.add_subcommand("repair", "Re-replicate objects from a verified copy");
  std::string repair_ring;
  std::vector<std::string> repair_paths, repair_nodes;
  repair_cmd->add_option("--ring", repair_ring, "ring file")->required();
  repair_cmd->add_option("--nodes", repair_nodes, "device address overrides, id=host:port")->delimiter(',');
  repair_cmd->add_option("paths", repair_paths, "object paths /v1/a/c/o")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*node_cmd) {
      block_signals();
      auto ep = http::parse_endpoint(node_listen);
      NodeServer server(std::make_shared<NodeStore>(node_root, node_part_power, node_capacity));
      int port = server.start(ep.host, ep.port);
      std::cerr << "node serving " << node_root << " on " << ep.host << ":" << port << "\n";
      wait_for_signal();
      return 0;
    }

    if (*gw_cmd) {
      block_signals();
      auto ring = load_ring(gw_ring);
      apply_node_overrides(ring, gw_nodes);
      auto ring_ptr = std::make_shared<const RingMap>(ring);
      auto cluster = std::make_shared<Cluster>(ring_ptr, http_nodes(ring));
      auto index = gw_index.empty() ? std::make_shared<SearchIndex>() : std::make_shared<SearchIndex>(gw_index);
      std::shared_ptr<DetectorAdapter> detector;
      if (gw_detector == "sidecar") detector = std::make_shared<SidecarDetector>();
      else detector = std::make_shared<HttpDetector>(gw_detector);
      std::shared_ptr<Embedder> embedder;
      if (gw_embedder == "reference") embedder = std::make_shared<ReferenceEmbedder>(gw_dim);
      else embedder = std::make_shared<HttpEmbedder>(gw_embedder, gw_dim);
      GatewayOptions opts;
      opts.keyphrase_count = gw_k;
      opts.detect.min_confidence = gw_min_conf;
      auto gateway = std::make_shared<Gateway>(cluster, index, detector, embedder, load_users(gw_users), opts);
      GatewayServer server(gateway, gw_threads);
      auto ep = http::parse_endpoint(gw_listen);
      int port = server.start(ep.host, ep.port);
      std::cerr << "gateway on " << ep.host << ":" << port << " with " << ring.devices.size() << " devices, "
                << index->size() << " indexed documents\n";
      wait_for_signal();
      return 0;
    }

    if (*ring_build) {
      auto ring = build_ring(read_devices(ring_devices), ring_part_power, ring_replicas,
                             RingOptions{ring_degraded, ring_salt});
      save_ring(ring, ring_out);
      for (const auto& [id, load] : device_loads(ring)) std::cout << "device " << id << ": " << load << " slots\n";
      return 0;
    }

    if (*ring_rebalance) {
      auto old = load_ring(ring_in);
      auto next = rebalance(old, read_devices(ring_devices), ring_degraded);
      save_ring(next, ring_out);
      std::cout << "moved " << moved_slots(old, next) << " of " << next.partition_count() * next.replica_count
                << " slots\n";
      return 0;
    }

    if (*ingest_cmd) {
      auto client = ingest_login.connect();
      bench::IngestOptions opt{ingest_container, ingest_conc, [](const bench::FileRecord& f) {
                                 if (!f.error.empty()) std::cerr << f.file << ": " << f.status << " " << f.error << "\n";
                               }};
      auto result = bench::ingest(ingest_dir, client, opt);
      std::ofstream file;
      auto& out = output(ingest_out, file);
      out << bench::kCsvHeader << "\n" << bench::csv_row(bench::make_report(result)) << "\n";
      std::cerr << result.succeeded << " uploaded, " << result.failed << " failed, " << result.stored_not_extracted
                << " stored without extraction\n";
      return result.unhealthy() ? 1 : 0;
    }

    if (*search_cmd) {
      auto client = search_login.connect();
      std::vector<std::pair<std::string, std::string>> params{{"mode", search_mode},
                                                              {"limit", std::to_string(search_limit)}};
      if (!search_type.empty()) params.emplace_back("type", search_type);
      if (!search_container.empty()) params.emplace_back("container", search_container);
      auto reply = client.search(search_q, params);
      std::cout << reply.json().dump(2) << "\n";
      return reply.status == 200 ? 0 : 1;
    }

    if (*suggest_cmd) {
      auto client = suggest_login.connect();
      auto reply = client.suggest(suggest_prefix, suggest_n);
      if (reply.status != 200) {
        std::cerr << reply.body << "\n";
        return 1;
      }
      auto j = reply.json();
      for (const auto& t : j.at("suggestions")) std::cout << t.get<std::string>() << "\n";
      return 0;
    }

    if (*gen_cmd) {
      bench::generate_corpus(gen_out, gen);
      std::cerr << "wrote " << gen.images << " images to " << gen_out << "\n";
      return 0;
    }

    if (*run_cmd) {
      auto client = run_login.connect();
      bench::IngestResult ingested;
      if (!run_skip_ingest) {
        if (run_dir.empty()) throw Error(Errc::BadQuery, "--dir is required unless --skip-ingest is given");
        bench::IngestOptions opt{run_container, run_conc, [](const bench::FileRecord& f) {
                                   if (!f.error.empty()) std::cerr << f.file << ": " << f.error << "\n";
                                 }};
        ingested = bench::ingest(run_dir, client, opt);
      }
      auto sweep = bench::query_sweep(client, bench::default_keywords(), run_repeats, run_limit);
      auto report = bench::make_report(ingested, &sweep);
      std::ofstream file;
      auto& out = output(run_out, file);
      if (run_header) out << bench::kCsvHeader << "\n";
      out << bench::csv_row(report) << "\n";
      if (sweep.ordering_violations() > 0)
        std::cerr << sweep.ordering_violations() << " samples with query time above request time\n";
      return !run_skip_ingest && ingested.unhealthy() ? 1 : 0;
    }

    if (*repair_cmd) {
      auto ring = load_ring(repair_ring);
      apply_node_overrides(ring, repair_nodes);
      Cluster cluster(std::make_shared<const RingMap>(ring), http_nodes(ring));
      int status = 0;
      for (const auto& p : repair_paths) {
        try {
          auto report = cluster.repair(ObjectPath::parse(p));
          std::cout << p << ": " << report.healthy.size() << " healthy, " << report.repaired.size() << " repaired, "
                    << report.unreachable.size() << " unreachable\n";
          if (!report.unreachable.empty()) status = 1;
        } catch (const Error& e) {
          std::cout << p << ": " << e.what() << "\n";
          status = 1;
        }
      }
      return status;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
