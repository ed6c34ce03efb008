#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "cobs/adapters_http.hpp"
#include "cobs/node_http.hpp"
#include "support/local_cluster.hpp"

using namespace cobs;
using testenv::TempDir;

namespace {

UtcSeconds fixed_time() { return *parse_iso8601("2024-05-01T12:00:00Z"); }

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::IoError;
}

struct Stub {
  std::shared_ptr<httplib::Server> server = std::make_shared<httplib::Server>();
  http::ServerThread runner{server};
  std::string url() const { return "http://127.0.0.1:" + std::to_string(runner.port()); }
};

// A port that was free a moment ago and has nothing listening on it now.
int unused_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace

TEST(HttpUtil, PercentEncoding) {
  EXPECT_EQ(http::encode_path("/v1/a b/c%/ü"), "/v1/a%20b/c%25/%C3%BC");
  EXPECT_EQ(http::encode_query("a/b c"), "a%2Fb%20c");
}

TEST(HttpUtil, Endpoints) {
  auto e = http::parse_endpoint("http://10.0.0.1:6001/detect");
  EXPECT_EQ(e.host, "10.0.0.1");
  EXPECT_EQ(e.port, 6001);
  EXPECT_EQ(http::parse_endpoint("localhost:80").port, 80);
  EXPECT_EQ(code_of([] { http::parse_endpoint("nohost"); }), Errc::IoError);
}

TEST(NodeHttp, RoundTripOverTheWire) {
  TempDir dir;
  NodeServer server(std::make_shared<NodeStore>(dir.path(), 8));
  server.start();
  HttpNode client(server.address());

  ObjectPath p("AUTH_test", "photos", "my cat.jpg");
  Bytes data("\xFF\xD8\xFF\x00\x01binary", 10);
  auto desc = ObjectDescriptor::describe(p, data, ContentType::image(ContentFormat::JPEG), fixed_time());
  client.put(p, data, desc);

  auto obj = client.get(p);
  ASSERT_TRUE(obj);
  EXPECT_EQ(obj->bytes, data);
  EXPECT_EQ(obj->descriptor, desc);
  EXPECT_EQ(client.head(p), desc);
  EXPECT_TRUE(server.store().get(p));

  EXPECT_TRUE(client.remove(p));
  EXPECT_FALSE(client.get(p));
  EXPECT_FALSE(client.head(p));
  EXPECT_FALSE(client.remove(p));
}

TEST(NodeHttp, PooledConnectionSurvivesServerRestart) {
  TempDir dir;
  auto store = std::make_shared<NodeStore>(dir.path(), 8);
  auto first = std::make_unique<NodeServer>(store);
  const int port = first->start();
  HttpNode client(first->address());
  ObjectPath p("AUTH_test", "c", "o.bin");
  EXPECT_FALSE(client.get(p));  // leaves a kept-alive connection in the pool

  first->stop();
  first.reset();
  NodeServer second(store);
  ASSERT_EQ(second.start("127.0.0.1", port), port);
  EXPECT_FALSE(client.get(p));
  EXPECT_FALSE(client.head(p));
}

TEST(NodeHttp, HashHeaderIsChecked) {
  TempDir dir;
  NodeServer server(std::make_shared<NodeStore>(dir.path(), 8));
  server.start();
  auto cli = http::make_client(http::parse_endpoint(server.address()));
  auto res = cli->Put("/node/v1/a/c/o", httplib::Headers{{"X-Content-Hash", content_hash("other").hex()}}, "body",
                      "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = cli->Put("/node/v1/a/c/o", "body", "application/octet-stream");
  EXPECT_EQ(res->status, 400);
  EXPECT_FALSE(server.store().head(ObjectPath("a", "c", "o")));
}

TEST(NodeHttp, DiskFullMapsBack) {
  TempDir dir;
  NodeServer server(std::make_shared<NodeStore>(dir.path(), 8, 3));
  server.start();
  HttpNode client(server.address());
  ObjectPath p("a", "c", "o");
  auto desc = ObjectDescriptor::describe(p, "toolong", ContentType::other(), fixed_time());
  EXPECT_EQ(code_of([&] { client.put(p, "toolong", desc); }), Errc::DiskFull);
}

TEST(NodeHttp, UnreachableNodeIsIoError) {
  HttpNode client("127.0.0.1:" + std::to_string(unused_port()));
  EXPECT_EQ(code_of([&] { client.get(ObjectPath("a", "c", "o")); }), Errc::IoError);
}

TEST(NodeHttp, ClusterOverHttpNodes) {
  TempDir dir;
  std::vector<std::unique_ptr<NodeServer>> servers;
  std::vector<Device> devices;
  for (int i = 0; i < 3; ++i) {
    servers.push_back(std::make_unique<NodeServer>(std::make_shared<NodeStore>(dir.path() / std::to_string(i), 6)));
    servers.back()->start();
    devices.push_back({i, i, servers.back()->address(), 1.0});
  }
  auto ring = std::make_shared<RingMap>(build_ring(devices, 6, 3));
  Cluster cluster(ring, http_nodes(*ring));
  ObjectPath p("a", "c", "o");
  auto desc = ObjectDescriptor::describe(p, "bytes", ContentType::other(), fixed_time());
  EXPECT_EQ(cluster.replicated_put(p, "bytes", desc).acks, 3);
  servers[0]->stop();
  EXPECT_EQ(cluster.replicated_get(p).bytes, "bytes");
  EXPECT_EQ(cluster.replicated_put(p, "bytes", desc).acks, 2);
}

TEST(HttpDetector, ParsesDetections) {
  Stub stub;
  std::string seen;
  stub.server->Post("/detect", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.body;
    res.set_content(R"({"detections":[{"label":"Dog","confidence":0.9,"bbox":[1,2,3,4],"class_id":16}]})",
                    "application/json");
  });
  stub.runner.start("127.0.0.1", 0);
  HttpDetector det(stub.url());
  Bytes image = "\xFF\xD8\xFFimage";
  auto out = detect_on_copy(image, det, {});
  EXPECT_EQ(seen, image);
  ASSERT_EQ(out.detections.size(), 1u);
  EXPECT_EQ(out.detections[0].label, "dog");
  EXPECT_EQ(out.detections[0].class_id, 16);
}

TEST(HttpDetector, FailuresAreTyped) {
  Stub stub;
  stub.server->Post("/detect", [](const httplib::Request& req, httplib::Response& res) {
    if (req.body == "crash")
      res.status = 500;
    else
      res.set_content("{\"detections\": 3}", "application/json");
  });
  stub.runner.start("127.0.0.1", 0);
  HttpDetector det(stub.url());
  Bytes crash = "crash", other = "other";
  EXPECT_EQ(code_of([&] { det.detect(crash, {}); }), Errc::DetectorUnavailable);
  EXPECT_EQ(code_of([&] { det.detect(other, {}); }), Errc::DetectorProtocolError);

  HttpDetector down("127.0.0.1:" + std::to_string(unused_port()));
  EXPECT_EQ(code_of([&] { down.detect(other, {}); }), Errc::DetectorUnavailable);
}

TEST(HttpEmbedder, MatchesReferenceWhenBackedByIt) {
  Stub stub;
  stub.server->Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    auto texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
    ReferenceEmbedder ref;
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& v : ref.embed(texts)) vectors.push_back(v.components);
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  stub.runner.start("127.0.0.1", 0);
  HttpEmbedder remote(stub.url(), 256);
  ReferenceEmbedder local;
  const std::string text = "the quick brown fox jumps over the lazy dog while the quick cat sleeps";
  auto a = extract_keyphrases(text, remote);
  auto b = extract_keyphrases(text, local);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].phrase.text, b[i].phrase.text);
}

TEST(HttpEmbedder, WrongDimensionIsRejected) {
  Stub stub;
  stub.server->Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1,2]]})", "application/json");
  });
  stub.runner.start("127.0.0.1", 0);
  HttpEmbedder remote(stub.url(), 256);
  EXPECT_EQ(code_of([&] { remote.embed({"x"}); }), Errc::DimensionMismatch);
  HttpEmbedder down("127.0.0.1:" + std::to_string(unused_port()), 256);
  EXPECT_EQ(code_of([&] { down.embed({"x"}); }), Errc::EmbedderUnavailable);
}
