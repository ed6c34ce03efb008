#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cobs/digest.hpp"
#include "cobs/model.hpp"

using namespace cobs;

TEST(CanonicalPath, RendersVersionedUrl) {
  EXPECT_EQ(canonical_path("AUTH_test", "photos", "cat.jpg").render(), "/v1/AUTH_test/photos/cat.jpg");
  EXPECT_EQ(canonical_path("a", "b", "dir/x.png").render(), "/v1/a/b/dir/x.png");
}

TEST(CanonicalPath, RejectsEmptyAndSlashedComponents) {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error";
    return Errc::IoError;
  };
  EXPECT_EQ(code_of([] { canonical_path("", "b", "c"); }), Errc::EmptyComponent);
  EXPECT_EQ(code_of([] { canonical_path("a", "", "c"); }), Errc::EmptyComponent);
  EXPECT_EQ(code_of([] { canonical_path("a", "b", ""); }), Errc::EmptyComponent);
  EXPECT_EQ(code_of([] { canonical_path("a/x", "b", "c"); }), Errc::IllegalSlash);
  EXPECT_EQ(code_of([] { canonical_path("a", "b/y", "c"); }), Errc::IllegalSlash);
  EXPECT_EQ(code_of([] { ObjectPath::parse("/v2/a/b/c"); }), Errc::MalformedPath);
  EXPECT_EQ(code_of([] { ObjectPath::parse("/v1/a/b"); }), Errc::MalformedPath);
}

TEST(CanonicalPath, ParseRenderRoundTripsRandomTriples) {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ019_-.~ %";
  auto word = [&](bool allow_slash) {
    std::string s;
    for (int n = 1 + static_cast<int>(rng() % 8); n > 0; --n) {
      if (allow_slash && rng() % 5 == 0) s.push_back('/');
      s.push_back(alphabet[rng() % alphabet.size()]);
    }
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    ObjectPath p(word(false), word(false), word(true));
    EXPECT_EQ(ObjectPath::parse(p.render()), p);
  }
}

// Reference values from an independent MD5 implementation (Python hashlib),
// which also match the RFC 1321 test suite.
TEST(ContentHash, MatchesIndependentMd5) {
  EXPECT_EQ(content_hash(std::string_view("")).hex(), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(content_hash(std::string_view("abc")).hex(), "900150983cd24fb0d6963f7d28e17f72");
  EXPECT_EQ(content_hash(std::string_view("message digest")).hex(), "f96b697d7cb7938d525a2f31aaf161d0");
  EXPECT_EQ(content_hash(std::string_view("12345678901234567890123456789012345678901234567890123456789012345678901234567890")).hex(),
            "57edf4a22be3c955ac49da2e2107b67a");
  EXPECT_EQ(content_hash(std::string_view("/v1/AUTH_test/photos/cat.jpg")).hex(), "18d144a2651878f0ff8655d100841627");
}

TEST(ContentHash, DeterministicAndDistinctOnRandomBuffers) {
  std::mt19937_64 rng(42);
  std::vector<std::string> buffers(64, std::string(1024, '\0'));
  for (auto& b : buffers)
    for (auto& c : b) c = static_cast<char>(rng());
  std::set<std::string> seen;
  for (const auto& b : buffers) {
    auto h = content_hash(std::string_view(b));
    EXPECT_EQ(h, content_hash(std::string_view(b)));
    EXPECT_TRUE(seen.insert(h.hex()).second);
    EXPECT_EQ(Digest128::from_hex(h.hex()), h);
  }
}

TEST(Timestamps, Iso8601RoundTrip) {
  UtcSeconds t{std::chrono::seconds(1700000000)};
  EXPECT_EQ(to_iso8601(t), "2023-11-14T22:13:20Z");
  EXPECT_EQ(parse_iso8601("2023-11-14T22:13:20Z"), t);
  EXPECT_FALSE(parse_iso8601("2023-11-14 22:13:20").has_value());
}

TEST(ObjectDescriptor, DescribesBytes) {
  auto d = ObjectDescriptor::describe(canonical_path("a", "b", "c"), "hello", ContentType::document(ContentFormat::PlainText), utc_now());
  EXPECT_EQ(d.size_bytes, 5u);
  EXPECT_TRUE(d.matches("hello"));
  EXPECT_FALSE(d.matches("hellO"));
  EXPECT_EQ(parse_content_type(render_content_type(d.content_type)), d.content_type);
}
