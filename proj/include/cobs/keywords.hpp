#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cobs/error.hpp"

namespace cobs {

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

/// Decodes one code point at `i`, advancing it. Invalid sequences yield
/// U+FFFD and consume a single byte.
inline std::uint32_t next_code_point(std::string_view s, std::size_t& i) {
  constexpr std::uint32_t kReplacement = 0xFFFD;
  auto c = static_cast<std::uint8_t>(s[i]);
  if (c < 0x80) { ++i; return c; }
  int extra;
  std::uint32_t cp;
  if ((c & 0xE0) == 0xC0) { extra = 1; cp = c & 0x1F; }
  else if ((c & 0xF0) == 0xE0) { extra = 2; cp = c & 0x0F; }
  else if ((c & 0xF8) == 0xF0) { extra = 3; cp = c & 0x07; }
  else { ++i; return kReplacement; }
  if (i + extra >= s.size()) { ++i; return kReplacement; }
  for (int k = 1; k <= extra; ++k) {
    auto cc = static_cast<std::uint8_t>(s[i + k]);
    if ((cc & 0xC0) != 0x80) { ++i; return kReplacement; }
    cp = (cp << 6) | (cc & 0x3F);
  }
  static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
  if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) { ++i; return kReplacement; }
  i += extra + 1;
  return cp;
}

/// Word characters: ASCII alphanumerics plus non-ASCII code points outside
/// the common punctuation, symbol, space and emoji blocks.
inline bool is_word_char(std::uint32_t cp) {
  if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp == 0xFFFD) return false;
  if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x20A0 && cp <= 0x20CF) return false;  // currency
  if (cp >= 0x2190 && cp <= 0x2BFF) return false;  // arrows, math, box drawing, misc symbols
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
  return true;
}

inline std::uint32_t to_lower(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0x80) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if ((cp >= 0x100 && cp <= 0x137) || (cp >= 0x14A && cp <= 0x177)) return cp | 1u;
  if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) return (cp & 1u) ? cp + 1 : cp;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

}  // namespace detail

/// Splits on runs of non-word characters and lowercases. Shared by keyword
/// extraction and the search analyzer.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    std::uint32_t cp = detail::next_code_point(text, i);
    if (detail::is_word_char(cp)) {
      detail::append_utf8(current, detail::to_lower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct CandidatePhrase {
  std::vector<std::string> tokens;  // always three
  std::string text;
  std::size_t position = 0;
  friend bool operator==(const CandidatePhrase&, const CandidatePhrase&) = default;
};

struct ScoredPhrase {
  CandidatePhrase phrase;
  double score = 0.0;
};

/// Every consecutive trigram in order; a repeated trigram keeps its
/// earliest position only.
inline std::vector<CandidatePhrase> candidates(const std::vector<std::string>& tokens) {
  std::vector<CandidatePhrase> out;
  if (tokens.size() < 3) return out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
    std::string text = tokens[i] + ' ' + tokens[i + 1] + ' ' + tokens[i + 2];
    if (!seen.insert(text).second) continue;
    out.push_back(CandidatePhrase{{tokens[i], tokens[i + 1], tokens[i + 2]}, std::move(text), i});
  }
  return out;
}

struct EmbeddingVector {
  std::vector<double> components;

  std::size_t dimension() const noexcept { return components.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) throw Error(Errc::DimensionMismatch, "cosine of unequal dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    dot += a.components[i] * b.components[i];
    na += a.components[i] * a.components[i];
    nb += b.components[i] * b.components[i];
  }
  if (na == 0 || nb == 0) throw Error(Errc::ZeroVector, "cosine of an all-zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Text vectoriser. Implementations must return one vector per input, each
/// of `dimension()` components.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

inline constexpr std::uint64_t kReferenceEmbedSeed = 0x5eedULL;

/// Seeded FNV-1a, 64-bit.
inline std::uint64_t seeded_fnv1a(std::string_view s, std::uint64_t seed = kReferenceEmbedSeed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hashed bag-of-words: bucket counts of `seeded_fnv1a(token) % dimension`.
inline EmbeddingVector reference_embed(const std::vector<std::string>& tokens, std::size_t dimension,
                                       std::uint64_t seed = kReferenceEmbedSeed) {
  if (tokens.empty()) throw Error(Errc::EmptyInput, "cannot embed an empty token list");
  if (dimension == 0) throw Error(Errc::DimensionMismatch, "dimension must be positive");
  EmbeddingVector v{std::vector<double>(dimension, 0.0)};
  for (const auto& t : tokens) v.components[seeded_fnv1a(t, seed) % dimension] += 1.0;
  return v;
}

class ReferenceEmbedder final : public Embedder {
 public:
  explicit ReferenceEmbedder(std::size_t dimension = 256, std::uint64_t seed = kReferenceEmbedSeed)
      : dimension_(dimension), seed_(seed) {}

  std::size_t dimension() const override { return dimension_; }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(reference_embed(tokenize(t), dimension_, seed_));
    return out;
  }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Ranking order: higher score, then earlier position, then text.
inline bool phrase_ranks_before(const ScoredPhrase& a, const ScoredPhrase& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.phrase.position != b.phrase.position) return a.phrase.position < b.phrase.position;
  return a.phrase.text < b.phrase.text;
}

/// Top-k trigram keyphrases by cosine similarity between each candidate's
/// embedding and the embedding of the whole document.
inline std::vector<ScoredPhrase> extract_keyphrases(std::string_view text, Embedder& embedder, std::size_t k = 3) {
  if (k == 0) throw Error(Errc::EmptyInput, "k must be positive");
  auto tokens = tokenize(text);
  if (tokens.empty()) throw Error(Errc::EmptyInput, "document has no tokens");
  auto cands = candidates(tokens);
  if (cands.empty()) return {};

  std::vector<std::string> batch;
  batch.reserve(cands.size() + 1);
  batch.emplace_back(text);
  for (const auto& c : cands) batch.push_back(c.text);
  auto vectors = embedder.embed(batch);
  if (vectors.size() != batch.size())
    throw Error(Errc::DimensionMismatch, "embedder returned the wrong number of vectors");
  for (const auto& v : vectors)
    if (v.dimension() != embedder.dimension()) throw Error(Errc::DimensionMismatch, "embedder dimension drift");

  std::vector<ScoredPhrase> scored;
  scored.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i)
    scored.push_back(ScoredPhrase{std::move(cands[i]), cosine(vectors[i + 1], vectors[0])});

  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    phrase_ranks_before);
  scored.resize(n);
  return scored;
}

}  // namespace cobs
