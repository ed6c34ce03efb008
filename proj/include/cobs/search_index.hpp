#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cobs/error.hpp"
#include "cobs/keywords.hpp"
#include "cobs/refinery.hpp"
#include "cobs/trie.hpp"

namespace cobs {

using DocId = std::uint64_t;

struct Posting {
  std::string term;
  std::vector<DocId> doc_ids;  // strictly increasing
};

struct SearchFilters {
  std::optional<ContentKind> content_type;
  std::optional<std::string> account;
  std::optional<std::string> container;
  std::optional<std::uint64_t> min_size;
  std::optional<std::uint64_t> max_size;
  std::optional<UtcSeconds> since;
  std::optional<UtcSeconds> until;

  bool matches(const IndexDocument& d) const {
    if (content_type && d.content_type != *content_type) return false;
    if (account && d.account != *account) return false;
    if (container && d.container != *container) return false;
    if (min_size && d.size_bytes < *min_size) return false;
    if (max_size && d.size_bytes > *max_size) return false;
    if (since && d.uploaded_at < *since) return false;
    if (until && d.uploaded_at > *until) return false;
    return true;
  }

  bool well_ordered() const {
    return !(min_size && max_size && *min_size > *max_size) && !(since && until && *since > *until);
  }
};

enum class QueryMode { And, Or };

struct Query {
  std::vector<std::string> terms;
  QueryMode mode = QueryMode::And;
  SearchFilters filters;
  std::size_t limit = 50;

  /// Terms are produced by the index analyzer, so free text is accepted.
  static Query from_text(std::string_view text, QueryMode mode = QueryMode::And) {
    Query q;
    q.terms = tokenize(text);
    q.mode = mode;
    return q;
  }
};

/// `document` is shared with the index; indexed documents are immutable.
struct SearchHit {
  std::string url_path;
  std::shared_ptr<const IndexDocument> document;
  double score = 0;
};

struct QueryResponse {
  std::vector<SearchHit> hits;
  double query_millis = 0;
  std::optional<double> request_millis;
};

/// Terms a document is findable by: analyzed contents plus object name.
inline std::vector<std::string> analyze(const IndexDocument& d) {
  std::set<std::string> terms;
  for (const auto& c : d.contents)
    for (auto& t : tokenize(c)) terms.insert(std::move(t));
  for (auto& t : tokenize(d.object_name)) terms.insert(std::move(t));
  return {terms.begin(), terms.end()};
}

/// In-memory inverted index with a completion trie and an optional
/// JSON-lines snapshot replayed on open. Readers run concurrently; writers
/// are serialized and each upsert is atomic with respect to readers.
class SearchIndex {
 public:
  SearchIndex() = default;

  explicit SearchIndex(std::filesystem::path snapshot) : snapshot_path_(std::move(snapshot)) {
    replay();
    snapshot_.open(*snapshot_path_, std::ios::app);
    if (!snapshot_) throw Error(Errc::IoError, "cannot open snapshot " + snapshot_path_->string());
  }

  SearchIndex(const SearchIndex&) = delete;
  SearchIndex& operator=(const SearchIndex&) = delete;

  DocId index_doc(const IndexDocument& doc) {
    validate(doc);
    std::unique_lock lock(mutex_);
    DocId id = upsert_locked(doc);
    append_snapshot(serialize(doc));
    return id;
  }

  bool delete_doc(const std::string& url_path) {
    std::unique_lock lock(mutex_);
    if (!erase_locked(url_path)) return false;
    append_snapshot(nlohmann::json{{"deleted", url_path}}.dump());
    return true;
  }

  QueryResponse search(const Query& q) const {
    if (q.terms.empty()) throw Error(Errc::BadQuery, "query has no terms");
    if (q.limit == 0) throw Error(Errc::BadQuery, "limit must be positive");
    if (!q.filters.well_ordered()) throw Error(Errc::BadQuery, "filter range is inverted");

    std::shared_lock lock(mutex_);
    auto start = std::chrono::steady_clock::now();
    QueryResponse resp;
    std::vector<std::string> terms(q.terms);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    if (q.mode == QueryMode::And || terms.size() == 1)
      search_all_terms(terms, q, resp);
    else
      search_any_term(terms, q, resp);

    resp.query_millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return resp;
  }

  /// Up to `n` indexed terms beginning with `prefix`, by document frequency.
  /// With `account` set only that account's documents contribute.
  std::vector<std::string> suggest(std::string_view prefix, std::size_t n,
                                   const std::optional<std::string>& account = std::nullopt) const {
    std::string key;
    std::size_t i = 0;
    while (i < prefix.size()) detail::append_utf8(key, detail::to_lower(detail::next_code_point(prefix, i)));
    std::vector<std::string> out;
    if (key.empty()) return out;
    std::shared_lock lock(mutex_);
    const CompletionTrie* trie = &trie_;
    if (account) {
      auto it = account_tries_.find(*account);
      if (it == account_tries_.end()) return out;
      trie = &it->second;
    }
    for (auto& [term, freq] : trie->complete(key, n)) out.push_back(std::move(term));
    return out;
  }

  std::optional<IndexDocument> get(const std::string& url_path) const {
    std::shared_lock lock(mutex_);
    auto it = by_path_.find(url_path);
    if (it == by_path_.end()) return std::nullopt;
    return *docs_.at(it->second).doc;
  }

  Posting posting(const std::string& term) const {
    std::shared_lock lock(mutex_);
    Posting p{term, {}};
    if (auto it = postings_.find(term); it != postings_.end()) {
      for (const auto& ref : it->second) p.doc_ids.push_back(ref.id);
      std::sort(p.doc_ids.begin(), p.doc_ids.end());
    }
    return p;
  }

  std::vector<IndexDocument> documents() const {
    std::shared_lock lock(mutex_);
    std::vector<IndexDocument> out;
    out.reserve(docs_.size());
    for (const auto& [id, e] : docs_) out.push_back(*e.doc);
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return docs_.size();
  }

  /// Rewrites the snapshot with exactly one line per live document.
  void compact() {
    if (!snapshot_path_) return;
    std::unique_lock lock(mutex_);
    auto tmp = *snapshot_path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& [id, e] : docs_) out << serialize(*e.doc) << '\n';
      out.flush();
      if (!out) throw Error(Errc::IoError, "snapshot compaction failed");
    }
    snapshot_.close();
    std::filesystem::rename(tmp, *snapshot_path_);
    snapshot_.open(*snapshot_path_, std::ios::app);
  }

 private:
  struct Entry {
    DocId id;
    std::shared_ptr<const IndexDocument> doc;
    std::vector<std::string> terms;
  };
  struct PostingRef {
    std::string path;
    std::shared_ptr<const IndexDocument> doc;
    DocId id;
  };
  // Flat posting lists sorted by url_path, so ties (equal score) come out
  // in path order and a limited scan can stop early.
  using PostingList = std::vector<PostingRef>;

  static PostingList::const_iterator find_path(const PostingList& list, const std::string& path) {
    auto it = std::lower_bound(list.begin(), list.end(), path,
                               [](const PostingRef& r, const std::string& p) { return r.path < p; });
    return it != list.end() && it->path == path ? it : list.end();
  }

  void replay() {
    std::ifstream in(*snapshot_path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::InvalidDocument, "snapshot line " + std::to_string(lineno));
      if (j.contains("deleted") && j.size() == 1) {
        erase_locked(j["deleted"].get<std::string>());
      } else {
        upsert_locked(index_document_from_json(j));
      }
    }
  }

  void append_snapshot(const std::string& line) {
    if (!snapshot_.is_open()) return;
    snapshot_ << line << '\n';
    snapshot_.flush();
    if (!snapshot_) throw Error(Errc::IoError, "snapshot append failed");
  }

  DocId upsert_locked(const IndexDocument& doc) {
    erase_locked(doc.url_path);
    DocId id = next_id_++;
    const Entry& e = docs_.emplace(id, Entry{id, std::make_shared<const IndexDocument>(doc), analyze(doc)}).first->second;
    auto& account_trie = account_tries_[doc.account];
    for (const auto& t : e.terms) {
      auto& list = postings_[t];
      auto pos = std::lower_bound(list.begin(), list.end(), doc.url_path,
                                  [](const PostingRef& r, const std::string& p) { return r.path < p; });
      list.insert(pos, PostingRef{doc.url_path, e.doc, id});
      trie_.add(t);
      account_trie.add(t);
    }
    by_path_.emplace(doc.url_path, id);
    return id;
  }

  bool erase_locked(const std::string& url_path) {
    auto it = by_path_.find(url_path);
    if (it == by_path_.end()) return false;
    auto node = docs_.extract(it->second);
    by_path_.erase(it);
    const Entry& e = node.mapped();
    auto& account_trie = account_tries_[e.doc->account];
    for (const auto& t : e.terms) {
      auto p = postings_.find(t);
      p->second.erase(find_path(p->second, url_path));
      if (p->second.empty()) postings_.erase(p);
      trie_.remove(t);
      account_trie.remove(t);
    }
    return true;
  }

  static void emit(const PostingRef& ref, double score, QueryResponse& resp) {
    resp.hits.push_back(SearchHit{ref.path, ref.doc, score});
  }

  // Every hit matches all terms, so all scores tie and path order is final.
  void search_all_terms(const std::vector<std::string>& terms, const Query& q, QueryResponse& resp) const {
    std::vector<const PostingList*> lists;
    for (const auto& t : terms) {
      auto it = postings_.find(t);
      if (it == postings_.end()) return;
      lists.push_back(&it->second);
    }
    std::sort(lists.begin(), lists.end(), [](auto* a, auto* b) { return a->size() < b->size(); });
    const double score = static_cast<double>(terms.size());
    for (const auto& ref : *lists.front()) {
      bool in_all =
          std::all_of(lists.begin() + 1, lists.end(), [&](auto* l) { return find_path(*l, ref.path) != l->end(); });
      if (!in_all || !q.filters.matches(*ref.doc)) continue;
      emit(ref, score, resp);
      if (resp.hits.size() == q.limit) return;
    }
  }

  void search_any_term(const std::vector<std::string>& terms, const Query& q, QueryResponse& resp) const {
    std::unordered_map<DocId, std::pair<const PostingRef*, int>> matched;
    for (const auto& t : terms) {
      auto it = postings_.find(t);
      if (it == postings_.end()) continue;
      for (const auto& ref : it->second) {
        auto& m = matched[ref.id];
        m.first = &ref;
        ++m.second;
      }
    }
    std::vector<std::tuple<int, const std::string*, const PostingRef*>> ranked;
    for (const auto& [id, m] : matched)
      if (q.filters.matches(*m.first->doc)) ranked.emplace_back(m.second, &m.first->path, m.first);
    auto order = [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return *std::get<1>(a) < *std::get<1>(b);
    };
    const std::size_t keep = std::min(q.limit, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), order);
    for (std::size_t i = 0; i < keep; ++i) emit(*std::get<2>(ranked[i]), std::get<0>(ranked[i]), resp);
  }

  mutable std::shared_mutex mutex_;
  std::unordered_map<DocId, Entry> docs_;
  std::unordered_map<std::string, DocId> by_path_;
  std::unordered_map<std::string, PostingList> postings_;
  CompletionTrie trie_;
  std::unordered_map<std::string, CompletionTrie> account_tries_;
  DocId next_id_ = 1;
  std::optional<std::filesystem::path> snapshot_path_;
  std::ofstream snapshot_;
};

}  // namespace cobs
