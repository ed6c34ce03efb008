#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cobs {

/// Prefix trie over byte strings, each term carrying a document frequency.
/// Terms whose frequency drops to zero are pruned.
class CompletionTrie {
 public:
  void add(std::string_view term) { adjust(term, +1); }
  void remove(std::string_view term) { adjust(term, -1); }

  std::uint32_t frequency(std::string_view term) const {
    const Node* n = find(term);
    return n ? n->freq : 0;
  }

  std::size_t size() const noexcept { return terms_; }

  /// Up to `n` terms starting with `prefix`, frequency descending then
  /// lexicographic.
  std::vector<std::pair<std::string, std::uint32_t>> complete(std::string_view prefix, std::size_t n) const {
    std::vector<std::pair<std::string, std::uint32_t>> found;
    const Node* start = find(prefix);
    if (start == nullptr || n == 0) return found;
    std::string path(prefix);
    collect(*start, path, found);
    auto order = [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    const std::size_t keep = std::min(n, found.size());
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(keep), found.end(), order);
    found.resize(keep);
    return found;
  }

 private:
  struct Node {
    std::map<char, std::unique_ptr<Node>> children;
    std::uint32_t freq = 0;
  };

  const Node* find(std::string_view key) const {
    const Node* n = &root_;
    for (char c : key) {
      auto it = n->children.find(c);
      if (it == n->children.end()) return nullptr;
      n = it->second.get();
    }
    return n;
  }

  void adjust(std::string_view term, int delta) {
    if (term.empty()) return;
    std::vector<std::pair<Node*, char>> trail;
    Node* n = &root_;
    for (char c : term) {
      auto& child = n->children[c];
      if (!child) {
        if (delta < 0) {
          // never added; undo any empty nodes created on the way down
          n->children.erase(c);
          prune(trail);
          return;
        }
        child = std::make_unique<Node>();
      }
      trail.emplace_back(n, c);
      n = child.get();
    }
    if (delta > 0) {
      if (n->freq++ == 0) ++terms_;
    } else if (n->freq > 0) {
      if (--n->freq == 0) --terms_;
    }
    prune(trail);
  }

  static void prune(std::vector<std::pair<Node*, char>>& trail) {
    while (!trail.empty()) {
      auto [parent, c] = trail.back();
      trail.pop_back();
      auto it = parent->children.find(c);
      if (it == parent->children.end()) continue;
      if (it->second->freq > 0 || !it->second->children.empty()) return;
      parent->children.erase(it);
    }
  }

  static void collect(const Node& n, std::string& path, std::vector<std::pair<std::string, std::uint32_t>>& out) {
    if (n.freq > 0) out.emplace_back(path, n.freq);
    for (const auto& [c, child] : n.children) {
      path.push_back(c);
      collect(*child, path, out);
      path.pop_back();
    }
  }

  Node root_;
  std::size_t terms_ = 0;
};

}  // namespace cobs
