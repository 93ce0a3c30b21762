#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "getral/matrix.hpp"
#include "getral/rng.hpp"

namespace getral {

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Lowercases (ASCII), splits on Unicode whitespace and strips leading and
/// trailing ASCII punctuation from each token. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Word <-> index map. Index 0 is always the unknown token.
class Vocab {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::string_view kUnknownWord = "<unk>";

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);

  /// Returns the index of word, inserting it when absent.
  std::size_t add(const std::string& word);
  /// Index of word, or kUnknown.
  std::size_t index(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.contains(word); }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  /// FNV-1a over the words in index order.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingTable {
  Matrix vectors;              // vocab x d
  std::vector<bool> pretrained;

  std::size_t dim() const { return vectors.cols(); }
};

/// Rows for words absent from the file (and the unknown row) are drawn
/// uniformly from [-0.5/d, 0.5/d] and flagged as not pretrained.
EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t dim, Rng& rng);

/// Reads `word v1 ... vd` lines. Throws FormatError (with line number) when d
/// changes between lines and IoError when the file cannot be read.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab, Rng& rng);

struct TokenGraph {
  std::vector<std::size_t> node_words;  // unique vocab indices, first-appearance order
  Matrix adjacency;                     // raw 0/1, symmetric, zero diagonal
  Matrix normalized;                    // D^-1/2 (A + I) D^-1/2
  Matrix features;                      // node x d, H(0)
  std::vector<bool> active;
  std::size_t token_length = 0;

  std::size_t node_count() const { return node_words.size(); }
  std::size_t active_count() const;
};

/// Undirected edges produced by the sliding window, as (min, max) node pairs.
using EdgeSet = std::vector<std::pair<std::size_t, std::size_t>>;

/// Maps tokens to merged nodes and collects window edges. In every window of
/// `window` consecutive tokens (one window over the whole text when it is
/// shorter), the center token (offset len/2) is linked to every other token.
/// Returns node words (first-appearance order) and the sorted edge set.
std::pair<std::vector<std::size_t>, EdgeSet> window_edges(const std::vector<std::size_t>& words,
                                                          std::size_t window);

Matrix normalize_adjacency(const Matrix& adjacency);

/// Builds a merged co-occurrence graph. Throws Error("empty text") on no tokens.
TokenGraph build_graph(const std::vector<std::size_t>& words, std::size_t window, std::size_t max_len,
                       const EmbeddingTable& table);
TokenGraph build_graph(const std::vector<std::string>& tokens, const Vocab& vocab, std::size_t window,
                       std::size_t max_len, const EmbeddingTable& table);

}  // namespace getral
