#include "getral/text_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace getral {

namespace {

bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
         c == 0x3000;
}

// Decodes one UTF-8 sequence at text[i]; returns (codepoint, length). Invalid
// bytes decode as themselves with length 1.
std::pair<char32_t, std::size_t> decode(std::string_view text, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xC0 && b0 < 0xE0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if (b0 >= 0xE0 && b0 < 0xF0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xF0 && b0 < 0xF8) {
    len = 4;
    cp = b0 & 0x07;
  }
  if (len == 1 || i + len > text.size()) return {b0, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) return {b0, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

void flush(std::string& cur, std::vector<std::string>& out) {
  std::size_t b = 0, e = cur.size();
  while (b < e && is_ascii_punct(cur[b])) ++b;
  while (e > b && is_ascii_punct(cur[e - 1])) --e;
  if (e > b) out.push_back(cur.substr(b, e - b));
  cur.clear();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size();) {
    const auto [cp, len] = decode(text, i);
    if (is_unicode_space(cp)) {
      flush(cur, out);
    } else if (len == 1) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    } else {
      cur.append(text.substr(i, len));
    }
    i += len;
  }
  flush(cur, out);
  return out;
}

// ---------------------------------------------------------------------------

Vocab::Vocab() { add(std::string(kUnknownWord)); }

Vocab::Vocab(const std::vector<std::string>& words) {
  if (words.empty() || words.front() != kUnknownWord) add(std::string(kUnknownWord));
  for (const auto& w : words) {
    if (index_.contains(w)) throw FormatError("vocabulary: duplicate word '" + w + "'");
    add(w);
  }
}

std::size_t Vocab::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  words_.push_back(word);
  index_.emplace(word, words_.size() - 1);
  return words_.size() - 1;
}

std::size_t Vocab::index(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& w : words_) {
    for (char c : w) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

// ---------------------------------------------------------------------------

EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t dim, Rng& rng) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  const double bound = 0.5 / static_cast<double>(dim);
  EmbeddingTable table{rng.uniform_matrix(vocab.size(), dim, -bound, bound),
                       std::vector<bool>(vocab.size(), false)};
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings file " + path.string());

  std::unordered_map<std::size_t, std::vector<double>> found;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (v.empty()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": no vector values");
    if (dim == 0) {
      dim = v.size();
    } else if (v.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(v.size()));
    }
    if (const std::size_t idx = vocab.index(word); idx != Vocab::kUnknown && !found.contains(idx)) {
      found.emplace(idx, std::move(v));
    }
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  if (dim == 0) throw FormatError(path.string() + ": no embedding rows");

  EmbeddingTable table = random_embeddings(vocab, dim, rng);
  for (auto& [idx, v] : found) {
    std::copy(v.begin(), v.end(), table.vectors.row(idx).begin());
    table.pretrained[idx] = true;
  }
  return table;
}

// ---------------------------------------------------------------------------

std::size_t TokenGraph::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

std::pair<std::vector<std::size_t>, EdgeSet> window_edges(const std::vector<std::size_t>& words,
                                                          std::size_t window) {
  if (window < 1) throw Error("window size must be at least 1");
  std::vector<std::size_t> node_words;
  std::unordered_map<std::size_t, std::size_t> node_of;
  std::vector<std::size_t> nodes;
  nodes.reserve(words.size());
  for (std::size_t w : words) {
    auto [it, inserted] = node_of.emplace(w, node_words.size());
    if (inserted) node_words.push_back(w);
    nodes.push_back(it->second);
  }

  std::set<std::pair<std::size_t, std::size_t>> edges;
  const std::size_t len = words.size();
  const std::size_t span = std::min(window, len);
  for (std::size_t start = 0; start + span <= len && span > 0; ++start) {
    const std::size_t center = nodes[start + span / 2];
    for (std::size_t k = start; k < start + span; ++k) {
      const std::size_t other = nodes[k];
      if (other != center) edges.emplace(std::min(center, other), std::max(center, other));
    }
  }
  return {std::move(node_words), EdgeSet(edges.begin(), edges.end())};
}

Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("normalize_adjacency: non-square " + a.shape_str());
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a(i, j) != a(j, i)) throw Error("normalize_adjacency: adjacency is not symmetric");
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) deg += a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = (i == j) ? 1.0 : a(i, j);
      if (aij != 0.0) out(i, j) = inv_sqrt[i] * aij * inv_sqrt[j];
    }
  return out;
}

TokenGraph build_graph(const std::vector<std::size_t>& words, std::size_t window, std::size_t max_len,
                       const EmbeddingTable& table) {
  if (max_len == 0) throw Error("max_len must be at least 1");
  if (words.empty()) throw Error("empty text");
  const std::vector<std::size_t> kept(words.begin(),
                                      words.begin() + static_cast<std::ptrdiff_t>(std::min(words.size(), max_len)));
  auto [node_words, edges] = window_edges(kept, window);

  TokenGraph g;
  const std::size_t n = node_words.size();
  g.adjacency = Matrix(n, n);
  for (const auto& [i, j] : edges) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
  g.normalized = normalize_adjacency(g.adjacency);
  g.features = Matrix(n, table.dim());
  for (std::size_t i = 0; i < n; ++i) {
    if (node_words[i] >= table.vectors.rows()) throw Error("build_graph: word index outside embedding table");
    const auto src = table.vectors.row(node_words[i]);
    std::copy(src.begin(), src.end(), g.features.row(i).begin());
  }
  g.node_words = std::move(node_words);
  g.active.assign(n, true);
  g.token_length = kept.size();
  return g;
}

TokenGraph build_graph(const std::vector<std::string>& tokens, const Vocab& vocab, std::size_t window,
                       std::size_t max_len, const EmbeddingTable& table) {
  return build_graph(vocab.encode(tokens), window, max_len, table);
}

}  // namespace getral
