#include "getral/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "getral/rng.hpp"
#include "getral/text_graph.hpp"

namespace getral {

namespace {

constexpr std::size_t kKeywords = 6;
constexpr std::size_t kFillers = 8;
constexpr std::size_t kDistractors = 36;
constexpr std::size_t kClaimKeywords = 3;
constexpr std::size_t kEvidences = 3;
constexpr std::size_t kEvidenceLen = 10;

std::string word(char prefix, std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%c%02zu", prefix, i);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

// Distinct draws from [0, n).
std::vector<std::size_t> sample(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  rng.shuffle(all);
  all.resize(k);
  return all;
}

}  // namespace

std::size_t shared_keywords(const ClaimInstance& instance) {
  std::set<std::string> claim_keys;
  for (const auto& t : tokenize(instance.claim))
    if (t[0] == 'k') claim_keys.insert(t);
  std::size_t best = 0;
  for (const auto& e : instance.evidences) {
    std::set<std::string> found;
    for (const auto& t : tokenize(e.text))
      if (claim_keys.contains(t)) found.insert(t);
    best = std::max(best, found.size());
  }
  return best;
}

std::vector<ClaimInstance> synthetic_corpus(const SynthOptions& options) {
  if (options.distractor_rate < 0.0 || options.distractor_rate >= 1.0) {
    throw DomainError("synthetic_corpus: distractor rate must lie in [0, 1)");
  }
  Rng rng(options.seed);
  std::vector<int> labels(options.count);
  for (std::size_t i = 0; i < options.count; ++i) labels[i] = static_cast<int>(i % 2);
  rng.shuffle(labels);

  const auto distractors = static_cast<std::size_t>(options.distractor_rate * kEvidenceLen + 0.5);
  std::vector<ClaimInstance> out;
  for (std::size_t i = 0; i < options.count; ++i) {
    ClaimInstance inst;
    inst.id = "synth-" + std::to_string(i);
    inst.label = labels[i];

    const auto keys = sample(rng, kKeywords, kClaimKeywords);
    std::vector<std::string> claim;
    for (std::size_t k : keys) claim.push_back(word('k', k));
    inst.claim = join(claim);

    const std::size_t support = rng.index(kEvidences);
    for (std::size_t e = 0; e < kEvidences; ++e) {
      std::vector<std::string> tokens;
      for (std::size_t t = 0; t < kEvidenceLen; ++t) tokens.push_back(word('f', rng.index(kFillers)));
      const auto slots = sample(rng, kEvidenceLen, kEvidenceLen);
      std::size_t next = 0;
      if (inst.label == 0 && e == support) {
        const std::size_t shared = 2 + rng.index(kClaimKeywords - 1);
        for (std::size_t s = 0; s < shared; ++s) tokens[slots[next++]] = word('k', keys[s]);
      }
      for (std::size_t s = 0; s < distractors && next < kEvidenceLen; ++s) {
        tokens[slots[next++]] = word('d', rng.index(kDistractors));
      }
      std::optional<std::string> publisher;
      if (options.publishers) publisher = "pub" + std::to_string(rng.index(5));
      inst.evidences.push_back({join(tokens), publisher});
    }
    const std::size_t shared = shared_keywords(inst);
    if ((inst.label == 0) != (shared >= 2) || (inst.label == 1 && shared != 0)) {
      throw Error("synthetic_corpus: generated instance violates the keyword rule");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace getral
