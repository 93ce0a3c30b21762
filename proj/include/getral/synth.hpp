#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "getral/dataset.hpp"

namespace getral {

struct SynthOptions {
  std::uint64_t seed = 7;
  std::size_t count = 40;
  /// Fraction of each evidence's tokens replaced by distractor words.
  double distractor_rate = 0.0;
  /// Attach a random publisher (pub0..pub4) to every evidence.
  bool publishers = false;
};

/// Keyword corpus over a 50-word inventory: 6 keywords (k00..k05), 8 fillers
/// (f00..f07) and 36 distractors (d00..d35). A claim is 3 distinct keywords.
/// Each instance has 3 evidences of 10 filler tokens. A true instance (label
/// 0) has one evidence that repeats 2 or 3 of the claim's keywords; a fake
/// instance (label 1) has no keyword in any evidence. Distractors only appear
/// when distractor_rate > 0. Labels are balanced.
std::vector<ClaimInstance> synthetic_corpus(const SynthOptions& options);

/// Number of distinct claim keywords found in the best-matching evidence.
std::size_t shared_keywords(const ClaimInstance& instance);

}  // namespace getral
