#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "getral/text_graph.hpp"

namespace getral {

struct EvidenceText {
  std::string text;
  std::optional<std::string> publisher;
};

struct ClaimInstance {
  std::string id;
  std::string claim;
  int label = 0;  // 0 true, 1 fake
  std::optional<std::string> speaker;
  std::vector<EvidenceText> evidences;
  /// Optional "train" / "valid" / "test" tag from the file.
  std::optional<std::string> split;
};

/// One JSON object per line:
///   {"id": "1", "claim": "...", "label": 0|1, "speaker": "..."?,
///    "evidences": [{"text": "...", "publisher": "..."?}, ...], "split": "..."?}
/// Blank lines are ignored. Any malformed line throws FormatError prefixed
/// with `source:line:`; a file without instances is an error too.
std::vector<ClaimInstance> parse_dataset(std::istream& in, const std::string& source);
std::vector<ClaimInstance> load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const std::vector<ClaimInstance>& instances);
void save_dataset(const std::filesystem::path& path, const std::vector<ClaimInstance>& instances);

}  // namespace getral
