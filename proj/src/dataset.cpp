#include "getral/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

namespace getral {

using nlohmann::json;

namespace {

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw FormatError(where + "field '" + key + "' must be a string");
  return it->get<std::string>();
}

ClaimInstance parse_line(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(where + "malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError(where + "expected a JSON object");

  ClaimInstance inst;
  const auto id = j.find("id");
  if (id == j.end()) throw FormatError(where + "missing field 'id'");
  if (id->is_string()) {
    inst.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    inst.id = id->dump();
  } else {
    throw FormatError(where + "field 'id' must be a string or integer");
  }

  const auto claim = j.find("claim");
  if (claim == j.end()) throw FormatError(where + "missing field 'claim'");
  if (!claim->is_string()) throw FormatError(where + "field 'claim' must be a string");
  inst.claim = claim->get<std::string>();

  const auto label = j.find("label");
  if (label == j.end()) throw FormatError(where + "missing field 'label'");
  if (!label->is_number_integer() || (label->get<long long>() != 0 && label->get<long long>() != 1)) {
    throw FormatError(where + "label must be 0 or 1, got " + label->dump());
  }
  inst.label = label->get<int>();

  inst.speaker = optional_string(j, "speaker", where);
  inst.split = optional_string(j, "split", where);

  const auto ev = j.find("evidences");
  if (ev == j.end()) throw FormatError(where + "missing field 'evidences'");
  if (!ev->is_array() || ev->empty()) throw FormatError(where + "'evidences' must be a non-empty array");
  for (std::size_t i = 0; i < ev->size(); ++i) {
    const json& e = (*ev)[i];
    const std::string at = where + "evidence " + std::to_string(i) + ": ";
    if (!e.is_object()) throw FormatError(at + "expected an object");
    const auto text = e.find("text");
    if (text == e.end() || !text->is_string()) throw FormatError(at + "missing string field 'text'");
    inst.evidences.push_back({text->get<std::string>(), optional_string(e, "publisher", at)});
  }
  return inst;
}

}  // namespace

std::vector<ClaimInstance> parse_dataset(std::istream& in, const std::string& source) {
  std::vector<ClaimInstance> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    ClaimInstance inst = parse_line(line, where);
    if (!ids.insert(inst.id).second) throw FormatError(where + "duplicate id '" + inst.id + "'");
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw FormatError(source + ": no instances");
  return out;
}

std::vector<ClaimInstance> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset " + path.string());
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const std::vector<ClaimInstance>& instances) {
  for (const auto& inst : instances) {
    json j;
    j["id"] = inst.id;
    j["claim"] = inst.claim;
    j["label"] = inst.label;
    if (inst.speaker) j["speaker"] = *inst.speaker;
    json ev = json::array();
    for (const auto& e : inst.evidences) {
      json o;
      o["text"] = e.text;
      if (e.publisher) o["publisher"] = *e.publisher;
      ev.push_back(std::move(o));
    }
    j["evidences"] = std::move(ev);
    if (inst.split) j["split"] = *inst.split;
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const std::vector<ClaimInstance>& instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset(out, instances);
}

}  // namespace getral
