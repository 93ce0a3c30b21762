#include "getral/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace getral {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': expected a number, got '" + s + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config '" + key + "': expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config '" + key + "': expected true/false, got '" + s + "'");
}

struct Entry {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Field>
Entry size_entry(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<std::size_t>(parse_uint(k, v));
          },
          [field](const TrainConfig& c) { return std::to_string(field(const_cast<TrainConfig&>(c))); }};
}

template <typename Field>
Entry double_entry(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); },
          [field](const TrainConfig& c) { return format_double(field(const_cast<TrainConfig&>(c))); }};
}

template <typename Field>
Entry bool_entry(Field field) {
  return {[field](TrainConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); },
          [field](const TrainConfig& c) { return std::string(field(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
}

#define FIELD(expr) [](TrainConfig& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Entry>>& table() {
  static const std::vector<std::pair<std::string, Entry>> entries = {
      {"lr", double_entry(FIELD(c.lr))},
      {"weight-decay", double_entry(FIELD(c.weight_decay))},
      {"batch-size", size_entry(FIELD(c.batch_size))},
      {"max-epochs", size_entry(FIELD(c.max_epochs))},
      {"patience", size_entry(FIELD(c.patience))},
      {"lambda", double_entry(FIELD(c.lambda))},
      {"tau", double_entry(FIELD(c.tau))},
      {"epsilon", double_entry(FIELD(c.epsilon))},
      {"adversarial", bool_entry(FIELD(c.adversarial))},
      {"supcon-standard-denominator", bool_entry(FIELD(c.supcon_standard_denominator))},
      {"freeze-embeddings", bool_entry(FIELD(c.freeze_embeddings))},
      {"adam-beta1", double_entry(FIELD(c.adam_beta1))},
      {"adam-beta2", double_entry(FIELD(c.adam_beta2))},
      {"adam-eps", double_entry(FIELD(c.adam_eps))},
      {"valid-fraction", double_entry(FIELD(c.valid_fraction))},
      {"seed", {[](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); },
                [](const TrainConfig& c) { return std::to_string(c.seed); }}},
      {"embed-dim", size_entry(FIELD(c.model.embed_dim))},
      {"side-dim", size_entry(FIELD(c.model.side_dim))},
      {"window", size_entry(FIELD(c.model.window))},
      {"max-claim-len", size_entry(FIELD(c.model.max_claim_len))},
      {"max-evidence-len", size_entry(FIELD(c.model.max_evidence_len))},
      {"max-evidences", size_entry(FIELD(c.model.max_evidences))},
      {"kernels", size_entry(FIELD(c.model.kernels))},
      {"word-heads", size_entry(FIELD(c.model.word_heads))},
      {"doc-heads", size_entry(FIELD(c.model.doc_heads))},
      {"claim-layers", size_entry(FIELD(c.model.claim_layers))},
      {"srm-layers", size_entry(FIELD(c.model.srm_layers))},
      {"beta", double_entry(FIELD(c.model.beta))},
      {"discard-rate", double_entry(FIELD(c.model.discard_rate))},
      {"crossed-contextualization", bool_entry(FIELD(c.model.crossed_contextualization))},
      {"zero-init-classifier", bool_entry(FIELD(c.model.zero_init_classifier))},
  };
  return entries;
}

#undef FIELD

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

const Entry& lookup(const std::string& key) {
  for (const auto& [k, e] : table())
    if (k == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  require(lr >= 0.0, "lr must be >= 0");
  require(weight_decay >= 0.0, "weight-decay must be >= 0");
  require(batch_size >= 1, "batch-size must be >= 1");
  require(max_epochs >= 1, "max-epochs must be >= 1");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(tau > 0.0, "tau must be > 0");
  require(epsilon > 0.0, "epsilon must be > 0");
  require(valid_fraction > 0.0 && valid_fraction < 1.0, "valid-fraction must lie in (0, 1)");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas in [0, 1)");
  require(adam_eps > 0.0, "adam-eps must be > 0");
  require(model.embed_dim >= 1 && model.side_dim >= 1, "embed-dim and side-dim must be >= 1");
  require(model.window >= 1, "window must be >= 1");
  require(model.max_claim_len >= 1 && model.max_evidence_len >= 1 && model.max_evidences >= 1,
          "length limits must be >= 1");
  require(model.kernels >= 2, "kernels must be >= 2");
  require(model.word_heads >= 1 && model.doc_heads >= 1, "head counts must be >= 1");
  require(model.claim_layers <= 3, "claim-layers must lie in 0..3");
  require(model.beta >= 0.0 && model.beta <= 1.0, "beta must lie in [0, 1]");
  require(model.discard_rate >= 0.0 && model.discard_rate < 1.0, "discard-rate must lie in [0, 1)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, e] : table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, std::string key, const std::string& value) {
  key = normalize_key(std::move(key));
  lookup(key).set(config, key, trim(value));
}

std::string get_config_value(const TrainConfig& config, std::string key) {
  return lookup(normalize_key(std::move(key))).get(config);
}

ConfigValues parse_config_text(const std::string& text, const std::string& source) {
  ConfigValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = normalize_key(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    try {
      lookup(key);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out[key] = value;
  }
  return out;
}

ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

TrainConfig resolve_config(const TrainConfig& defaults, const ConfigValues& file, const ConfigValues& flags) {
  TrainConfig c = defaults;
  for (const auto& [k, v] : file) set_config_value(c, k, v);
  for (const auto& [k, v] : flags) set_config_value(c, k, v);
  return c;
}

nlohmann::json config_to_json(const TrainConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, e] : table()) j[k] = e.get(config);
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [k, v] : j.items()) set_config_value(c, k, v.is_string() ? v.get<std::string>() : v.dump());
  return c;
}

}  // namespace getral
