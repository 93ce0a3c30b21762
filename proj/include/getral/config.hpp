#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "getral/matrix.hpp"

namespace getral {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t side_dim = 128;
  std::size_t window = 3;
  std::size_t max_claim_len = 30;
  std::size_t max_evidence_len = 100;
  std::size_t max_evidences = 30;
  std::size_t kernels = 11;
  std::size_t word_heads = 5;
  std::size_t doc_heads = 2;
  std::size_t claim_layers = 1;  // T_E
  std::size_t srm_layers = 1;    // T_R
  double beta = 0.5;
  double discard_rate = 0.3;
  bool crossed_contextualization = false;
  bool zero_init_classifier = true;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  double weight_decay = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double lambda = 0.1;
  double tau = 0.1;
  double epsilon = 1.0;
  bool adversarial = true;
  bool supcon_standard_denominator = false;
  bool freeze_embeddings = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double valid_fraction = 0.2;
  std::uint64_t seed = 1;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

using ConfigValues = std::map<std::string, std::string>;

/// Every settable key, in documentation order (dash-separated, e.g. "weight-decay").
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Underscores in the key are accepted as dashes.
void set_config_value(TrainConfig& config, std::string key, const std::string& value);
std::string get_config_value(const TrainConfig& config, std::string key);

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError with the line number.
ConfigValues parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigValues read_config_file(const std::filesystem::path& path);

/// defaults <- file values <- flag values.
TrainConfig resolve_config(const TrainConfig& defaults, const ConfigValues& file, const ConfigValues& flags);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

}  // namespace getral
