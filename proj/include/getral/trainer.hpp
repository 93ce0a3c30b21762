#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "getral/config.hpp"
#include "getral/metrics.hpp"
#include "getral/model.hpp"

namespace getral {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double ce = 0.0;
  double cl = 0.0;
  double valid_f1_macro = 0.0;
  double valid_f1_micro = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  MetricsReport best_valid;
};

/// Mini-batch Adam training with early stopping on validation F1-macro.
/// On return `params` hold the weights of the latest epoch with the best
/// validation F1-macro; only a strict gain resets patience. Throws Error when a
/// batch loss is not finite.
TrainResult train(ModelParams& params, const std::vector<EncodedInstance>& train_set,
                  const std::vector<EncodedInstance>& valid_set, const TrainConfig& config,
                  std::ostream* log = nullptr);

/// argmax with ties to class 0.
int predict_label(const Matrix& y_hat);

MetricsReport evaluate(ModelParams& params, const ModelConfig& config, const std::vector<EncodedInstance>& data);

struct Prediction {
  std::string id;
  int label = 0;
  int predicted = 0;
  double p_true = 0.0;
  double p_fake = 0.0;
  std::vector<std::vector<double>> doc_alpha;  // per head, over evidences
};

std::vector<Prediction> predict(ModelParams& params, const ModelConfig& config,
                                const std::vector<EncodedInstance>& data);

/// Header "epoch,train_loss,ce,cl,valid_f1_macro,valid_f1_micro", values with %.10g.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
};

/// Per label, round(fraction * count) members go to validation (at least one
/// when the label has two or more members). Indices come back sorted.
Split stratified_split(std::span<const int> labels, double valid_fraction, std::uint64_t seed);

/// Stratified K-fold assignment; fold f's validation set is split[f].valid.
std::vector<Split> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

}  // namespace getral
