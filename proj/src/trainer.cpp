#include "getral/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "getral/optimizer.hpp"

namespace getral {

namespace {

std::vector<const EncodedInstance*> pointers(const std::vector<EncodedInstance>& data) {
  std::vector<const EncodedInstance*> out;
  for (const auto& d : data) out.push_back(&d);
  return out;
}

std::vector<Matrix> snapshot(const std::vector<Param*>& params) {
  std::vector<Matrix> out;
  for (const Param* p : params) out.push_back(p->value);
  return out;
}

std::map<int, std::vector<std::size_t>> by_label(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

}  // namespace

int predict_label(const Matrix& y_hat) { return y_hat.data()[1] > y_hat.data()[0] ? 1 : 0; }

TrainResult train(ModelParams& params, const std::vector<EncodedInstance>& train_set,
                  const std::vector<EncodedInstance>& valid_set, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  if (valid_set.empty()) throw Error("train: empty validation set");

  std::vector<Param*> all = params.all_params(true);
  Adam adam(AdamOptions{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay},
            params.all_params(!config.freeze_embeddings));
  Rng shuffle_rng = Rng(config.seed).fork(0x5f);
  const auto instances = pointers(train_set);

  TrainResult result;
  std::vector<Matrix> best = snapshot(all);
  double best_f1 = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const EncodedInstance*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(instances[order[i]]);

      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
      Tape tape;
      BatchForward f;
      try {
        f = forward_batch(tape, params, config, batch);
      } catch (const DomainError& e) {
        // NaN or Inf reaching a guarded primitive
        throw Error("non-finite values at " + where + ": " + e.what());
      }
      const double loss = f.loss.value().item();
      if (!std::isfinite(loss)) throw Error("non-finite loss at " + where);
      for (Param* p : all) p->zero_grad();
      tape.backward(f.loss);
      tape.accumulate_param_grads();
      adam.step();

      const double w = static_cast<double>(batch.size());
      rec.train_loss += loss * w;
      rec.ce += f.ce.value().item() * w;
      rec.cl += f.cl.value().item() * w;
      ++batches;
    }
    const double n = static_cast<double>(order.size());
    rec.train_loss /= n;
    rec.ce /= n;
    rec.cl /= n;

    const MetricsReport valid = evaluate(params, config.model, valid_set);
    rec.valid_f1_macro = valid.f1_macro;
    rec.valid_f1_micro = valid.f1_micro;
    result.history.push_back(rec);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu loss %.6f ce %.6f cl %.6f valid f1-macro %.4f f1-micro %.4f\n",
                    epoch, rec.train_loss, rec.ce, rec.cl, rec.valid_f1_macro, rec.valid_f1_micro);
      *log << line;
    }

    // Ties keep the later epoch; only a strict gain resets patience.
    if (valid.f1_macro >= best_f1) {
      best = snapshot(all);
      result.best_epoch = epoch;
      result.best_valid = valid;
    }
    if (valid.f1_macro > best_f1) {
      best_f1 = valid.f1_macro;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = best[i];
  return result;
}

std::vector<Prediction> predict(ModelParams& params, const ModelConfig& config,
                                const std::vector<EncodedInstance>& data) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  for (const auto& inst : data) {
    Tape tape;
    const EncodedInstance* one[] = {&inst};
    EmbeddingLookup lookup(tape, params.embedding, false, one);
    const InstanceForward f = forward_instance(tape, params, config, inst, lookup);
    Prediction p;
    p.id = inst.id;
    p.label = inst.label;
    p.predicted = predict_label(f.y_hat.value());
    p.p_true = f.y_hat.value().data()[0];
    p.p_fake = f.y_hat.value().data()[1];
    p.doc_alpha = f.doc.weights;
    out.push_back(std::move(p));
  }
  return out;
}

MetricsReport evaluate(ModelParams& params, const ModelConfig& config, const std::vector<EncodedInstance>& data) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  std::vector<int> preds;
  std::vector<int> labels;
  for (const auto& p : predict(params, config, data)) {
    preds.push_back(p.predicted);
    labels.push_back(p.label);
  }
  return compute_metrics(preds, labels);
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,ce,cl,valid_f1_macro,valid_f1_micro\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.train_loss, r.ce, r.cl,
                  r.valid_f1_macro, r.valid_f1_micro);
    out << line;
  }
}

Split stratified_split(std::span<const int> labels, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw DomainError("valid fraction must lie in (0, 1)");
  Rng rng = Rng(seed).fork(0x5b);
  Split s;
  for (auto& [label, members] : by_label(labels)) {
    rng.shuffle(members);
    std::size_t take = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    else take = 0;
    s.valid.insert(s.valid.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  return s;
}

std::vector<Split> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DomainError("need at least 2 folds");
  if (folds > labels.size()) throw DomainError("more folds than instances");
  Rng rng = Rng(seed).fork(0xf0);
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t offset = 0;
  for (auto& [label, members] : by_label(labels)) {
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = (offset + i) % folds;
    offset += members.size();
  }
  std::vector<Split> out(folds);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) (f == fold_of[i] ? out[f].valid : out[f].train).push_back(i);
  }
  return out;
}

}  // namespace getral
