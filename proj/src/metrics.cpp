#include "getral/metrics.hpp"

#include "getral/matrix.hpp"

namespace getral {

double MetricsReport::accuracy() const {
  const std::size_t n = count();
  return n == 0 ? 0.0 : static_cast<double>(confusion.tp + confusion.tn) / static_cast<double>(n);
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

}  // namespace

MetricsReport metrics_from_confusion(const Confusion& c) {
  MetricsReport r;
  r.confusion = c;
  r.fake_class = class_metrics(c.tp, c.fp, c.fn);
  // With true news as positive the roles of the cells swap.
  r.true_class = class_metrics(c.tn, c.fn, c.fp);
  r.f1_macro = 0.5 * (r.true_class.f1 + r.fake_class.f1);
  // Pooled over both polarities: TP = correct, FP = FN = wrong.
  const std::size_t correct = c.tp + c.tn;
  const std::size_t wrong = c.fp + c.fn;
  // Pooled over both classes precision and recall coincide, so F1 is their common value.
  r.f1_micro = ratio(correct, correct + wrong);
  return r;
}

MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error("compute_metrics: prediction/label count mismatch");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_fake = predictions[i] == 1;
    const bool is_fake = labels[i] == 1;
    if (pred_fake && is_fake) ++c.tp;
    else if (pred_fake) ++c.fp;
    else if (is_fake) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c);
}

nlohmann::json to_json(const MetricsReport& r) {
  return nlohmann::json{
      {"f1_macro", r.f1_macro},
      {"f1_micro", r.f1_micro},
      {"true_precision", r.true_class.precision},
      {"true_recall", r.true_class.recall},
      {"true_f1", r.true_class.f1},
      {"fake_precision", r.fake_class.precision},
      {"fake_recall", r.fake_class.recall},
      {"fake_f1", r.fake_class.f1},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
  };
}

}  // namespace getral
