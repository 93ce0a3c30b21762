#pragma once

#include <cstddef>
#include <span>

#include <json.hpp>

namespace getral {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Counts with the fake class (label 1) as positive.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct MetricsReport {
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  ClassMetrics true_class;  // true news as positive
  ClassMetrics fake_class;  // fake news as positive
  Confusion confusion;

  std::size_t count() const { return confusion.tp + confusion.fp + confusion.fn + confusion.tn; }
  double accuracy() const;
};

/// f1 = 2PR / (P + R), 0 when P + R = 0.
double f1_score(double precision, double recall);

MetricsReport metrics_from_confusion(const Confusion& c);
MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels);

/// Keys: f1_macro, f1_micro, true_{precision,recall,f1}, fake_{precision,recall,f1}, confusion{tp,fp,fn,tn}.
nlohmann::json to_json(const MetricsReport& report);

}  // namespace getral
