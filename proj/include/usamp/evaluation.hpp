#ifndef USAMP_EVALUATION_HPP
#define USAMP_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "usamp/corpus.hpp"
#include "usamp/error.hpp"

namespace usamp {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

inline void tally(ConfusionCounts& c, Label decision, Label truth) {
  if (is_positive(decision)) {
    ++(is_positive(truth) ? c.tp : c.fp);
  } else {
    ++(is_positive(truth) ? c.fn : c.tn);
  }
}

/// Both maps must cover the same doc_ids.
inline ConfusionCounts confusion(const LabelMap& decisions, const LabelMap& truth) {
  if (decisions.size() != truth.size()) {
    throw data_error("confusion: decision and truth key sets differ in size");
  }
  ConfusionCounts c;
  for (const auto& [doc_id, decision] : decisions) {
    auto it = truth.find(doc_id);
    if (it == truth.end()) {
      throw data_error("confusion: no truth label for '" + doc_id + "'");
    }
    tally(c, decision, it->second);
  }
  return c;
}

// Empty denominators give 0 rather than NaN.
inline double recall(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double precision(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fp;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// Van Rijsbergen's effectiveness, expressed as F = 1 - E:
/// (beta^2 + 1) P R / (beta^2 P + R), and 0 when P = R = 0.
inline double f_measure(double recall_value, double precision_value, double beta = 1.0) {
  if (!(beta > 0.0)) throw usage_error("f_measure: beta must be positive");
  const double b2 = beta * beta;
  const double denom = b2 * precision_value + recall_value;
  if (denom == 0.0) return 0.0;
  return (b2 + 1.0) * precision_value * recall_value / denom;
}

struct EffectivenessReport {
  double recall = 0.0;
  double precision = 0.0;
  double f_beta = 0.0;
  double beta = 1.0;
  ConfusionCounts counts;
};

inline EffectivenessReport effectiveness(const ConfusionCounts& c, double beta = 1.0) {
  EffectivenessReport r;
  r.counts = c;
  r.beta = beta;
  r.recall = recall(c);
  r.precision = precision(c);
  r.f_beta = f_measure(r.recall, r.precision, beta);
  return r;
}

struct RunAggregate {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t runs = 0;
  bool single_run = false;  // sd is reported as 0, not estimated
};

/// Mean and sample (n - 1) standard deviation.
inline RunAggregate aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw data_error("aggregate_runs: no runs");
  RunAggregate agg;
  agg.runs = values.size();
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
  if (values.size() == 1) {
    agg.single_run = true;
    return agg;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return agg;
}

/// Iterations 0..10, every 5th after that, and always the last one.
inline std::set<int> evaluation_schedule(int iterations) {
  std::set<int> out;
  if (iterations < 0) return out;
  for (int i = 0; i <= std::min(iterations, 10); ++i) out.insert(i);
  for (int i = 15; i <= iterations; i += 5) out.insert(i);
  out.insert(iterations);
  return out;
}

}  // namespace usamp

#endif  // USAMP_EVALUATION_HPP
