#ifndef USAMP_SAMPLING_HPP
#define USAMP_SAMPLING_HPP

// Pool-based sequential sampling: score the unlabeled pool with the current
// classifier, pick a batch, have the oracle label it, retrain on everything
// labeled so far, repeat.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "usamp/classifier.hpp"
#include "usamp/classifier_io.hpp"
#include "usamp/corpus.hpp"
#include "usamp/error.hpp"
#include "usamp/rng.hpp"

namespace usamp {

enum class Strategy { uncertainty, relevance, random };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::uncertainty: return "uncertainty";
    case Strategy::relevance: return "relevance";
    case Strategy::random: return "random";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "uncertainty") return Strategy::uncertainty;
  if (s == "relevance") return Strategy::relevance;
  if (s == "random") return Strategy::random;
  throw usage_error("unknown strategy '" + s + "'");
}

struct SamplingConfig {
  int batch_size = 4;
  int iterations = 249;
  Strategy strategy = Strategy::uncertainty;
  std::uint64_t seed = 0;
  double fraction = 0.7;
  LossMatrix loss = LossMatrix::minimum_error();
  ScoreMode mode = ScoreMode::occurrences;

  void validate() const {
    if (batch_size < 1) throw usage_error("batch size must be positive");
    if (strategy == Strategy::uncertainty && (batch_size < 2 || batch_size % 2 != 0)) {
      throw usage_error("uncertainty sampling needs an even batch size >= 2");
    }
    if (iterations < 0) throw usage_error("iterations must be non-negative");
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw usage_error("selection fraction must lie in (0, 1]");
    }
    loss.validate();
  }
};

struct ScoredDoc {
  std::string_view doc_id;
  double posterior = 0.0;
};

/// Half the batch from each side of 0.5: the documents with the smallest
/// p - 0.5 >= 0 and those with the smallest 0.5 - p > 0. A side that runs
/// short is topped up from the other. p == 0.5 counts as above. Output
/// lists the above-side picks first, each side nearest-first.
inline std::vector<std::string> select_uncertain(std::span<const ScoredDoc> pool, int b) {
  if (b < 2 || b % 2 != 0) {
    throw usage_error("select_uncertain: batch size must be even and >= 2");
  }
  struct Keyed {
    double distance;
    std::string_view doc_id;
  };
  std::vector<Keyed> above, below;
  for (const auto& d : pool) {
    if (d.posterior >= 0.5) {
      above.push_back({d.posterior - 0.5, d.doc_id});
    } else {
      below.push_back({0.5 - d.posterior, d.doc_id});
    }
  }
  const auto half = static_cast<std::size_t>(b / 2);
  std::size_t n_above = std::min(half, above.size());
  std::size_t n_below = std::min(half, below.size());
  const auto want = static_cast<std::size_t>(b);
  if (n_above < half) n_below = std::min(below.size(), want - n_above);
  if (n_below < half) n_above = std::min(above.size(), want - n_below);

  auto nearest = [](const Keyed& x, const Keyed& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return x.doc_id < y.doc_id;
  };
  std::partial_sort(above.begin(), above.begin() + static_cast<std::ptrdiff_t>(n_above),
                    above.end(), nearest);
  std::partial_sort(below.begin(), below.begin() + static_cast<std::ptrdiff_t>(n_below),
                    below.end(), nearest);
  std::vector<std::string> out;
  out.reserve(n_above + n_below);
  for (std::size_t i = 0; i < n_above; ++i) out.emplace_back(above[i].doc_id);
  for (std::size_t i = 0; i < n_below; ++i) out.emplace_back(below[i].doc_id);
  return out;
}

/// The b highest posteriors, ties by doc_id ascending.
inline std::vector<std::string> select_relevant(std::span<const ScoredDoc> pool, int b) {
  if (b < 1) throw usage_error("select_relevant: batch size must be positive");
  std::vector<ScoredDoc> v(pool.begin(), pool.end());
  const auto n = std::min(static_cast<std::size_t>(b), v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.end(),
                    [](const ScoredDoc& x, const ScoredDoc& y) {
                      if (x.posterior != y.posterior) return x.posterior > y.posterior;
                      return x.doc_id < y.doc_id;
                    });
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(v[i].doc_id);
  return out;
}

/// Prefix of a seeded permutation of the pool, so samples drawn with the
/// same seed are nested.
inline std::vector<std::string> select_random(std::span<const std::string> pool,
                                              std::size_t n, std::uint64_t seed) {
  if (n > pool.size()) throw usage_error("select_random: sample larger than pool");
  Rng rng(seed);
  const auto perm = rng.permutation(pool.size());
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[perm[i]]);
  return out;
}

/// Unlabeled documents plus the growing labeled set. Tokens are interned
/// once so that rescoring the whole pool each iteration stays cheap.
class Pool {
 public:
  Pool(std::span<const TokenizedDoc> docs, std::span<const LabeledExample> labeled = {}) {
    for (const auto& ex : labeled) add_labeled(ex);
    docs_.reserve(docs.size());
    for (const auto& d : docs) {
      if (labeled_ids_.count(d.doc_id)) continue;
      if (index_.count(d.doc_id)) {
        throw data_error("pool: duplicate doc_id '" + d.doc_id + "'");
      }
      index_.emplace(d.doc_id, docs_.size());
      docs_.push_back({d, vocab_.encode(d.tokens), true});
    }
    remaining_ = docs_.size();
  }

  std::size_t unlabeled_size() const { return remaining_; }
  const std::vector<LabeledExample>& labeled() const { return labeled_; }

  bool is_unlabeled(const std::string& doc_id) const {
    auto it = index_.find(doc_id);
    return it != index_.end() && docs_[it->second].available;
  }

  std::vector<std::string> unlabeled_ids() const {
    std::vector<std::string> ids;
    ids.reserve(remaining_);
    for (const auto& e : docs_) {
      if (e.available) ids.push_back(e.doc.doc_id);
    }
    return ids;
  }

  const TokenizedDoc& doc(const std::string& doc_id) const {
    auto it = index_.find(doc_id);
    if (it == index_.end()) throw data_error("pool: unknown doc_id '" + doc_id + "'");
    return docs_[it->second].doc;
  }

  /// Posteriors for every unlabeled document, in pool order.
  std::vector<ScoredDoc> score(const Classifier& clf) const {
    const CompiledScorer scorer(clf, vocab_);
    std::vector<ScoredDoc> out;
    out.reserve(remaining_);
    for (const auto& e : docs_) {
      if (e.available) out.push_back({e.doc.doc_id, scorer.posterior(e.ids)});
    }
    return out;
  }

  void label(const std::string& doc_id, Label label) {
    auto it = index_.find(doc_id);
    if (it == index_.end() || !docs_[it->second].available) {
      throw data_error("pool: '" + doc_id + "' is not an unlabeled pool document");
    }
    auto& e = docs_[it->second];
    e.available = false;
    --remaining_;
    add_labeled({e.doc.doc_id, e.doc.tokens, label});
  }

 private:
  struct Entry {
    TokenizedDoc doc;
    std::vector<std::uint32_t> ids;
    bool available;
  };

  void add_labeled(const LabeledExample& ex) {
    if (!labeled_ids_.insert(ex.doc_id).second) {
      throw data_error("pool: '" + ex.doc_id + "' labeled twice");
    }
    labeled_.push_back(ex);
  }

  Vocabulary vocab_;
  std::vector<Entry> docs_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::string> labeled_ids_;
  std::vector<LabeledExample> labeled_;
  std::size_t remaining_ = 0;
};

struct IterationLog {
  int iteration = 0;
  std::vector<std::string> selected;
  std::vector<Label> labels;
  std::size_t labeled_size = 0;
  std::string classifier_hash;

  bool operator==(const IterationLog&) const = default;
};

inline nlohmann::json to_json(const IterationLog& log) {
  std::vector<int> labels;
  for (auto l : log.labels) labels.push_back(is_positive(l) ? 1 : 0);
  return {{"iteration", log.iteration},
          {"selected", log.selected},
          {"labels", labels},
          {"labeled_size", log.labeled_size},
          {"classifier", log.classifier_hash}};
}

/// One JSON record per line.
inline void write_iteration_logs(std::ostream& out, std::span<const IterationLog> logs) {
  for (const auto& l : logs) out << to_json(l).dump() << '\n';
}

using Oracle = std::function<Label(const std::string& doc_id)>;

// Called with the initial classifier (iteration 0) and after each retrain.
using IterationObserver =
    std::function<void(int iteration, const Classifier& clf, const Pool& pool)>;

struct ActiveRunResult {
  std::vector<IterationLog> log;
  Classifier classifier;
  std::optional<std::string> aborted;  // oracle failure message
};

inline std::set<std::string> words_of(std::span<const LabeledExample> examples) {
  std::set<std::string> words;
  for (const auto& ex : examples) words.insert(ex.tokens.begin(), ex.tokens.end());
  return words;
}

inline TrainOptions train_options(const SamplingConfig& cfg, std::set<std::string> required) {
  TrainOptions opt;
  opt.required = std::move(required);
  opt.fraction = cfg.fraction;
  opt.loss = cfg.loss;
  opt.mode = cfg.mode;
  return opt;
}

/// Picks the next batch from the pool according to the configured strategy.
/// `random_order` is only consulted by the random strategy.
inline std::vector<std::string> select_batch(const Pool& pool, const Classifier& clf,
                                             const SamplingConfig& cfg,
                                             const std::vector<std::string>& random_order,
                                             std::size_t& random_cursor) {
  if (cfg.strategy == Strategy::random) {
    std::vector<std::string> batch;
    while (batch.size() < static_cast<std::size_t>(cfg.batch_size) &&
           random_cursor < random_order.size()) {
      const auto& id = random_order[random_cursor++];
      if (pool.is_unlabeled(id)) batch.push_back(id);
    }
    return batch;
  }
  const auto scored = pool.score(clf);
  return cfg.strategy == Strategy::uncertainty ? select_uncertain(scored, cfg.batch_size)
                                               : select_relevant(scored, cfg.batch_size);
}

/// Trains on `starting`, then runs up to cfg.iterations select / label /
/// retrain rounds. The words of the starting examples are always kept as
/// features. Stops early when the pool runs dry.
inline ActiveRunResult run_active_loop(std::span<const TokenizedDoc> unlabeled,
                                       const Oracle& oracle,
                                       std::span<const LabeledExample> starting,
                                       const SamplingConfig& cfg,
                                       const IterationObserver& observer = {}) {
  cfg.validate();
  if (starting.empty()) throw usage_error("run_active_loop: empty starting set");
  Pool pool(unlabeled, starting);
  const TrainOptions opt = train_options(cfg, words_of(starting));

  ActiveRunResult result;
  result.classifier = train(pool.labeled(), opt);
  if (observer) observer(0, result.classifier, pool);

  std::vector<std::string> random_order;
  std::size_t random_cursor = 0;
  if (cfg.strategy == Strategy::random) {
    const auto ids = pool.unlabeled_ids();
    random_order = select_random(ids, ids.size(), cfg.seed);
  }

  for (int k = 1; k <= cfg.iterations; ++k) {
    if (pool.unlabeled_size() == 0) break;
    IterationLog entry;
    entry.iteration = k;
    entry.selected = select_batch(pool, result.classifier, cfg, random_order, random_cursor);
    try {
      for (const auto& id : entry.selected) entry.labels.push_back(oracle(id));
    } catch (const std::exception& e) {
      result.aborted = std::string("oracle failed at iteration ") + std::to_string(k) +
                       ": " + e.what();
      return result;
    }
    for (std::size_t i = 0; i < entry.selected.size(); ++i) {
      pool.label(entry.selected[i], entry.labels[i]);
    }
    result.classifier = train(pool.labeled(), opt);
    entry.labeled_size = pool.labeled().size();
    entry.classifier_hash = classifier_hash(result.classifier);
    result.log.push_back(std::move(entry));
    if (observer) observer(k, result.classifier, pool);
  }
  return result;
}

}  // namespace usamp

#endif  // USAMP_SAMPLING_HPP
