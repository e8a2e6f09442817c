#ifndef USAMP_CLASSIFIER_HPP
#define USAMP_CLASSIFIER_HPP

// Binary Bayes-ratio text classifier with logistic calibration.
//
// Each feature carries a smoothed log likelihood ratio
// log P(w|C)/P(w|not C). A document's score is the sum of the ratios of its
// selected tokens, and P(C|doc) = sigmoid(a + b * score) where (a, b) are
// fitted by penalized maximum likelihood on the training scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "usamp/corpus.hpp"
#include "usamp/error.hpp"

namespace usamp {

struct FeatureCount {
  std::uint64_t positive = 0;
  std::uint64_t negative = 0;
};

struct FeatureCounts {
  std::unordered_map<std::string, FeatureCount> per_feature;
  std::uint64_t positive_tokens = 0;  // N_p
  std::uint64_t negative_tokens = 0;  // N_n

  std::size_t distinct() const { return per_feature.size(); }  // d

  FeatureCount at(const std::string& feature) const {
    auto it = per_feature.find(feature);
    return it == per_feature.end() ? FeatureCount{} : it->second;
  }
};

/// Smoothed ratio P(w|C)/P(w|not C). Each class borrows a pseudo-count
/// proportional to its share of the training tokens, so the estimate stays
/// finite and positive even when one class has no tokens at all.
inline double likelihood_ratio(std::uint64_t c_pos, std::uint64_t c_neg,
                               std::uint64_t n_pos, std::uint64_t n_neg,
                               std::uint64_t distinct) {
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  const double d = static_cast<double>(distinct);
  const double total = np + nn + 1.0;
  const double prior_p = (np + 0.5) / total;
  const double prior_n = (nn + 0.5) / total;
  const double p_pos = (static_cast<double>(c_pos) + prior_p) / (np + d * prior_p);
  const double p_neg = (static_cast<double>(c_neg) + prior_n) / (nn + d * prior_n);
  return p_pos / p_neg;
}

inline double log_likelihood_ratio(std::uint64_t c_pos, std::uint64_t c_neg,
                                   std::uint64_t n_pos, std::uint64_t n_neg,
                                   std::uint64_t distinct) {
  return std::log(likelihood_ratio(c_pos, c_neg, n_pos, n_neg, distinct));
}

struct LikelihoodTable {
  std::unordered_map<std::string, double> log_ratio;
  FeatureCounts counts;

  bool contains(const std::string& feature) const {
    return log_ratio.count(feature) != 0;
  }
  double at(const std::string& feature) const {
    auto it = log_ratio.find(feature);
    return it == log_ratio.end() ? 0.0 : it->second;
  }
};

/// Token counts and log ratios over every distinct token in the labeled set.
inline LikelihoodTable estimate_ratios(std::span<const LabeledExample> labeled) {
  LikelihoodTable table;
  auto& counts = table.counts;
  for (const auto& ex : labeled) {
    const bool pos = is_positive(ex.label);
    for (const auto& tok : ex.tokens) {
      auto& c = counts.per_feature[tok];
      if (pos) {
        ++c.positive;
        ++counts.positive_tokens;
      } else {
        ++c.negative;
        ++counts.negative_tokens;
      }
    }
  }
  if (counts.positive_tokens + counts.negative_tokens == 0) {
    throw data_error("estimate_ratios: labeled set contains no tokens");
  }
  table.log_ratio.reserve(counts.per_feature.size());
  for (const auto& [feature, c] : counts.per_feature) {
    table.log_ratio.emplace(
        feature, log_likelihood_ratio(c.positive, c.negative, counts.positive_tokens,
                                      counts.negative_tokens, counts.distinct()));
  }
  return table;
}

/// (c_pos + c_neg) * log ratio; the sign follows the ratio.
inline double feature_quality(const std::string& feature, const LikelihoodTable& table) {
  const FeatureCount c = table.counts.at(feature);
  return static_cast<double>(c.positive + c.negative) * table.at(feature);
}

struct FeatureSet {
  std::set<std::string> selected;
  std::set<std::string> required;
  double fraction = 0.7;
};

namespace detail {

struct RankedFeature {
  const std::string* feature;
  double magnitude;
};

inline void take_until_fraction(std::vector<RankedFeature>& group, double fraction,
                                std::set<std::string>& out) {
  std::sort(group.begin(), group.end(), [](const RankedFeature& x, const RankedFeature& y) {
    if (x.magnitude != y.magnitude) return x.magnitude > y.magnitude;
    return *x.feature < *y.feature;
  });
  if (fraction >= 1.0) {
    for (const auto& r : group) out.insert(*r.feature);
    return;
  }
  double total = 0.0;
  for (const auto& r : group) total += r.magnitude;
  const double target = fraction * total;
  double cumulative = 0.0;
  for (const auto& r : group) {
    if (cumulative >= target) break;
    out.insert(*r.feature);
    cumulative += r.magnitude;
  }
}

}  // namespace detail

/// Greedy selection by |quality|, done separately for the positive-ratio and
/// negative-ratio groups: take features in descending order until the group's
/// cumulative quality reaches `fraction` of its total. Zero-ratio features
/// are never chosen on merit; required features are always added.
inline FeatureSet select_features(const LikelihoodTable& table,
                                  const std::set<std::string>& required,
                                  double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw usage_error("select_features: fraction must lie in (0, 1]");
  }
  std::vector<detail::RankedFeature> pos_group, neg_group;
  for (const auto& [feature, lr] : table.log_ratio) {
    const double q = feature_quality(feature, table);
    if (q > 0.0) {
      pos_group.push_back({&feature, q});
    } else if (q < 0.0) {
      neg_group.push_back({&feature, -q});
    }
  }
  FeatureSet fs;
  fs.required = required;
  fs.fraction = fraction;
  detail::take_until_fraction(pos_group, fraction, fs.selected);
  detail::take_until_fraction(neg_group, fraction, fs.selected);
  fs.selected.insert(required.begin(), required.end());
  return fs;
}

struct LogisticParams {
  double intercept = 0.0;  // a
  double slope = 1.0;      // b

  bool operator==(const LogisticParams&) const = default;
};

/// l_ij is the loss for deciding class i when the truth is j (1 = C, 2 = not C).
struct LossMatrix {
  double l11 = 0.0;
  double l12 = 1.0;
  double l21 = 1.0;
  double l22 = 0.0;

  static LossMatrix minimum_error() { return {0.0, 1.0, 1.0, 0.0}; }

  void validate() const {
    if (l11 < 0 || l12 < 0 || l21 < 0 || l22 < 0) {
      throw usage_error("loss matrix entries must be non-negative");
    }
    if (l21 < l11 || l12 < l22) {
      throw usage_error("loss matrix: a wrong decision may not cost less than a right one");
    }
  }

  bool operator==(const LossMatrix&) const = default;
};

// How a document's tokens are summed into its score.
enum class ScoreMode { occurrences, presence };

struct Classifier {
  FeatureSet features;
  // Restricted to the selected features. counts keeps the training totals
  // N_p, N_n and d of the full candidate set.
  LikelihoodTable table;
  std::uint64_t distinct_candidates = 0;
  LogisticParams logistic;
  LossMatrix loss;
  ScoreMode mode = ScoreMode::occurrences;
};

namespace detail {

template <typename Token>
const double* find_weight(const Classifier& clf, const Token& tok) {
  auto lookup = [&](const std::string& key) -> const double* {
    auto it = clf.table.log_ratio.find(key);
    return it == clf.table.log_ratio.end() ? nullptr : &it->second;
  };
  if constexpr (std::is_same_v<Token, std::string>) {
    return lookup(tok);
  } else {
    return lookup(std::string(tok));
  }
}

}  // namespace detail

/// Sum of log ratios over the document's selected tokens. Occurrence mode
/// counts repeats; presence mode counts each distinct token once.
template <typename Tokens>
double score(const Tokens& tokens, const Classifier& clf) {
  double s = 0.0;
  if (clf.mode == ScoreMode::occurrences) {
    for (const auto& tok : tokens) {
      if (const double* w = detail::find_weight(clf, tok)) s += *w;
    }
  } else {
    std::unordered_set<std::string> seen;
    for (const auto& tok : tokens) {
      std::string t(tok);
      if (!seen.insert(t).second) continue;
      if (const double* w = detail::find_weight(clf, t)) s += *w;
    }
  }
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double posterior_from_score(double s, const LogisticParams& p) {
  return sigmoid(p.intercept + p.slope * s);
}

template <typename Tokens>
double posterior(const Tokens& tokens, const Classifier& clf) {
  return posterior_from_score(score(tokens, clf), clf.logistic);
}

/// Minimum expected loss decision; equality goes to not-C.
inline Label decide(double p, const LossMatrix& loss) {
  const double loss_if_negative = loss.l21 * p + loss.l22 * (1.0 - p);
  const double loss_if_positive = loss.l11 * p + loss.l12 * (1.0 - p);
  return label_from_bool(loss_if_negative > loss_if_positive);
}

struct ScoredPoint {
  double score = 0.0;
  Label label = Label::negative;
};

struct LogisticFitOptions {
  double ridge = 1e-6;
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
};

struct LogisticFit {
  LogisticParams params;
  int iterations = 0;
  double gradient_max_norm = 0.0;
  bool converged = false;
  bool one_class = false;
};

/// Penalized log-likelihood sum[y z - log(1+e^z)] - ridge (a^2 + b^2),
/// z = a + b x.
inline double logistic_objective(std::span<const ScoredPoint> points,
                                 const LogisticParams& p, double ridge) {
  double ll = 0.0;
  for (const auto& pt : points) {
    const double z = p.intercept + p.slope * pt.score;
    ll += (is_positive(pt.label) ? z : 0.0) - softplus(z);
  }
  return ll - ridge * (p.intercept * p.intercept + p.slope * p.slope);
}

struct LogisticDerivatives {
  double grad_a = 0.0, grad_b = 0.0;
  double h_aa = 0.0, h_ab = 0.0, h_bb = 0.0;  // Hessian (negative definite)
};

inline LogisticDerivatives logistic_derivatives(std::span<const ScoredPoint> points,
                                                const LogisticParams& p, double ridge) {
  LogisticDerivatives d;
  for (const auto& pt : points) {
    const double x = pt.score;
    const double mu = sigmoid(p.intercept + p.slope * x);
    const double r = (is_positive(pt.label) ? 1.0 : 0.0) - mu;
    const double w = mu * (1.0 - mu);
    d.grad_a += r;
    d.grad_b += r * x;
    d.h_aa -= w;
    d.h_ab -= w * x;
    d.h_bb -= w * x * x;
  }
  d.grad_a -= 2.0 * ridge * p.intercept;
  d.grad_b -= 2.0 * ridge * p.slope;
  d.h_aa -= 2.0 * ridge;
  d.h_bb -= 2.0 * ridge;
  return d;
}

/// Newton-Raphson with backtracking on the ridge-penalized likelihood.
/// A one-class point set cannot be calibrated and yields (a, b) = (0, 1).
inline LogisticFit fit_logistic_report(std::span<const ScoredPoint> points,
                                       const LogisticFitOptions& opt = {}) {
  if (points.empty()) throw data_error("fit_logistic: no points");
  bool any_pos = false, any_neg = false;
  for (const auto& pt : points) {
    if (!std::isfinite(pt.score)) throw data_error("fit_logistic: non-finite score");
    (is_positive(pt.label) ? any_pos : any_neg) = true;
  }
  LogisticFit fit;
  if (!(any_pos && any_neg)) {
    fit.params = LogisticParams{0.0, 1.0};
    fit.converged = true;
    fit.one_class = true;
    return fit;
  }

  LogisticParams cur{0.0, 0.0};
  double obj = logistic_objective(points, cur, opt.ridge);
  for (int iter = 0;; ++iter) {
    const auto d = logistic_derivatives(points, cur, opt.ridge);
    fit.gradient_max_norm = std::max(std::abs(d.grad_a), std::abs(d.grad_b));
    fit.iterations = iter;
    if (fit.gradient_max_norm < opt.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    if (iter >= opt.max_iterations) break;
    // Solve H step = -g for the 2x2 system.
    const double det = d.h_aa * d.h_bb - d.h_ab * d.h_ab;
    double step_a = -(d.h_bb * d.grad_a - d.h_ab * d.grad_b) / det;
    double step_b = -(-d.h_ab * d.grad_a + d.h_aa * d.grad_b) / det;
    double t = 1.0;
    LogisticParams next;
    double next_obj;
    bool improved = false;
    // Near the optimum the predicted gain falls below the rounding error of
    // the objective, so comparing objectives says nothing: take the step.
    const double predicted_gain = 0.5 * (d.grad_a * step_a + d.grad_b * step_b);
    if (std::abs(predicted_gain) <= 1e-13 * (1.0 + std::abs(obj))) {
      next = {cur.intercept + step_a, cur.slope + step_b};
      if (next == cur) break;
      cur = next;
      obj = logistic_objective(points, cur, opt.ridge);
      continue;
    }
    for (int k = 0; k < 60; ++k) {
      next = {cur.intercept + t * step_a, cur.slope + t * step_b};
      next_obj = logistic_objective(points, next, opt.ridge);
      if (next_obj >= obj) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved || (next == cur)) break;
    cur = next;
    obj = next_obj;
  }
  fit.params = cur;
  return fit;
}

inline LogisticParams fit_logistic(std::span<const ScoredPoint> points,
                                   const LogisticFitOptions& opt = {}) {
  return fit_logistic_report(points, opt).params;
}

struct TrainOptions {
  std::set<std::string> required;
  double fraction = 0.7;
  LossMatrix loss = LossMatrix::minimum_error();
  ScoreMode mode = ScoreMode::occurrences;
};

/// Estimate ratios, select features, score every training example and fit
/// the calibration. Examples are processed in doc_id order, so the result
/// does not depend on the order of `labeled`.
inline Classifier train(std::span<const LabeledExample> labeled,
                        const TrainOptions& opt = {}) {
  if (labeled.empty()) throw data_error("train: empty labeled set");
  opt.loss.validate();

  std::vector<LabeledExample> ordered(labeled.begin(), labeled.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LabeledExample& x, const LabeledExample& y) {
                     return x.doc_id < y.doc_id;
                   });

  const LikelihoodTable full = estimate_ratios(ordered);
  Classifier clf;
  clf.features = select_features(full, opt.required, opt.fraction);
  clf.loss = opt.loss;
  clf.mode = opt.mode;
  clf.distinct_candidates = full.counts.distinct();
  clf.table.counts.positive_tokens = full.counts.positive_tokens;
  clf.table.counts.negative_tokens = full.counts.negative_tokens;
  for (const auto& f : clf.features.selected) {
    const FeatureCount c = full.counts.at(f);
    clf.table.counts.per_feature.emplace(f, c);
    // Required features unseen in training still get a finite smoothed ratio.
    clf.table.log_ratio.emplace(
        f, full.contains(f) ? full.at(f)
                            : log_likelihood_ratio(0, 0, full.counts.positive_tokens,
                                                   full.counts.negative_tokens,
                                                   full.counts.distinct()));
  }

  std::vector<ScoredPoint> points;
  points.reserve(ordered.size());
  for (const auto& ex : ordered) points.push_back({score(ex.tokens, clf), ex.label});
  clf.logistic = fit_logistic(points);
  return clf;
}

/// Dense-weight scorer over an interned vocabulary. Produces exactly the
/// same sums as score() for documents encoded with the same vocabulary.
class Vocabulary {
 public:
  std::uint32_t intern(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<std::uint32_t>(words_.size()));
    if (inserted) words_.push_back(token);
    return it->second;
  }

  std::vector<std::uint32_t> encode(const std::vector<std::string>& tokens) {
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(intern(t));
    return out;
  }

  const std::string* find_word(std::uint32_t id) const {
    return id < words_.size() ? &words_[id] : nullptr;
  }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> words_;
};

class CompiledScorer {
 public:
  CompiledScorer(const Classifier& clf, const Vocabulary& vocab)
      : weights_(vocab.size(), 0.0),
        active_(vocab.size(), 0),
        mode_(clf.mode),
        logistic_(clf.logistic) {
    const auto& words = vocab.words();
    for (std::size_t i = 0; i < words.size(); ++i) {
      auto it = clf.table.log_ratio.find(words[i]);
      if (it != clf.table.log_ratio.end()) {
        weights_[i] = it->second;
        active_[i] = 1;
      }
    }
  }

  double score(std::span<const std::uint32_t> ids) const {
    double s = 0.0;
    if (mode_ == ScoreMode::occurrences) {
      for (auto id : ids) {
        if (id < weights_.size() && active_[id]) s += weights_[id];
      }
    } else {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto id = ids[i];
        if (id >= weights_.size() || !active_[id]) continue;
        if (std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i), id) !=
            ids.begin() + static_cast<std::ptrdiff_t>(i)) {
          continue;
        }
        s += weights_[id];
      }
    }
    return s;
  }

  double posterior(std::span<const std::uint32_t> ids) const {
    return posterior_from_score(score(ids), logistic_);
  }

 private:
  std::vector<double> weights_;
  std::vector<char> active_;
  ScoreMode mode_;
  LogisticParams logistic_;
};

}  // namespace usamp

#endif  // USAMP_CLASSIFIER_HPP
