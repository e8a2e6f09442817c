#ifndef USAMP_SYNTHETIC_HPP
#define USAMP_SYNTHETIC_HPP

// Synthetic title corpora for desk-scale experiments. Titles mix Zipf-
// distributed background words with words from a separate topic
// vocabulary; members of the category lean on topic words. The keyword
// column carries the true label so the ordinary keyword-substring
// categories act as the oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "usamp/corpus.hpp"
#include "usamp/error.hpp"
#include "usamp/rng.hpp"

namespace usamp {

struct SyntheticCorpusSpec {
  std::size_t size = 60000;
  double prior = 0.002;
  // Topic words: `shared_topic_words` generic ones, then the rest split
  // evenly into `subtopics` groups.
  std::size_t topic_vocabulary = 300;
  std::size_t shared_topic_words = 20;
  std::size_t subtopics = 1;
  std::size_t background_vocabulary = 20000;
  double zipf_exponent = 1.0;
  int min_length = 4;
  int max_length = 12;
  // Probability that a token of a member title is a topic word, and the
  // share of those topic tokens that are generic rather than subtopic words.
  double topic_rate = 0.35;
  double shared_share = 0.3;
  // Fraction of non-members that also use generic topic words (at
  // topic_rate); 0 keeps the class vocabularies disjoint.
  double confuser_fraction = 0.0;
  // Confusers also draw from their own context vocabulary at this rate.
  std::size_t confuser_vocabulary = 0;
  double confuser_context_rate = 0.0;
  // Each member's topic rate is drawn uniformly from
  // [topic_rate (1 - spread), min(1, topic_rate (1 + spread))].
  double topic_rate_spread = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (size == 0) throw usage_error("synthetic corpus: size must be positive");
    if (!(prior > 0.0 && prior <= 0.5)) {
      throw usage_error("synthetic corpus: prior must lie in (0, 0.5]");
    }
    if (background_vocabulary == 0 || subtopics == 0) {
      throw usage_error("synthetic corpus: vocabularies must be non-empty");
    }
    if (shared_topic_words == 0 || topic_vocabulary < shared_topic_words + subtopics) {
      throw usage_error("synthetic corpus: topic vocabulary too small for its groups");
    }
    if (min_length < 1 || max_length < min_length) {
      throw usage_error("synthetic corpus: bad title length range");
    }
    if (confuser_context_rate > 0 && confuser_vocabulary == 0) {
      throw usage_error("synthetic corpus: confuser context needs a vocabulary");
    }
    for (double r : {topic_rate, shared_share, confuser_fraction, confuser_context_rate,
                     topic_rate_spread}) {
      if (r < 0 || r > 1) throw usage_error("synthetic corpus: rates must lie in [0, 1]");
    }
    if (!(zipf_exponent >= 0.0)) throw usage_error("synthetic corpus: bad Zipf exponent");
  }
};

inline constexpr const char* kSyntheticPositiveKeyword = "SynthTopic";

inline CategorySpec synthetic_category() { return {"topic", {"synthtopic"}}; }

namespace detail {

// Pronounceable word for an index. Background words never start with 'z'
// or 'q'; topic words start with 'z' and confuser context words with 'q'.
inline std::string make_word(std::size_t index, const char* prefix = "") {
  static const char* consonants = "bdfgklmnprstv";
  static const char* vowels = "aeiou";
  std::string w = prefix;
  std::size_t x = index;
  do {
    w.push_back(consonants[x % 13]);
    x /= 13;
    w.push_back(vowels[x % 5]);
    x /= 5;
  } while (x > 0);
  return w;
}

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cdf_[i] = total;
    }
    for (auto& c : cdf_) c /= total;
  }

  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return it == cdf_.end() ? cdf_.size() - 1
                            : static_cast<std::size_t>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace detail

/// Deterministic per seed. Doc ids are zero-padded so id order equals
/// generation order.
inline std::vector<Document> generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<std::string> shared_words, background_words;
  std::vector<std::vector<std::string>> subtopic_words(spec.subtopics);
  for (std::size_t i = 0; i < spec.topic_vocabulary; ++i) {
    auto w = detail::make_word(i, "z");
    if (i < spec.shared_topic_words) {
      shared_words.push_back(std::move(w));
    } else {
      subtopic_words[(i - spec.shared_topic_words) % spec.subtopics].push_back(std::move(w));
    }
  }
  for (std::size_t i = 0; i < spec.background_vocabulary; ++i) {
    background_words.push_back(detail::make_word(i));
  }
  std::vector<std::string> context_words;
  for (std::size_t i = 0; i < spec.confuser_vocabulary; ++i) {
    context_words.push_back(detail::make_word(i, "q"));
  }
  const detail::ZipfSampler context_sampler(context_words.size(), spec.zipf_exponent);
  const detail::ZipfSampler shared_sampler(shared_words.size(), spec.zipf_exponent);
  const detail::ZipfSampler subtopic_sampler(subtopic_words[0].size(), spec.zipf_exponent);
  const detail::ZipfSampler background_sampler(background_words.size(), spec.zipf_exponent);
  static const char* negative_keywords[] = {"Politics", "Markets", "Weather", "Sports",
                                            "Courts", "Health"};

  std::vector<Document> docs;
  docs.reserve(spec.size);
  const int width = static_cast<int>(std::to_string(spec.size).size());
  for (std::size_t i = 0; i < spec.size; ++i) {
    const bool positive = rng.uniform() < spec.prior;
    const bool confuser = !positive && rng.uniform() < spec.confuser_fraction;
    const std::size_t subtopic = positive ? rng.below(spec.subtopics) : 0;
    const auto span = static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1);
    const int length = spec.min_length + static_cast<int>(rng.below(span));
    double rate = spec.topic_rate;
    if (positive && spec.topic_rate_spread > 0) {
      const double lo = spec.topic_rate * (1 - spec.topic_rate_spread);
      const double hi = std::min(1.0, spec.topic_rate * (1 + spec.topic_rate_spread));
      rate = lo + (hi - lo) * rng.uniform();
    }
    std::string title;
    for (int t = 0; t < length; ++t) {
      std::string w;
      if (confuser && spec.confuser_context_rate > 0 &&
          rng.uniform() < spec.confuser_context_rate) {
        w = context_words[context_sampler(rng)];
      } else if ((positive || confuser) && rng.uniform() < rate) {
        if (confuser || rng.uniform() < spec.shared_share) {
          w = shared_words[shared_sampler(rng)];
        } else {
          const auto& group = subtopic_words[subtopic];
          w = group[std::min(subtopic_sampler(rng), group.size() - 1)];
        }
      } else {
        w = background_words[background_sampler(rng)];
      }
      w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (!title.empty()) title.push_back(' ');
      title += w;
    }
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", width, i);
    std::string keyword = positive ? kSyntheticPositiveKeyword
                                   : negative_keywords[rng.below(std::size(negative_keywords))];
    docs.push_back({id, std::move(keyword), std::move(title)});
  }
  return docs;
}

}  // namespace usamp

#endif  // USAMP_SYNTHETIC_HPP
