#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "usamp/sampling.hpp"
#include "usamp/synthetic.hpp"

using namespace usamp;

namespace {

// Random pool with posteriors drawn from a small grid so ties are common.
std::pair<std::vector<std::string>, std::vector<ScoredDoc>> random_pool(std::mt19937_64& gen,
                                                                        std::size_t n) {
  std::vector<std::string> ids;
  std::uniform_int_distribution<int> coarse(0, 20);
  std::uniform_real_distribution<double> fine(0, 1);
  std::bernoulli_distribution use_grid(0.5), skew(0.2);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(gen() % 100000));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::shuffle(ids.begin(), ids.end(), gen);
  const bool lopsided = skew(gen);
  std::vector<ScoredDoc> pool;
  for (const auto& id : ids) {
    double p = use_grid(gen) ? coarse(gen) / 20.0 : fine(gen);
    if (lopsided) p = p * 0.45;  // nearly everything below 0.5
    pool.push_back({id, p});
  }
  return {std::move(ids), std::move(pool)};
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(SelectUncertain, MatchesBruteForceOnRandomPools) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> size(1, 500);
  std::uniform_int_distribution<int> half(1, 10);
  for (int trial = 0; trial < 200; ++trial) {
    auto [ids, pool] = random_pool(gen, size(gen));
    const int b = 2 * half(gen);
    const auto got = select_uncertain(pool, b);
    EXPECT_EQ(got.size(), std::min<std::size_t>(b, pool.size()));
    EXPECT_EQ(as_set(got), oracle::brute_uncertain(pool, b)) << "trial " << trial;
  }
}

TEST(SelectRelevant, MatchesBruteForceOnRandomPools) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<std::size_t> size(1, 500);
  std::uniform_int_distribution<int> batch(1, 20);
  for (int trial = 0; trial < 200; ++trial) {
    auto [ids, pool] = random_pool(gen, size(gen));
    const int b = batch(gen);
    EXPECT_EQ(as_set(select_relevant(pool, b)), oracle::brute_relevant(pool, b));
  }
}

TEST(SelectUncertain, HalfAboveHalfBelow) {
  const std::vector<ScoredDoc> pool = {{"a", 0.9}, {"b", 0.55}, {"c", 0.5}, {"d", 0.49},
                                       {"e", 0.1}, {"f", 0.3},  {"g", 0.7}};
  EXPECT_EQ(select_uncertain(pool, 4), (std::vector<std::string>{"c", "b", "d", "f"}));
}

TEST(SelectUncertain, DeficitFilledFromOtherSide) {
  const std::vector<ScoredDoc> pool = {{"a", 0.6}, {"b", 0.4}, {"c", 0.2}, {"d", 0.1}};
  EXPECT_EQ(as_set(select_uncertain(pool, 4)), (std::set<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(as_set(select_uncertain(pool, 2)), (std::set<std::string>{"a", "b"}));
  const std::vector<ScoredDoc> low = {{"x", 0.1}, {"y", 0.2}, {"z", 0.3}};
  EXPECT_EQ(as_set(select_uncertain(low, 2)), (std::set<std::string>{"y", "z"}));
}

TEST(SelectUncertain, TiesBrokenByDocId) {
  const std::vector<ScoredDoc> pool = {{"b", 0.6}, {"a", 0.6}, {"d", 0.4}, {"c", 0.4}};
  EXPECT_EQ(select_uncertain(pool, 2), (std::vector<std::string>{"a", "c"}));
}

TEST(SelectUncertain, RejectsOddBatch) {
  const std::vector<ScoredDoc> pool = {{"a", 0.6}};
  EXPECT_THROW(select_uncertain(pool, 3), Error);
  EXPECT_THROW(select_uncertain(pool, 0), Error);
}

TEST(SelectRelevant, TopByPosterior) {
  const std::vector<ScoredDoc> pool = {{"a", 0.2}, {"b", 0.9}, {"c", 0.9}, {"d", 0.5}};
  EXPECT_EQ(select_relevant(pool, 3), (std::vector<std::string>{"b", "c", "d"}));
}

TEST(SelectRandom, NestedPrefixesAndDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 1000; ++i) ids.push_back("d" + std::to_string(i));
  const auto big = select_random(ids, 500, 77);
  const auto small = select_random(ids, 50, 77);
  EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
  EXPECT_EQ(as_set(big).size(), 500u);
  EXPECT_NE(select_random(ids, 50, 78), small);
  EXPECT_THROW(select_random(ids, 1001, 1), Error);
}

TEST(SelectRandom, RoughlyUniform) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(std::to_string(i));
  std::map<std::string, int> hits;
  for (std::uint64_t s = 0; s < 5000; ++s) ++hits[select_random(ids, 1, s)[0]];
  for (const auto& [id, n] : hits) EXPECT_NEAR(n, 500, 90) << id;
}

namespace {

struct Fixture {
  std::vector<TokenizedDoc> docs;
  LabelMap labels;
  std::vector<LabeledExample> starting;
};

Fixture synthetic_fixture(std::size_t size, double prior, std::uint64_t seed = 3) {
  SyntheticCorpusSpec spec;
  spec.size = size;
  spec.prior = prior;
  spec.seed = seed;
  const auto corpus = generate_synthetic_corpus(spec);
  Fixture f;
  f.labels = assign_labels(corpus, synthetic_category());
  for (auto& d : tokenize_all(corpus)) {
    if (f.starting.size() < 3 && is_positive(f.labels.at(d.doc_id))) {
      f.starting.push_back({d.doc_id, d.tokens, Label::positive});
    } else {
      f.docs.push_back(std::move(d));
    }
  }
  return f;
}

}  // namespace

TEST(ActiveLoop, DefaultsEndAt999Labels) {
  const auto f = synthetic_fixture(3000, 0.02);
  SamplingConfig cfg;  // b = 4, 249 iterations
  cfg.iterations = 249;
  std::set<std::string> queried;
  auto oracle = [&](const std::string& id) {
    EXPECT_TRUE(queried.insert(id).second) << "queried twice: " << id;
    return f.labels.at(id);
  };
  const auto r = run_active_loop(f.docs, oracle, f.starting, cfg);
  ASSERT_FALSE(r.aborted);
  ASSERT_EQ(r.log.size(), 249u);
  EXPECT_EQ(r.log.back().labeled_size, 999u);
  EXPECT_EQ(queried.size(), 996u);
  for (std::size_t k = 0; k < r.log.size(); ++k) {
    EXPECT_EQ(r.log[k].labeled_size, 3 + 4 * (k + 1));
  }
}

TEST(ActiveLoop, StopsWhenPoolRunsDry) {
  const auto f = synthetic_fixture(40, 0.2);
  SamplingConfig cfg;
  cfg.strategy = Strategy::relevance;
  cfg.batch_size = 8;
  const auto r = run_active_loop(f.docs, [&](const std::string& id) { return f.labels.at(id); },
                                 f.starting, cfg);
  std::size_t labeled = 0;
  for (const auto& e : r.log) labeled += e.selected.size();
  EXPECT_EQ(labeled, f.docs.size());
  EXPECT_LT(r.log.size(), 249u);
}

TEST(ActiveLoop, ObserverSeesEveryRetrain) {
  const auto f = synthetic_fixture(500, 0.05);
  SamplingConfig cfg;
  cfg.iterations = 7;
  std::vector<int> seen;
  std::vector<std::size_t> pool_sizes;
  run_active_loop(
      f.docs, [&](const std::string& id) { return f.labels.at(id); }, f.starting, cfg,
      [&](int k, const Classifier&, const Pool& pool) {
        seen.push_back(k);
        pool_sizes.push_back(pool.unlabeled_size());
      });
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(pool_sizes.front() - pool_sizes.back(), 28u);
}

TEST(ActiveLoop, DeterministicPerStrategy) {
  const auto f = synthetic_fixture(1500, 0.03);
  for (auto s : {Strategy::uncertainty, Strategy::relevance, Strategy::random}) {
    SamplingConfig cfg;
    cfg.iterations = 20;
    cfg.strategy = s;
    cfg.seed = 99;
    auto oracle = [&](const std::string& id) { return f.labels.at(id); };
    const auto a = run_active_loop(f.docs, oracle, f.starting, cfg);
    const auto b = run_active_loop(f.docs, oracle, f.starting, cfg);
    EXPECT_EQ(a.log, b.log) << to_string(s);
    std::ostringstream sa, sb;
    write_iteration_logs(sa, a.log);
    write_iteration_logs(sb, b.log);
    EXPECT_EQ(sa.str(), sb.str());
  }
}

TEST(ActiveLoop, RandomStrategyFollowsPermutation) {
  const auto f = synthetic_fixture(600, 0.05);
  SamplingConfig cfg;
  cfg.iterations = 10;
  cfg.strategy = Strategy::random;
  cfg.seed = 5;
  const auto r =
      run_active_loop(f.docs, [&](const std::string& id) { return f.labels.at(id); }, f.starting, cfg);
  std::vector<std::string> ids;
  for (const auto& d : f.docs) ids.push_back(d.doc_id);
  const auto expected = select_random(ids, 40, 5);
  std::vector<std::string> got;
  for (const auto& e : r.log) got.insert(got.end(), e.selected.begin(), e.selected.end());
  EXPECT_EQ(got, expected);
}

TEST(ActiveLoop, OracleFailureKeepsPartialLog) {
  const auto f = synthetic_fixture(500, 0.05);
  SamplingConfig cfg;
  cfg.iterations = 10;
  int calls = 0;
  const auto r = run_active_loop(
      f.docs,
      [&](const std::string& id) {
        if (++calls > 13) throw std::runtime_error("teacher left");
        return f.labels.at(id);
      },
      f.starting, cfg);
  ASSERT_TRUE(r.aborted);
  EXPECT_NE(r.aborted->find("teacher left"), std::string::npos);
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(ActiveLoop, UncertaintyLearnsOnDisjointVocabulary) {
  const auto f = synthetic_fixture(4000, 0.05, 8);
  SamplingConfig cfg;
  cfg.iterations = 40;
  const auto r =
      run_active_loop(f.docs, [&](const std::string& id) { return f.labels.at(id); }, f.starting, cfg);
  std::size_t correct = 0;
  for (const auto& d : f.docs) {
    if (decide(posterior(d.tokens, r.classifier), r.classifier.loss) == f.labels.at(d.doc_id)) {
      ++correct;
    }
  }
  EXPECT_GT(static_cast<double>(correct) / f.docs.size(), 0.97);
}

TEST(SamplingConfig, Validation) {
  SamplingConfig cfg;
  cfg.batch_size = 3;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.strategy = Strategy::relevance;
  EXPECT_NO_THROW(cfg.validate());
  cfg.fraction = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(strategy_from_string("uncertainty"), Strategy::uncertainty);
  EXPECT_THROW(strategy_from_string("greedy"), Error);
}

TEST(Pool, ExcludesLabeledAndTracksRemaining) {
  const std::vector<TokenizedDoc> docs = {{"a", {"x"}}, {"b", {"y"}}, {"c", {"z"}}};
  const std::vector<LabeledExample> seed = {{"a", {"x"}, Label::positive}};
  Pool pool(docs, seed);
  EXPECT_EQ(pool.unlabeled_size(), 2u);
  EXPECT_FALSE(pool.is_unlabeled("a"));
  pool.label("b", Label::negative);
  EXPECT_EQ(pool.unlabeled_size(), 1u);
  EXPECT_EQ(pool.labeled().size(), 2u);
  EXPECT_THROW(pool.label("b", Label::negative), Error);
}
