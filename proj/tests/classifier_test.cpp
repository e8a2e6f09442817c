#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "usamp/classifier.hpp"
#include "usamp/classifier_io.hpp"
#include "usamp/synthetic.hpp"

using namespace usamp;

TEST(LikelihoodRatio, HandWorkedExample) {
  // N_p = 6, N_n = 0, d = 4, c_p = 2, c_n = 0 gives 41/34.
  EXPECT_NEAR(likelihood_ratio(2, 0, 6, 0, 4), 41.0 / 34.0, 1e-12);
  EXPECT_NEAR(oracle::exact_ratio(2, 0, 6, 0, 4), 41.0 / 34.0, 1e-12);
}

TEST(LikelihoodRatio, SymmetricCountsGiveOne) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::uint64_t> small(0, 50), big(0, 100000);
  for (int i = 0; i < 1000; ++i) {
    const auto n = big(gen), c = std::min(small(gen), n);
    const auto d = small(gen) + 1;
    EXPECT_DOUBLE_EQ(likelihood_ratio(c, c, n, n, d), 1.0);
  }
}

TEST(LikelihoodRatio, MatchesExactFractionOnRandomCounts) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::uint64_t> tot(0, 200000), dd(1, 50000);
  for (int i = 0; i < 10000; ++i) {
    std::uint64_t np = tot(gen), nn = tot(gen);
    if (i % 10 == 0) np = 0;
    if (i % 10 == 1) nn = 0;
    const auto cp = np == 0 ? 0 : gen() % (np + 1);
    const auto cn = nn == 0 ? 0 : gen() % (nn + 1);
    const auto d = dd(gen);
    const double r = likelihood_ratio(cp, cn, np, nn, d);
    ASSERT_TRUE(std::isfinite(r));
    ASSERT_GT(r, 0.0);
    ASSERT_NEAR(r, oracle::exact_ratio(cp, cn, np, nn, d), 1e-10 * r);
  }
}

TEST(LikelihoodRatio, MonotoneInCounts) {
  for (std::uint64_t c = 0; c < 20; ++c) {
    EXPECT_LT(likelihood_ratio(c, 3, 100, 100, 40), likelihood_ratio(c + 1, 3, 100, 100, 40));
    EXPECT_GT(likelihood_ratio(3, c, 100, 100, 40), likelihood_ratio(3, c + 1, 100, 100, 40));
  }
}

namespace {

LabeledExample ex(std::string id, std::vector<std::string> toks, Label l) {
  return {std::move(id), std::move(toks), l};
}

}  // namespace

TEST(EstimateRatios, CountsTokensWithMultiplicity) {
  const std::vector<LabeledExample> data = {
      ex("a", {"bond", "bond", "sale"}, Label::positive),
      ex("b", {"rate", "cut", "sale"}, Label::negative)};
  const auto t = estimate_ratios(data);
  EXPECT_EQ(t.counts.positive_tokens, 3u);
  EXPECT_EQ(t.counts.negative_tokens, 3u);
  EXPECT_EQ(t.counts.distinct(), 4u);
  EXPECT_EQ(t.counts.at("bond").positive, 2u);
  EXPECT_NEAR(t.at("bond"), std::log(oracle::exact_ratio(2, 0, 3, 3, 4)), 1e-12);
  EXPECT_NEAR(t.at("sale"), 0.0, 1e-12);
}

TEST(EstimateRatios, AllPositiveExample) {
  // Six positive tokens over four distinct words, no negatives.
  const std::vector<LabeledExample> data = {
      ex("a", {"w1", "w1", "w2", "w3"}, Label::positive),
      ex("b", {"w2", "w4"}, Label::positive)};
  const auto t = estimate_ratios(data);
  EXPECT_NEAR(std::exp(t.at("w1")), 41.0 / 34.0, 1e-12);
}

TEST(EstimateRatios, NoTokensIsAnError) {
  const std::vector<LabeledExample> data = {ex("a", {}, Label::positive)};
  EXPECT_THROW(estimate_ratios(data), Error);
}

TEST(FeatureQuality, CountTimesLogRatio) {
  LikelihoodTable t;
  t.counts.per_feature["w"] = {4, 2};
  t.log_ratio["w"] = std::log(2.0);
  EXPECT_NEAR(feature_quality("w", t), 6 * std::log(2.0), 1e-12);
  EXPECT_NEAR(feature_quality("w", t), 4.15888, 1e-5);
  t.log_ratio["w"] = -std::log(2.0);
  EXPECT_LT(feature_quality("w", t), 0.0);
}

namespace {

LikelihoodTable table_with_qualities(const std::vector<std::pair<std::string, double>>& q) {
  LikelihoodTable t;
  for (const auto& [f, v] : q) {
    t.counts.per_feature[f] = {1, 0};
    t.log_ratio[f] = v;  // count 1 makes quality equal the log ratio
  }
  return t;
}

}  // namespace

TEST(SelectFeatures, TakesUntilFractionReached) {
  const auto t = table_with_qualities({{"a", 5}, {"b", 3}, {"c", 1}, {"d", 1}});
  // Total 10, target 7: a (5) then b (8) reaches it.
  EXPECT_EQ(select_features(t, {}, 0.7).selected, (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(select_features(t, {}, 0.5).selected, (std::set<std::string>{"a"}));
  EXPECT_EQ(select_features(t, {}, 1.0).selected.size(), 4u);
}

TEST(SelectFeatures, GroupsBySign) {
  const auto t = table_with_qualities({{"p1", 4}, {"p2", 1}, {"n1", -2}, {"n2", -2}, {"z", 0}});
  const auto fs = select_features(t, {}, 0.6);
  // Positive: 4 >= 3. Negative: ties broken by name, 2 < 2.4 so both.
  EXPECT_EQ(fs.selected, (std::set<std::string>{"n1", "n2", "p1"}));
  EXPECT_EQ(select_features(t, {}, 1.0).selected.count("z"), 0u);
}

TEST(SelectFeatures, RequiredAlwaysIncluded) {
  const auto t = table_with_qualities({{"a", 5}, {"b", 3}});
  const auto fs = select_features(t, {"b", "unseen"}, 0.1);
  EXPECT_EQ(fs.selected, (std::set<std::string>{"a", "b", "unseen"}));
  EXPECT_EQ(fs.required, (std::set<std::string>{"b", "unseen"}));
}

TEST(SelectFeatures, MonotoneInFraction) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<std::string, double>> q;
    for (int i = 0; i < 60; ++i) q.emplace_back("f" + std::to_string(i), nd(gen));
    const auto t = table_with_qualities(q);
    std::set<std::string> prev;
    for (double f = 0.05; f <= 1.0; f += 0.05) {
      const auto cur = select_features(t, {}, f).selected;
      for (const auto& x : prev) ASSERT_TRUE(cur.count(x)) << x << " dropped at " << f;
      prev = cur;
    }
  }
}

TEST(SelectFeatures, RejectsBadFraction) {
  const auto t = table_with_qualities({{"a", 1}});
  EXPECT_THROW(select_features(t, {}, 0.0), Error);
  EXPECT_THROW(select_features(t, {}, 1.5), Error);
}

TEST(Logistic, MatchesGridOracle) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = oracle::overlapping_points(gen);
    const auto fit = fit_logistic_report(pts);
    ASSERT_TRUE(fit.converged);
    const auto [a, b] = oracle::grid_maximizer(pts);
    EXPECT_NEAR(fit.params.intercept, a, 1e-3);
    EXPECT_NEAR(fit.params.slope, b, 1e-3);
  }
}

TEST(Logistic, ConvergesWhenGainIsBelowRounding) {
  // Seeds that once stalled a few 1e-8 short of the gradient tolerance.
  std::mt19937_64 gen(202);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fit = fit_logistic_report(oracle::overlapping_points(gen));
    gen();
    gen();
    EXPECT_TRUE(fit.converged) << trial << " gradient " << fit.gradient_max_norm;
  }
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-3, 3);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = oracle::overlapping_points(gen);
    const LogisticParams p{u(gen), u(gen)};
    const auto d = logistic_derivatives(pts, p, 1e-6);
    auto f = [&](double a, double b) { return oracle::penalized_loglik(pts, a, b); };
    const double fd_a = (f(p.intercept + h, p.slope) - f(p.intercept - h, p.slope)) / (2 * h);
    const double fd_b = (f(p.intercept, p.slope + h) - f(p.intercept, p.slope - h)) / (2 * h);
    EXPECT_NEAR(d.grad_a, fd_a, 1e-4 * std::max(1.0, std::abs(fd_a)));
    EXPECT_NEAR(d.grad_b, fd_b, 1e-4 * std::max(1.0, std::abs(fd_b)));
  }
}

TEST(Logistic, ObjectiveMatchesIndependentSum) {
  std::mt19937_64 gen(8);
  const auto pts = oracle::overlapping_points(gen);
  EXPECT_NEAR(logistic_objective(pts, {0.3, -1.2}, 1e-6),
              oracle::penalized_loglik(pts, 0.3, -1.2), 1e-9);
}

TEST(Logistic, OneClassFallsBackToIdentity) {
  const std::vector<ScoredPoint> pts = {{1.0, Label::positive}, {2.0, Label::positive}};
  const auto fit = fit_logistic_report(pts);
  EXPECT_TRUE(fit.one_class);
  EXPECT_EQ(fit.params, (LogisticParams{0.0, 1.0}));
}

TEST(Logistic, SeparableDataStaysFinite) {
  const std::vector<ScoredPoint> pts = {
      {-2.0, Label::negative}, {-1.0, Label::negative}, {1.0, Label::positive}, {3.0, Label::positive}};
  const auto p = fit_logistic(pts);
  EXPECT_TRUE(std::isfinite(p.intercept));
  EXPECT_TRUE(std::isfinite(p.slope));
  EXPECT_GT(p.slope, 0.0);
}

TEST(Logistic, RejectsNonFiniteScores) {
  const std::vector<ScoredPoint> pts = {{NAN, Label::negative}, {1.0, Label::positive}};
  EXPECT_THROW(fit_logistic(pts), Error);
}

TEST(Posterior, BayesFormEqualsLogisticForm) {
  // P(C|W) = e^(a + b s) / (1 + e^(a + b s)) written as a normalized ratio of
  // class-conditional terms.
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(gen), b = u(gen) / 5, s = u(gen);
    const long double e = std::exp(static_cast<long double>(a + b * s));
    const double expected = static_cast<double>(e / (1 + e));
    EXPECT_NEAR(posterior_from_score(s, {a, b}), expected, 1e-12);
  }
}

TEST(Posterior, SigmoidExtremes) {
  EXPECT_EQ(sigmoid(-1000), 0.0);
  EXPECT_EQ(sigmoid(1000), 1.0);
  EXPECT_TRUE(std::isfinite(softplus(1000)));
  EXPECT_NEAR(softplus(0), std::log(2.0), 1e-15);
}

TEST(Decide, ZeroOneLossIsHalfThreshold) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(0, 1);
  const auto loss = LossMatrix::minimum_error();
  for (int i = 0; i < 10000; ++i) {
    const double p = u(gen);
    ASSERT_EQ(decide(p, loss), label_from_bool(p > 0.5));
  }
  EXPECT_EQ(decide(0.5, loss), Label::negative);
}

TEST(Decide, AsymmetricLossSwitchesAtOneEleventh) {
  const LossMatrix loss{0, 1, 10, 0};
  const double t = 1.0 / 11.0;
  EXPECT_EQ(decide(t - 1e-12, loss), Label::negative);
  EXPECT_EQ(decide(t + 1e-12, loss), Label::positive);
}

TEST(Train, ScoresSumLogRatios) {
  const std::vector<LabeledExample> data = {
      ex("a", {"bond", "sale"}, Label::positive), ex("b", {"bond", "rate"}, Label::positive),
      ex("c", {"rate", "cut"}, Label::negative), ex("d", {"weather", "cut"}, Label::negative)};
  TrainOptions opt;
  opt.fraction = 1.0;
  const auto clf = train(data, opt);
  const auto full = estimate_ratios(data);
  const double s = score(std::vector<std::string>{"bond", "bond", "cut", "zzz"}, clf);
  EXPECT_NEAR(s, 2 * full.at("bond") + full.at("cut"), 1e-12);
  opt.mode = ScoreMode::presence;
  const auto pres = train(data, opt);
  EXPECT_NEAR(score(std::vector<std::string>{"bond", "bond", "cut"}, pres),
              full.at("bond") + full.at("cut"), 1e-12);
}

TEST(Train, OrderIndependent) {
  std::vector<LabeledExample> data = {
      ex("a", {"x", "y"}, Label::positive), ex("b", {"y", "z"}, Label::negative),
      ex("c", {"x", "w"}, Label::positive), ex("d", {"w", "z", "z"}, Label::negative)};
  const auto h1 = classifier_hash(train(data));
  std::reverse(data.begin(), data.end());
  EXPECT_EQ(classifier_hash(train(data)), h1);
}

TEST(Train, RequiredUnseenWordGetsFiniteWeight) {
  const std::vector<LabeledExample> data = {ex("a", {"x"}, Label::positive),
                                            ex("b", {"y"}, Label::negative)};
  TrainOptions opt;
  opt.required = {"never"};
  const auto clf = train(data, opt);
  ASSERT_TRUE(clf.table.contains("never"));
  EXPECT_TRUE(std::isfinite(clf.table.at("never")));
}

TEST(CompiledScorer, MatchesStringScoring) {
  SyntheticCorpusSpec spec;
  spec.size = 1000;
  spec.prior = 0.1;
  const auto docs = tokenize_all(generate_synthetic_corpus(spec));
  const auto labels = assign_labels(generate_synthetic_corpus(spec), synthetic_category());
  std::vector<LabeledExample> data;
  for (std::size_t i = 0; i < 300; ++i) {
    data.push_back({docs[i].doc_id, docs[i].tokens, labels.at(docs[i].doc_id)});
  }
  for (auto mode : {ScoreMode::occurrences, ScoreMode::presence}) {
    TrainOptions opt;
    opt.mode = mode;
    const auto clf = train(data, opt);
    Vocabulary vocab;
    std::vector<std::vector<std::uint32_t>> enc;
    for (const auto& d : docs) enc.push_back(vocab.encode(d.tokens));
    const CompiledScorer cs(clf, vocab);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      ASSERT_EQ(cs.score(enc[i]), score(docs[i].tokens, clf));
    }
  }
}

TEST(ClassifierExport, RoundTripPreservesDecisions) {
  SyntheticCorpusSpec spec;
  spec.size = 1500;
  spec.prior = 0.05;
  const auto corpus = generate_synthetic_corpus(spec);
  const auto docs = tokenize_all(corpus);
  const auto labels = assign_labels(corpus, synthetic_category());
  std::vector<LabeledExample> data;
  for (std::size_t i = 0; i < 500; ++i) {
    data.push_back({docs[i].doc_id, docs[i].tokens, labels.at(docs[i].doc_id)});
  }
  TrainOptions opt;
  opt.required = {"never", "seen"};
  const auto clf = train(data, opt);
  const auto back = import_classifier(nlohmann::json::parse(export_classifier(clf).dump()));
  EXPECT_EQ(classifier_hash(back), classifier_hash(clf));
  for (std::size_t i = 500; i < docs.size(); ++i) {
    ASSERT_EQ(posterior(docs[i].tokens, back), posterior(docs[i].tokens, clf));
    ASSERT_EQ(decide(posterior(docs[i].tokens, back), back.loss),
              decide(posterior(docs[i].tokens, clf), clf.loss));
  }
}

TEST(ClassifierExport, RejectsWrongFormat) {
  nlohmann::json j = {{"format", "something-else"}};
  EXPECT_THROW(import_classifier(j), Error);
}
