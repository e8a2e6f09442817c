#ifndef USAMP_HARNESS_HPP
#define USAMP_HARNESS_HPP

// Simulated-teacher experiments: for every (category, strategy, run) triple
// draw a starting subsample of three positives, run uncertainty or relevance
// sampling (or train on nested random samples), evaluate the snapshots on
// the held-out test set and append one CSV row per evaluated classifier.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "usamp/classifier.hpp"
#include "usamp/corpus.hpp"
#include "usamp/error.hpp"
#include "usamp/evaluation.hpp"
#include "usamp/rng.hpp"
#include "usamp/sampling.hpp"

namespace usamp {

// ---------------------------------------------------------------------------
// Test-label audit

enum class Phase { idle, training, evaluation };

namespace detail {
inline thread_local Phase current_phase = Phase::idle;
}

class ScopedPhase {
 public:
  explicit ScopedPhase(Phase p) : saved_(detail::current_phase) { detail::current_phase = p; }
  ~ScopedPhase() { detail::current_phase = saved_; }
  ScopedPhase(const ScopedPhase&) = delete;
  ScopedPhase& operator=(const ScopedPhase&) = delete;

 private:
  Phase saved_;
};

/// Held-out labels that count every read by the phase it happened in.
class AuditedLabels {
 public:
  AuditedLabels() = default;
  explicit AuditedLabels(LabelMap labels) : labels_(std::move(labels)) {}
  AuditedLabels(const AuditedLabels& o) : labels_(o.labels_) {}
  AuditedLabels& operator=(const AuditedLabels& o) {
    labels_ = o.labels_;
    return *this;
  }

  Label read(const std::string& doc_id) const {
    switch (detail::current_phase) {
      case Phase::training: ++reads_training_; break;
      case Phase::evaluation: ++reads_evaluation_; break;
      case Phase::idle: ++reads_idle_; break;
    }
    auto it = labels_.find(doc_id);
    if (it == labels_.end()) throw data_error("no held-out label for '" + doc_id + "'");
    return it->second;
  }

  bool contains(const std::string& doc_id) const { return labels_.count(doc_id) != 0; }
  std::size_t size() const { return labels_.size(); }

  std::uint64_t reads_during_training() const { return reads_training_; }
  std::uint64_t reads_during_evaluation() const { return reads_evaluation_; }
  std::uint64_t reads_outside_phases() const { return reads_idle_; }

 private:
  LabelMap labels_;
  mutable std::atomic<std::uint64_t> reads_training_{0};
  mutable std::atomic<std::uint64_t> reads_evaluation_{0};
  mutable std::atomic<std::uint64_t> reads_idle_{0};
};

// ---------------------------------------------------------------------------
// Data

struct CategoryLabels {
  LabelMap train;         // the simulated teacher
  AuditedLabels test;     // evaluation only
};

struct ExperimentData {
  std::vector<TokenizedDoc> train;
  std::vector<TokenizedDoc> test;
  std::map<std::string, CategoryLabels> labels;
};

/// Splits the corpus, tokenizes both sides and materializes the label maps
/// of every category.
inline ExperimentData prepare_experiment(const std::vector<Document>& corpus,
                                         const std::vector<CategorySpec>& categories,
                                         double test_fraction, std::uint64_t split_seed) {
  const auto parts = split(corpus, test_fraction, split_seed);
  ExperimentData data;
  data.train = tokenize_all(parts.train);
  data.test = tokenize_all(parts.test);
  for (const auto& spec : categories) {
    auto& cl = data.labels[spec.name];
    cl.train = assign_labels(parts.train, spec);
    cl.test = AuditedLabels(assign_labels(parts.test, spec));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Plan

struct ExperimentPlan {
  std::vector<CategorySpec> categories;
  std::vector<Strategy> strategies{Strategy::uncertainty, Strategy::relevance,
                                   Strategy::random};
  int starts = 10;
  int runs_per_start = 2;
  SamplingConfig sampling;
  // Total training-set sizes for the random strategy (starting examples
  // included). Defaults to random_size_schedule(train size).
  std::optional<std::vector<std::size_t>> random_sizes;
  // Iterations evaluated for the sequential strategies. Defaults to
  // evaluation_schedule(sampling.iterations).
  std::optional<std::set<int>> evaluation_iterations;
  std::uint64_t master_seed = 0;
  int jobs = 1;

  void validate() const {
    if (categories.empty()) throw usage_error("plan: no categories");
    if (strategies.empty()) throw usage_error("plan: no strategies");
    if (starts < 1) throw usage_error("plan: starts must be positive");
    if (runs_per_start < 1) throw usage_error("plan: runs_per_start must be positive");
    if (jobs < 1) throw usage_error("plan: jobs must be positive");
    for (auto s : strategies) {
      SamplingConfig c = sampling;
      c.strategy = s;
      c.validate();
    }
  }

  int runs_for(Strategy s) const {
    return s == Strategy::random ? starts * runs_per_start : starts;
  }
};

inline constexpr std::size_t kStartingSubsampleSize = 3;

/// Sizes 3 .. 80000, then 100000 .. 300000 by 20000, then the full training
/// set. Entries past the pool size collapse onto it.
inline std::vector<std::size_t> random_size_schedule(std::size_t full_size) {
  std::vector<std::size_t> base{3,     6,     10,    20,    40,    80,    160,   320,
                                640,   1000,  2500,  4000,  6000,  8000,  10000, 15000,
                                20000, 30000, 40000, 50000, 60000, 70000, 80000};
  for (std::size_t s = 100000; s <= 300000; s += 20000) base.push_back(s);
  std::vector<std::size_t> out;
  for (auto s : base) {
    if (s >= full_size) break;
    out.push_back(s);
  }
  if (out.empty() || out.back() != full_size) out.push_back(full_size);
  return out;
}

struct StartingSubsample {
  std::vector<LabeledExample> examples;
  std::set<std::string> required_words;
};

/// Three positives drawn uniformly without replacement.
inline StartingSubsample draw_starting_subsample(std::span<const TokenizedDoc> positives,
                                                 std::uint64_t seed) {
  if (positives.size() < kStartingSubsampleSize) {
    throw data_error("starting subsample needs at least 3 positive training documents");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(positives.size());
  StartingSubsample s;
  for (std::size_t i = 0; i < kStartingSubsampleSize; ++i) {
    const auto& d = positives[perm[i]];
    s.examples.push_back({d.doc_id, d.tokens, Label::positive});
  }
  s.required_words = words_of(s.examples);
  return s;
}

inline std::uint64_t start_seed(std::uint64_t master, const std::string& category,
                                int start_index) {
  return derive_seed(master, category, "start", static_cast<std::uint64_t>(start_index));
}

inline std::uint64_t run_seed(std::uint64_t master, const std::string& category,
                              Strategy s, int run) {
  return derive_seed(master, category, to_string(s), static_cast<std::uint64_t>(run));
}

// ---------------------------------------------------------------------------
// Results

inline constexpr const char* kResultsHeader =
    "category,strategy,run,labeled_count,iteration,tp,fp,fn,tn,recall,precision,f1";

struct ResultRow {
  std::string category;
  std::string strategy;
  int run = 0;
  std::size_t labeled_count = 0;
  int iteration = 0;
  ConfusionCounts counts;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

inline std::string to_csv(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%zu,%d,%llu,%llu,%llu,%llu,%.6f,%.6f,%.6f",
                r.category.c_str(), r.strategy.c_str(), r.run, r.labeled_count, r.iteration,
                static_cast<unsigned long long>(r.counts.tp),
                static_cast<unsigned long long>(r.counts.fp),
                static_cast<unsigned long long>(r.counts.fn),
                static_cast<unsigned long long>(r.counts.tn), r.recall, r.precision, r.f1);
  return buf;
}

inline ResultRow parse_result_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 12) throw data_error("results row has wrong column count: " + line);
  try {
    ResultRow r;
    r.category = cells[0];
    r.strategy = cells[1];
    r.run = std::stoi(cells[2]);
    r.labeled_count = std::stoull(cells[3]);
    r.iteration = std::stoi(cells[4]);
    r.counts = {std::stoull(cells[5]), std::stoull(cells[6]), std::stoull(cells[7]),
                std::stoull(cells[8])};
    r.recall = std::stod(cells[9]);
    r.precision = std::stod(cells[10]);
    r.f1 = std::stod(cells[11]);
    return r;
  } catch (const std::logic_error&) {
    throw data_error("unparseable results row: " + line);
  }
}

inline std::vector<ResultRow> read_results(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != kResultsHeader) throw data_error("results file has an unexpected header");
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_result_row(line));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Running

/// Test-set effectiveness of one classifier under its loss matrix.
inline ConfusionCounts evaluate_on(const Classifier& clf, const Vocabulary& vocab,
                                   const std::vector<std::vector<std::uint32_t>>& encoded,
                                   const std::vector<TokenizedDoc>& docs,
                                   const AuditedLabels& truth) {
  ScopedPhase phase(Phase::evaluation);
  const CompiledScorer scorer(clf, vocab);
  ConfusionCounts c;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    tally(c, decide(scorer.posterior(encoded[i]), clf.loss), truth.read(docs[i].doc_id));
  }
  return c;
}

struct TripleKey {
  std::string category;
  Strategy strategy;
  int run;

  std::string manifest_line() const {
    return category + "\t" + to_string(strategy) + "\t" + std::to_string(run);
  }
};

struct ExperimentSummary {
  std::size_t triples_run = 0;
  std::size_t triples_skipped = 0;
  std::size_t rows_written = 0;
  std::uint64_t test_reads_during_training = 0;
  std::uint64_t test_reads_during_evaluation = 0;
};

class Experiment {
 public:
  Experiment(ExperimentPlan plan, const ExperimentData& data)
      : plan_(std::move(plan)), data_(data) {
    plan_.validate();
    for (const auto& spec : plan_.categories) {
      if (!data_.labels.count(spec.name)) {
        throw data_error("no label map for category '" + spec.name + "'");
      }
    }
    test_encoded_.reserve(data_.test.size());
    for (const auto& d : data_.test) test_encoded_.push_back(test_vocab_.encode(d.tokens));
  }

  const ExperimentPlan& plan() const { return plan_; }

  /// All triples of the plan in canonical order.
  std::vector<TripleKey> triples() const {
    std::vector<TripleKey> out;
    for (const auto& spec : plan_.categories) {
      for (auto s : plan_.strategies) {
        for (int r = 0; r < plan_.runs_for(s); ++r) out.push_back({spec.name, s, r});
      }
    }
    return out;
  }

  /// Rows for one triple; a pure function of the plan, the data and the key.
  std::vector<ResultRow> run_triple(const TripleKey& key) const {
    const auto& labels = data_.labels.at(key.category);
    const int start_index = key.strategy == Strategy::random ? key.run / plan_.runs_per_start
                                                             : key.run;
    const StartingSubsample start = draw_starting_subsample(
        positives_of(labels.train), start_seed(plan_.master_seed, key.category, start_index));

    SamplingConfig cfg = plan_.sampling;
    cfg.strategy = key.strategy;
    cfg.seed = run_seed(plan_.master_seed, key.category, key.strategy, key.run);

    std::vector<ResultRow> rows;
    auto emit = [&](const Classifier& clf, std::size_t labeled_count, int iteration) {
      const auto c = evaluate_on(clf, test_vocab_, test_encoded_, data_.test, labels.test);
      const auto rep = effectiveness(c);
      rows.push_back({key.category, to_string(key.strategy), key.run, labeled_count,
                      iteration, c, rep.recall, rep.precision, rep.f_beta});
    };

    ScopedPhase phase(Phase::training);
    const Oracle oracle = [&labels](const std::string& id) {
      auto it = labels.train.find(id);
      if (it == labels.train.end()) {
        throw data_error("oracle asked about '" + id + "', which is not a training document");
      }
      return it->second;
    };

    if (key.strategy == Strategy::random) {
      run_random(start, cfg, oracle, emit);
    } else {
      const auto schedule = plan_.evaluation_iterations.value_or(
          evaluation_schedule(cfg.iterations));
      run_active_loop(data_.train, oracle, start.examples, cfg,
                      [&](int k, const Classifier& clf, const Pool& pool) {
                        if (schedule.count(k)) emit(clf, pool.labeled().size(), k);
                      });
    }
    return rows;
  }

  /// Runs every triple not yet listed in the manifest next to `out_csv`,
  /// then rewrites the CSV in canonical triple order.
  ExperimentSummary run(const std::filesystem::path& out_csv) const {
    namespace fs = std::filesystem;
    const fs::path manifest = manifest_path(out_csv);
    std::set<std::string> done;
    if (fs::exists(manifest)) {
      std::ifstream in(manifest);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) done.insert(line);
      }
    }
    std::map<std::string, std::vector<std::string>> rows_by_triple;
    if (fs::exists(out_csv)) {
      std::ifstream in(out_csv);
      for (const auto& r : read_results(in)) {
        const std::string k = r.category + "\t" + r.strategy + "\t" + std::to_string(r.run);
        if (done.count(k)) rows_by_triple[k].push_back(to_csv(r));
      }
    }
    write_canonical(out_csv, rows_by_triple);

    const auto all = triples();
    std::vector<TripleKey> todo;
    ExperimentSummary summary;
    for (const auto& t : all) {
      if (done.count(t.manifest_line())) {
        ++summary.triples_skipped;
      } else {
        todo.push_back(t);
      }
    }

    const auto reads_before = test_reads();
    std::mutex writer;
    std::ofstream csv(out_csv, std::ios::app);
    std::ofstream man(manifest, std::ios::app);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next++;
        if (i >= todo.size()) return;
        try {
          const auto rows = run_triple(todo[i]);
          std::lock_guard lock(writer);
          std::vector<std::string>& kept = rows_by_triple[todo[i].manifest_line()];
          for (const auto& r : rows) {
            const auto line = to_csv(r);
            csv << line << '\n';
            kept.push_back(line);
          }
          csv.flush();
          man << todo[i].manifest_line() << '\n';
          man.flush();
          summary.rows_written += rows.size();
          ++summary.triples_run;
        } catch (...) {
          std::lock_guard lock(writer);
          if (!failure) failure = std::current_exception();
          next = todo.size();
          return;
        }
      }
    };
    const int n_workers = std::max(1, std::min<int>(plan_.jobs, static_cast<int>(todo.size())));
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    csv.close();
    man.close();
    if (failure) std::rethrow_exception(failure);

    write_canonical(out_csv, rows_by_triple);
    const auto reads_after = test_reads();
    summary.test_reads_during_training = reads_after.first - reads_before.first;
    summary.test_reads_during_evaluation = reads_after.second - reads_before.second;
    return summary;
  }

  static std::filesystem::path manifest_path(const std::filesystem::path& out_csv) {
    auto p = out_csv;
    p += ".done";
    return p;
  }

 private:
  std::vector<TokenizedDoc> positives_of(const LabelMap& train_labels) const {
    std::vector<TokenizedDoc> pos;
    for (const auto& d : data_.train) {
      auto it = train_labels.find(d.doc_id);
      if (it != train_labels.end() && is_positive(it->second)) pos.push_back(d);
    }
    return pos;
  }

  template <typename Emit>
  void run_random(const StartingSubsample& start, const SamplingConfig& cfg,
                  const Oracle& oracle, Emit&& emit) const {
    std::set<std::string> start_ids;
    for (const auto& ex : start.examples) start_ids.insert(ex.doc_id);
    std::vector<std::string> pool_ids;
    std::unordered_map<std::string, const TokenizedDoc*> by_id;
    for (const auto& d : data_.train) {
      if (start_ids.count(d.doc_id)) continue;
      pool_ids.push_back(d.doc_id);
      by_id.emplace(d.doc_id, &d);
    }
    const auto order = select_random(pool_ids, pool_ids.size(), cfg.seed);
    const std::size_t full = start.examples.size() + pool_ids.size();
    const auto sizes = plan_.random_sizes.value_or(random_size_schedule(full));
    const TrainOptions opt = train_options(cfg, start.required_words);

    std::vector<LabeledExample> labeled = start.examples;
    std::size_t taken = 0;
    int index = 0;
    std::set<std::size_t> seen;
    for (auto size : sizes) {
      size = std::clamp(size, start.examples.size(), full);
      if (!seen.insert(size).second) continue;
      // Nested: each training set extends the previous one.
      while (start.examples.size() + taken < size) {
        const auto& id = order[taken++];
        labeled.push_back({id, by_id.at(id)->tokens, oracle(id)});
      }
      emit(train(labeled, opt), labeled.size(), index++);
    }
  }

  std::pair<std::uint64_t, std::uint64_t> test_reads() const {
    std::uint64_t training = 0, evaluation = 0;
    for (const auto& [name, cl] : data_.labels) {
      training += cl.test.reads_during_training();
      evaluation += cl.test.reads_during_evaluation();
    }
    return {training, evaluation};
  }

  void write_canonical(const std::filesystem::path& out_csv,
                       const std::map<std::string, std::vector<std::string>>& rows) const {
    const auto tmp = std::filesystem::path(out_csv.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw runtime_error("cannot write " + tmp.string());
      out << kResultsHeader << '\n';
      for (const auto& t : triples()) {
        auto it = rows.find(t.manifest_line());
        if (it == rows.end()) continue;
        for (const auto& line : it->second) out << line << '\n';
      }
    }
    std::filesystem::rename(tmp, out_csv);
  }

  ExperimentPlan plan_;
  const ExperimentData& data_;
  Vocabulary test_vocab_;
  std::vector<std::vector<std::uint32_t>> test_encoded_;
};

inline ExperimentSummary run_experiment(const ExperimentPlan& plan, const ExperimentData& data,
                                        const std::filesystem::path& out_csv) {
  return Experiment(plan, data).run(out_csv);
}

// ---------------------------------------------------------------------------
// Learning curves

struct CurvePoint {
  std::string category;
  std::string strategy;
  std::size_t labeled_count = 0;
  RunAggregate f1;
};

/// Mean and SD of F1 across runs for every (category, strategy,
/// labeled_count) cell.
inline std::vector<CurvePoint> learning_curves(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> cells;
  for (const auto& r : rows) cells[{r.category, r.strategy, r.labeled_count}].push_back(r.f1);
  std::vector<CurvePoint> out;
  for (const auto& [key, values] : cells) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                   aggregate_runs(values)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan files

inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan plan;
  try {
    if (j.contains("strategies")) {
      plan.strategies.clear();
      for (const auto& s : j.at("strategies")) {
        plan.strategies.push_back(strategy_from_string(s.get<std::string>()));
      }
    }
    if (j.contains("categories") && j.at("categories").is_array()) {
      for (const auto& c : j.at("categories")) {
        plan.categories.push_back({c.at("name").get<std::string>(),
                                   c.at("substrings").get<std::vector<std::string>>()});
      }
    }
    plan.starts = j.value("starts", plan.starts);
    plan.runs_per_start = j.value("runs_per_start", plan.runs_per_start);
    plan.sampling.batch_size = j.value("batch_size", plan.sampling.batch_size);
    plan.sampling.iterations = j.value("iterations", plan.sampling.iterations);
    plan.sampling.fraction = j.value("fraction", plan.sampling.fraction);
    if (j.contains("score_mode")) {
      plan.sampling.mode = score_mode_from_string(j.at("score_mode").get<std::string>());
    }
    plan.master_seed = j.value("seed", plan.master_seed);
    plan.jobs = j.value("jobs", plan.jobs);
    if (j.contains("random_sizes")) {
      plan.random_sizes = j.at("random_sizes").get<std::vector<std::size_t>>();
    }
    if (j.contains("evaluation_iterations")) {
      plan.evaluation_iterations = j.at("evaluation_iterations").get<std::set<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed plan: ") + e.what());
  }
  return plan;
}

}  // namespace usamp

#endif  // USAMP_HARNESS_HPP
