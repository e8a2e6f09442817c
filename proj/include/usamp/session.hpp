#ifndef USAMP_SESSION_HPP
#define USAMP_SESSION_HPP

// Live labeling sessions: the sampling loop with a person as the teacher.
// A session is idle until a batch is issued, then waits for labels on
// exactly that batch, retrains, and becomes idle again. Every mutation is
// appended to a per-session event log so sessions survive restarts.

#include <array>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "usamp/classifier.hpp"
#include "usamp/classifier_io.hpp"
#include "usamp/corpus.hpp"
#include "usamp/error.hpp"
#include "usamp/evaluation.hpp"
#include "usamp/sampling.hpp"

namespace usamp {

class ServiceError : public Error {
 public:
  ServiceError(int http_status, std::string code, const std::string& message)
      : Error(ErrorKind::runtime, message), status_(http_status), code_(std::move(code)) {}

  int http_status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

inline ServiceError not_found(const std::string& m) { return {404, "not_found", m}; }
inline ServiceError conflict(const std::string& m) { return {409, "conflict", m}; }
inline ServiceError label_mismatch(const std::string& m) { return {422, "label_mismatch", m}; }
inline ServiceError bad_request(const std::string& m) { return {400, "bad_request", m}; }

enum class SessionStatus { idle, awaiting_labels, training, exhausted };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::idle: return "idle";
    case SessionStatus::awaiting_labels: return "awaiting_labels";
    case SessionStatus::training: return "training";
    case SessionStatus::exhausted: return "exhausted";
  }
  return "?";
}

/// A corpus registered with the service, addressed by name.
struct CorpusHandle {
  std::string name;
  std::vector<Document> docs;
  std::vector<TokenizedDoc> tokenized;
  std::unordered_map<std::string, std::size_t> index;

  CorpusHandle(std::string n, std::vector<Document> d) : name(std::move(n)), docs(std::move(d)) {
    tokenized = tokenize_all(docs);
    for (std::size_t i = 0; i < docs.size(); ++i) index.emplace(docs[i].doc_id, i);
  }

  const Document* find(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? nullptr : &docs[it->second];
  }
};

struct SessionConfig {
  int batch_size = 4;
  double fraction = 0.7;
  LossMatrix loss = LossMatrix::minimum_error();
  ScoreMode mode = ScoreMode::occurrences;
};

struct SessionRequest {
  std::string corpus;
  std::vector<std::string> seed_doc_ids;  // known positives
  std::vector<std::string> seed_words;
  SessionConfig config;
  LabelMap eval_labels;  // optional held-out documents from the same corpus
};

struct BatchItem {
  std::string doc_id;
  std::string title;
  double posterior = 0.0;
};

struct Batch {
  std::vector<BatchItem> items;
  bool exhausted = false;  // the pool is empty after this batch
};

struct HistoryEntry {
  int iteration = 0;
  std::size_t labeled_count = 0;
  std::size_t positive_count = 0;
  std::string classifier_hash;
  std::optional<EffectivenessReport> effectiveness;
};

using TrainingSummary = HistoryEntry;

inline constexpr std::size_t kHistogramBins = 10;

struct ProgressReport {
  std::string session_id;
  SessionStatus status = SessionStatus::idle;
  std::size_t labeled_count = 0;
  std::size_t positive_count = 0;
  std::size_t pool_remaining = 0;
  std::vector<std::string> pending;
  std::vector<HistoryEntry> history;
  std::array<std::size_t, kHistogramBins> posterior_histogram{};
};

inline nlohmann::json to_json(const EffectivenessReport& r) {
  return {{"recall", r.recall},
          {"precision", r.precision},
          {"f1", r.f_beta},
          {"beta", r.beta},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"fn", r.counts.fn},
          {"tn", r.counts.tn}};
}

inline nlohmann::json to_json(const HistoryEntry& h) {
  nlohmann::json j{{"iteration", h.iteration},
                   {"labeled_count", h.labeled_count},
                   {"positive_count", h.positive_count},
                   {"classifier", h.classifier_hash}};
  if (h.effectiveness) j["effectiveness"] = to_json(*h.effectiveness);
  return j;
}

inline nlohmann::json to_json(const ProgressReport& p) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : p.history) history.push_back(to_json(h));
  return {{"session_id", p.session_id},
          {"status", to_string(p.status)},
          {"labeled_count", p.labeled_count},
          {"positive_count", p.positive_count},
          {"pool_remaining", p.pool_remaining},
          {"pending", p.pending},
          {"history", history},
          {"posterior_histogram", p.posterior_histogram}};
}

inline nlohmann::json to_json(const SessionConfig& c) {
  return {{"batch_size", c.batch_size},
          {"fraction", c.fraction},
          {"loss", to_json(c.loss)},
          {"score_mode", to_string(c.mode)}};
}

inline Label label_from_json(const nlohmann::json& v) {
  if (v.is_boolean()) return label_from_bool(v.get<bool>());
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n == 0 || n == 1) return label_from_bool(n == 1);
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "positive" || s == "1") return Label::positive;
    if (s == "negative" || s == "0") return Label::negative;
  }
  throw bad_request("labels must be 0/1, true/false or \"positive\"/\"negative\"");
}

inline nlohmann::json to_json(const SessionRequest& r) {
  nlohmann::json eval = nlohmann::json::object();
  for (const auto& [id, l] : r.eval_labels) eval[id] = is_positive(l) ? 1 : 0;
  return {{"corpus", r.corpus},
          {"seed_doc_ids", r.seed_doc_ids},
          {"seed_words", r.seed_words},
          {"config", to_json(r.config)},
          {"eval_labels", eval}};
}

inline SessionRequest session_request_from_json(const nlohmann::json& j) {
  try {
    SessionRequest r;
    r.corpus = j.value("corpus", std::string("default"));
    r.seed_doc_ids = j.value("seed_doc_ids", std::vector<std::string>{});
    r.seed_words = j.value("seed_words", std::vector<std::string>{});
    if (j.contains("config")) {
      const auto& c = j.at("config");
      r.config.batch_size = c.value("batch_size", r.config.batch_size);
      r.config.fraction = c.value("fraction", r.config.fraction);
      if (c.contains("loss")) r.config.loss = loss_from_json(c.at("loss"));
      if (c.contains("score_mode")) {
        r.config.mode = score_mode_from_string(c.at("score_mode").get<std::string>());
      }
    }
    if (j.contains("eval_labels")) {
      for (const auto& [id, v] : j.at("eval_labels").items()) {
        r.eval_labels[id] = label_from_json(v);
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw bad_request(std::string("malformed session request: ") + e.what());
  } catch (const Error& e) {
    throw bad_request(e.what());
  }
}

class Session {
 public:
  Session(std::string id, std::shared_ptr<const CorpusHandle> corpus, SessionRequest req)
      : id_(std::move(id)), corpus_(std::move(corpus)), request_(std::move(req)) {
    const auto& cfg = request_.config;
    SamplingConfig check;
    check.batch_size = cfg.batch_size;
    check.fraction = cfg.fraction;
    check.loss = cfg.loss;
    try {
      check.validate();
    } catch (const Error& e) {
      throw bad_request(e.what());
    }
    if (corpus_->docs.empty()) throw bad_request("corpus '" + corpus_->name + "' is empty");

    std::vector<LabeledExample> seeds;
    std::set<std::string> seed_ids;
    for (const auto& id : request_.seed_doc_ids) {
      auto it = corpus_->index.find(id);
      if (it == corpus_->index.end()) throw bad_request("unknown seed document '" + id + "'");
      if (!seed_ids.insert(id).second) throw bad_request("seed document repeated: " + id);
      seeds.push_back({id, corpus_->tokenized[it->second].tokens, Label::positive});
    }
    std::vector<std::string> words;
    for (const auto& w : request_.seed_words) {
      auto t = tokenize(w);
      words.insert(words.end(), t.begin(), t.end());
    }
    if (seeds.empty() && words.empty()) {
      throw bad_request("a session needs seed documents or seed words");
    }
    if (!words.empty()) {
      pseudo_doc_ = LabeledExample{"", words, Label::positive};
    }

    for (const auto& [id, l] : request_.eval_labels) {
      auto it = corpus_->index.find(id);
      if (it == corpus_->index.end()) throw bad_request("unknown eval document '" + id + "'");
      if (seed_ids.count(id)) throw bad_request("eval document is also a seed: " + id);
      eval_docs_.push_back(corpus_->tokenized[it->second]);
      eval_encoded_.push_back(eval_vocab_.encode(eval_docs_.back().tokens));
      eval_truth_.push_back(l);
    }

    std::vector<TokenizedDoc> pool_docs;
    for (const auto& d : corpus_->tokenized) {
      if (!request_.eval_labels.count(d.doc_id)) pool_docs.push_back(d);
    }
    pool_ = std::make_unique<Pool>(pool_docs, seeds);

    std::set<std::string> required = words_of(seeds);
    required.insert(words.begin(), words.end());
    opt_.required = std::move(required);
    opt_.fraction = cfg.fraction;
    opt_.loss = cfg.loss;
    opt_.mode = cfg.mode;

    auto clf = std::make_shared<const Classifier>(train(training_set(pool_->labeled()), opt_));
    publish(std::move(clf), pool_->unlabeled_size() == 0 ? SessionStatus::exhausted
                                                        : SessionStatus::idle,
            /*record_history=*/false);
  }

  const std::string& id() const { return id_; }
  const SessionRequest& request() const { return request_; }

  // Receives one event per successful mutation, under the session lock.
  using EventSink = std::function<void(const nlohmann::json&)>;
  void set_event_sink(EventSink sink) {
    std::lock_guard lock(mutate_);
    sink_ = std::move(sink);
  }

  Batch next_batch() {
    std::lock_guard lock(mutate_);
    if (status_ == SessionStatus::awaiting_labels) {
      throw conflict("session " + id_ + " already has a pending batch");
    }
    Batch batch;
    if (pool_->unlabeled_size() == 0) {
      set_status(SessionStatus::exhausted);
      batch.exhausted = true;
      return batch;
    }
    auto clf = snapshot()->classifier;
    const auto scored = pool_->score(*clf);
    const auto ids = select_uncertain(scored, request_.config.batch_size);
    std::unordered_map<std::string_view, double> post;
    for (const auto& s : scored) post.emplace(s.doc_id, s.posterior);
    for (const auto& id : ids) {
      batch.items.push_back({id, corpus_->find(id)->title, post.at(id)});
    }
    pending_ = ids;
    batch.exhausted = pool_->unlabeled_size() == ids.size();
    if (sink_) sink_({{"event", "batch"}, {"doc_ids", ids}});
    set_status(SessionStatus::awaiting_labels);
    return batch;
  }

  /// Labels must cover exactly the pending batch; otherwise nothing changes.
  TrainingSummary submit_labels(const LabelMap& labels) {
    std::lock_guard lock(mutate_);
    if (status_ != SessionStatus::awaiting_labels) {
      throw conflict("session " + id_ + " has no pending batch");
    }
    if (labels.size() != pending_.size()) {
      throw label_mismatch("expected labels for exactly the " +
                           std::to_string(pending_.size()) + " pending documents");
    }
    for (const auto& id : pending_) {
      if (!labels.count(id)) throw label_mismatch("missing label for pending '" + id + "'");
    }

    std::vector<LabeledExample> candidate = pool_->labeled();
    for (const auto& id : pending_) {
      candidate.push_back({id, pool_->doc(id).tokens, labels.at(id)});
    }
    set_status(SessionStatus::training);
    std::shared_ptr<const Classifier> clf;
    try {
      clf = std::make_shared<const Classifier>(train(training_set(candidate), opt_));
    } catch (...) {
      set_status(SessionStatus::awaiting_labels);
      throw;
    }
    if (sink_) {
      nlohmann::json lj = nlohmann::json::object();
      for (const auto& [doc, l] : labels) lj[doc] = is_positive(l) ? 1 : 0;
      try {
        sink_({{"event", "labels"}, {"labels", lj}});
      } catch (...) {
        set_status(SessionStatus::awaiting_labels);
        throw;
      }
    }
    for (const auto& id : pending_) pool_->label(id, labels.at(id));
    pending_.clear();
    return publish(std::move(clf),
                   pool_->unlabeled_size() == 0 ? SessionStatus::exhausted : SessionStatus::idle,
                   /*record_history=*/true);
  }

  ProgressReport metrics() const {
    auto snap = snapshot();
    ProgressReport r = snap->report;
    r.session_id = id_;
    return r;
  }

  std::shared_ptr<const Classifier> classifier() const { return snapshot()->classifier; }

  SessionStatus status() const { return snapshot()->report.status; }

  std::vector<std::string> pending() const { return snapshot()->report.pending; }

 private:
  struct Snapshot {
    std::shared_ptr<const Classifier> classifier;
    ProgressReport report;
  };

  std::vector<LabeledExample> training_set(const std::vector<LabeledExample>& labeled) const {
    std::vector<LabeledExample> out = labeled;
    if (pseudo_doc_) out.push_back(*pseudo_doc_);
    return out;
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

  void set_status(SessionStatus s) {
    status_ = s;
    auto next = std::make_shared<Snapshot>(*snapshot());
    next->report.status = s;
    next->report.pending = pending_;
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }

  TrainingSummary publish(std::shared_ptr<const Classifier> clf, SessionStatus status,
                          bool record_history) {
    auto next = std::make_shared<Snapshot>();
    if (auto prev = snapshot()) next->report.history = prev->report.history;
    next->classifier = clf;
    auto& r = next->report;
    r.status = status;
    r.pending = pending_;
    r.labeled_count = pool_->labeled().size();
    r.positive_count = 0;
    for (const auto& ex : pool_->labeled()) r.positive_count += is_positive(ex.label);
    r.pool_remaining = pool_->unlabeled_size();
    for (const auto& s : pool_->score(*clf)) {
      const auto bin = std::min<std::size_t>(
          kHistogramBins - 1, static_cast<std::size_t>(s.posterior * kHistogramBins));
      ++r.posterior_histogram[bin];
    }
    HistoryEntry entry;
    entry.iteration = static_cast<int>(r.history.size()) + (record_history ? 1 : 0);
    entry.labeled_count = r.labeled_count;
    entry.positive_count = r.positive_count;
    entry.classifier_hash = classifier_hash(*clf);
    if (!eval_docs_.empty()) {
      const CompiledScorer scorer(*clf, eval_vocab_);
      ConfusionCounts c;
      for (std::size_t i = 0; i < eval_docs_.size(); ++i) {
        tally(c, decide(scorer.posterior(eval_encoded_[i]), clf->loss), eval_truth_[i]);
      }
      entry.effectiveness = effectiveness(c);
    }
    if (record_history) r.history.push_back(entry);
    status_ = status;
    {
      std::lock_guard lock(snapshot_mutex_);
      snapshot_ = std::move(next);
    }
    return entry;
  }

  std::string id_;
  std::shared_ptr<const CorpusHandle> corpus_;
  SessionRequest request_;
  TrainOptions opt_;
  std::optional<LabeledExample> pseudo_doc_;
  std::unique_ptr<Pool> pool_;
  std::vector<std::string> pending_;
  SessionStatus status_ = SessionStatus::idle;
  EventSink sink_;

  std::vector<TokenizedDoc> eval_docs_;
  Vocabulary eval_vocab_;
  std::vector<std::vector<std::uint32_t>> eval_encoded_;
  std::vector<Label> eval_truth_;

  std::mutex mutate_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

/// Owns the sessions and their event logs.
class SessionManager {
 public:
  explicit SessionManager(std::optional<std::filesystem::path> state_dir = std::nullopt)
      : state_dir_(std::move(state_dir)) {
    if (state_dir_) std::filesystem::create_directories(*state_dir_);
  }

  void register_corpus(const std::string& name, std::vector<Document> docs) {
    std::lock_guard lock(mutex_);
    corpora_[name] = std::make_shared<const CorpusHandle>(name, std::move(docs));
  }

  std::string create_session(const SessionRequest& req) {
    std::shared_ptr<const CorpusHandle> corpus;
    std::string id;
    {
      std::lock_guard lock(mutex_);
      auto it = corpora_.find(req.corpus);
      if (it == corpora_.end()) throw bad_request("unknown corpus '" + req.corpus + "'");
      corpus = it->second;
      id = make_id();
    }
    auto session = std::make_shared<Session>(id, corpus, req);
    append_event(id, {{"event", "create"}, {"request", to_json(req)}}, /*truncate=*/true);
    attach_sink(*session);
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, session);
    return id;
  }

  Batch next_batch(const std::string& id) { return get(id)->next_batch(); }

  TrainingSummary submit_labels(const std::string& id, const LabelMap& labels) {
    return get(id)->submit_labels(labels);
  }

  ProgressReport metrics(const std::string& id) const { return get(id)->metrics(); }

  nlohmann::json export_classifier(const std::string& id) const {
    return usamp::export_classifier(*get(id)->classifier());
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("unknown session '" + id + "'");
    return it->second;
  }

  std::size_t session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

  /// Replays every event log in the state directory. Corpora must be
  /// registered first. Returns the number of sessions restored.
  std::size_t restore() {
    if (!state_dir_) return 0;
    std::vector<std::filesystem::path> logs;
    for (const auto& e : std::filesystem::directory_iterator(*state_dir_)) {
      if (e.path().extension() == ".jsonl") logs.push_back(e.path());
    }
    std::sort(logs.begin(), logs.end());
    std::size_t restored = 0;
    for (const auto& path : logs) {
      const std::string id = path.stem().string();
      std::ifstream in(path);
      std::string line;
      std::shared_ptr<Session> session;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto ev = nlohmann::json::parse(line);
        const auto kind = ev.at("event").get<std::string>();
        if (kind == "create") {
          const auto req = session_request_from_json(ev.at("request"));
          std::shared_ptr<const CorpusHandle> corpus;
          {
            std::lock_guard lock(mutex_);
            auto it = corpora_.find(req.corpus);
            if (it == corpora_.end()) {
              throw runtime_error("cannot restore " + id + ": corpus '" + req.corpus +
                                  "' not registered");
            }
            corpus = it->second;
          }
          session = std::make_shared<Session>(id, corpus, req);
        } else if (!session) {
          throw runtime_error("event log " + path.string() + " does not start with create");
        } else if (kind == "batch") {
          const auto batch = session->next_batch();
          std::vector<std::string> ids;
          for (const auto& b : batch.items) ids.push_back(b.doc_id);
          if (ids != ev.at("doc_ids").get<std::vector<std::string>>()) {
            throw runtime_error("replay of " + id + " diverged from its event log");
          }
        } else if (kind == "labels") {
          LabelMap labels;
          for (const auto& [doc, v] : ev.at("labels").items()) labels[doc] = label_from_json(v);
          session->submit_labels(labels);
        }
      }
      if (session) {
        attach_sink(*session);
        std::lock_guard lock(mutex_);
        sessions_[id] = session;
        bump_counter(id);
        ++restored;
      }
    }
    return restored;
  }

 private:
  void attach_sink(Session& s) {
    if (!state_dir_) return;
    const std::string id = s.id();
    s.set_event_sink([this, id](const nlohmann::json& ev) { append_event(id, ev); });
  }

  std::string make_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++counter_));
    return buf;
  }

  void bump_counter(const std::string& id) {
    if (id.size() > 1 && id[0] == 's') {
      try {
        counter_ = std::max<std::uint64_t>(counter_, std::stoull(id.substr(1)));
      } catch (const std::logic_error&) {
      }
    }
  }

  void append_event(const std::string& id, const nlohmann::json& ev, bool truncate = false) {
    if (!state_dir_) return;
    std::lock_guard lock(log_mutex_);
    std::ofstream out(*state_dir_ / (id + ".jsonl"),
                      truncate ? std::ios::trunc : std::ios::app);
    out << ev.dump() << '\n';
    out.flush();
    if (!out) throw runtime_error("failed to persist event for session " + id);
  }

  std::optional<std::filesystem::path> state_dir_;
  mutable std::mutex mutex_;
  std::mutex log_mutex_;
  std::map<std::string, std::shared_ptr<const CorpusHandle>> corpora_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace usamp

#endif  // USAMP_SESSION_HPP
