// usamp: command-line front end.
//
//   usamp ingest --corpus titles.tsv --categories cats.jsonl
//   usamp synth  --out synth.tsv [--size N --prior P --seed S ...]
//   usamp run    [--plan plan.json] --corpus ... --categories ... --out results.csv
//   usamp curve  --results results.csv [--out curve.csv]
//   usamp serve  --corpus titles.tsv [--port 8080 --token T --state-dir DIR]
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "usamp/harness.hpp"
#include "usamp/http_service.hpp"
#include "usamp/reports.hpp"
#include "usamp/synthetic.hpp"

using namespace usamp;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  return in;
}

// Bad lines are reported and skipped; a file with no usable line is an error.
std::vector<Document> read_corpus(const std::string& path) {
  auto in = open_input(path);
  auto r = load_corpus(in);
  for (const auto& e : r.errors) {
    std::cerr << "warning: " << path << ":" << e.line << ": " << e.message << "\n";
  }
  if (r.documents.empty()) throw data_error("no usable documents in '" + path + "'");
  return std::move(r.documents);
}

std::vector<CategorySpec> read_categories(const std::string& path) {
  auto in = open_input(path);
  auto specs = load_category_specs(in);
  if (specs.empty()) throw data_error("no categories in '" + path + "'");
  return specs;
}

nlohmann::json read_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string corpus, categories;
};

int cmd_ingest(const IngestArgs& a) {
  const auto docs = read_corpus(a.corpus);
  const auto specs = read_categories(a.categories);
  std::cout << format_count_table(category_counts(docs, specs), docs.size());
  return 0;
}

struct SynthArgs {
  std::string out;
  std::string categories_out;
  SyntheticCorpusSpec spec;
};

int cmd_synth(const SynthArgs& a) {
  const auto docs = generate_synthetic_corpus(a.spec);
  std::ofstream out(a.out, std::ios::trunc);
  if (!out) throw runtime_error("cannot write '" + a.out + "'");
  write_corpus(out, docs);
  if (!a.categories_out.empty()) {
    std::ofstream cat(a.categories_out, std::ios::trunc);
    if (!cat) throw runtime_error("cannot write '" + a.categories_out + "'");
    const auto spec = synthetic_category();
    cat << nlohmann::json{{"name", spec.name}, {"substrings", spec.substrings}}.dump() << "\n";
  }
  const auto labels = assign_labels(docs, synthetic_category());
  std::size_t pos = 0;
  for (const auto& [id, l] : labels) pos += is_positive(l);
  std::cout << "wrote " << docs.size() << " documents (" << pos << " in category '"
            << synthetic_category().name << "') to " << a.out << "\n";
  return 0;
}

struct RunArgs {
  std::string plan_path;
  std::optional<std::string> corpus, categories, out;
  std::vector<std::string> strategies;
  std::optional<int> batch_size, iterations, starts, runs_per_start, jobs;
  std::optional<std::uint64_t> seed, split_seed;
  std::optional<double> fraction, test_fraction;
};

int cmd_run(const RunArgs& a) {
  nlohmann::json file = nlohmann::json::object();
  if (!a.plan_path.empty()) file = read_json(a.plan_path);
  if (!file.is_object()) throw data_error("plan file must hold a JSON object");
  // Flags beat the plan file, which beats the defaults.
  if (!a.strategies.empty()) file["strategies"] = a.strategies;
  if (a.batch_size) file["batch_size"] = *a.batch_size;
  if (a.iterations) file["iterations"] = *a.iterations;
  if (a.starts) file["starts"] = *a.starts;
  if (a.runs_per_start) file["runs_per_start"] = *a.runs_per_start;
  if (a.jobs) file["jobs"] = *a.jobs;
  if (a.seed) file["seed"] = *a.seed;
  if (a.fraction) file["fraction"] = *a.fraction;
  if (a.corpus) file["corpus"] = *a.corpus;
  if (a.out) file["out"] = *a.out;
  if (a.test_fraction) file["test_fraction"] = *a.test_fraction;
  if (a.split_seed) file["split_seed"] = *a.split_seed;
  if (a.categories) file["categories"] = *a.categories;

  if (!file.contains("corpus")) throw usage_error("run: --corpus (or plan \"corpus\") is required");
  if (!file.contains("out")) throw usage_error("run: --out (or plan \"out\") is required");
  if (!file.contains("categories")) {
    throw usage_error("run: --categories (or plan \"categories\") is required");
  }
  std::vector<CategorySpec> categories;
  if (file.at("categories").is_string()) {
    categories = read_categories(file.at("categories").get<std::string>());
    file.erase("categories");
  }
  ExperimentPlan plan = plan_from_json(file);
  if (!categories.empty()) plan.categories = categories;
  plan.validate();

  double test_fraction = 51991.0 / 371454.0;
  std::uint64_t split_seed = 0;
  std::string corpus_path, out_path;
  try {
    test_fraction = file.value("test_fraction", test_fraction);
    split_seed = file.value("split_seed", split_seed);
    corpus_path = file.at("corpus").get<std::string>();
    out_path = file.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed plan: ") + e.what());
  }

  const auto docs = read_corpus(corpus_path);
  const auto data = prepare_experiment(docs, plan.categories, test_fraction, split_seed);
  std::cerr << "train " << data.train.size() << ", test " << data.test.size() << "\n";
  const auto summary = run_experiment(plan, data, out_path);
  std::cout << "triples run " << summary.triples_run << ", skipped "
            << summary.triples_skipped << ", rows " << summary.rows_written << "\n"
            << "test-label reads: training " << summary.test_reads_during_training
            << ", evaluation " << summary.test_reads_during_evaluation << "\n";
  if (summary.test_reads_during_training != 0) {
    throw runtime_error("test labels were read during training");
  }
  return 0;
}

struct CurveArgs {
  std::string results, out;
};

int cmd_curve(const CurveArgs& a) {
  auto in = open_input(a.results);
  const auto rows = read_results(in);
  if (rows.empty()) throw data_error("no result rows in '" + a.results + "'");
  const auto curves = learning_curves(rows);
  std::cout << format_curve_table(curves);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw runtime_error("cannot write '" + a.out + "'");
    write_curve_long(out, curves);
  }
  return 0;
}

struct ServeArgs {
  std::string corpus, corpus_name = "default", token, state_dir, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const ServeArgs& a) {
  // Block termination signals in every thread; one thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::optional<std::filesystem::path> state;
  if (!a.state_dir.empty()) {
    std::filesystem::create_directories(a.state_dir);
    state = a.state_dir;
  }
  SessionManager sessions(state);
  sessions.register_corpus(a.corpus_name, read_corpus(a.corpus));
  const auto restored = sessions.restore();

  HttpService service(sessions, a.token);
  if (!a.static_dir.empty() && !service.mount_static(a.static_dir)) {
    throw data_error("cannot serve static files from '" + a.static_dir + "'");
  }
  int port = a.port;
  if (port == 0) {
    port = service.bind_any_port(a.host);
    if (port <= 0) throw runtime_error("cannot bind to " + a.host);
  } else if (!service.bind(a.host, port)) {
    throw runtime_error("cannot bind to " + a.host + ":" + std::to_string(port));
  }
  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    signalled = true;
    service.stop();
  });
  std::cout << "listening on http://" << a.host << ":" << port << " (" << restored
            << " sessions restored)" << std::endl;
  const bool ok = service.listen_after_bind();
  // If listen returned on its own, wake the waiter so it can exit.
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "stopped" << std::endl;
  return ok ? 0 : kExitRuntime;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::usage: return kExitUsage;
    case ErrorKind::data: return kExitData;
    case ErrorKind::runtime: return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty sampling for text classifiers"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a corpus and count category members");
  c_ingest->add_option("--corpus", ingest.corpus, "doc_id<TAB>keyword<TAB>title file")->required();
  c_ingest->add_option("--categories", ingest.categories, "category specs (JSON lines)")
      ->required();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic title corpus");
  c_synth->add_option("--out", synth.out, "corpus file to write")->required();
  c_synth->add_option("--categories-out", synth.categories_out,
                      "also write the matching category spec");
  c_synth->add_option("--size", synth.spec.size, "number of documents")->capture_default_str();
  c_synth->add_option("--prior", synth.spec.prior, "category prior")->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed, "generator seed")->capture_default_str();
  c_synth->add_option("--subtopics", synth.spec.subtopics)->capture_default_str();
  c_synth->add_option("--topic-vocabulary", synth.spec.topic_vocabulary)->capture_default_str();
  c_synth->add_option("--shared-topic-words", synth.spec.shared_topic_words)
      ->capture_default_str();
  c_synth->add_option("--background-vocabulary", synth.spec.background_vocabulary)
      ->capture_default_str();
  c_synth->add_option("--topic-rate", synth.spec.topic_rate)->capture_default_str();
  c_synth->add_option("--shared-share", synth.spec.shared_share)->capture_default_str();
  c_synth->add_option("--confuser-fraction", synth.spec.confuser_fraction)
      ->capture_default_str();
  c_synth->add_option("--confuser-vocabulary", synth.spec.confuser_vocabulary)
      ->capture_default_str();
  c_synth->add_option("--confuser-context-rate", synth.spec.confuser_context_rate)
      ->capture_default_str();
  c_synth->add_option("--topic-rate-spread", synth.spec.topic_rate_spread)
      ->capture_default_str();
  c_synth->add_option("--min-length", synth.spec.min_length)->capture_default_str();
  c_synth->add_option("--max-length", synth.spec.max_length)->capture_default_str();

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Run the learning-curve experiment");
  c_run->add_option("--plan", run.plan_path, "plan file (JSON); flags override it");
  c_run->add_option("--corpus", run.corpus, "corpus file");
  c_run->add_option("--categories", run.categories, "category specs (JSON lines)");
  c_run->add_option("--out", run.out, "results CSV");
  c_run->add_option("--strategy", run.strategies,
                    "uncertainty, relevance and/or random (repeatable)")
      ->delimiter(',');
  c_run->add_option("--batch-size", run.batch_size, "examples per iteration (default 4)");
  c_run->add_option("--iterations", run.iterations, "iterations per run (default 249)");
  c_run->add_option("--starts", run.starts, "starting subsamples (default 10)");
  c_run->add_option("--runs-per-start", run.runs_per_start,
                    "random-sampling runs per start (default 2)");
  c_run->add_option("--seed", run.seed, "master seed (default 0)");
  c_run->add_option("--fraction", run.fraction, "feature selection fraction (default 0.7)");
  c_run->add_option("--test-fraction", run.test_fraction,
                    "held-out share of the corpus (default 51991/371454)");
  c_run->add_option("--split-seed", run.split_seed, "train/test split seed (default 0)");
  c_run->add_option("--jobs", run.jobs, "parallel workers (default 1)");

  CurveArgs curve;
  auto* c_curve = app.add_subcommand("curve", "Summarize results as learning curves");
  c_curve->add_option("--results", curve.results, "results CSV")->required();
  c_curve->add_option("--out", curve.out, "long-format curve CSV to write");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Serve labeling sessions over HTTP");
  c_serve->add_option("--corpus", serve.corpus, "corpus file")->required();
  c_serve->add_option("--corpus-name", serve.corpus_name, "name clients use for the corpus")
      ->capture_default_str();
  c_serve->add_option("--port", serve.port, "port (0 picks a free one)")->capture_default_str();
  c_serve->add_option("--host", serve.host)->capture_default_str();
  c_serve->add_option("--token", serve.token, "access token; empty disables the check");
  c_serve->add_option("--state-dir", serve.state_dir, "session event logs");
  c_serve->add_option("--static", serve.static_dir, "directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest);
    if (*c_synth) return cmd_synth(synth);
    if (*c_run) return cmd_run(run);
    if (*c_curve) return cmd_curve(curve);
    if (*c_serve) return cmd_serve(serve);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
