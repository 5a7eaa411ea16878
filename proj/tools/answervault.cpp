// answervault: ingest / train / eval / ablate / tune / calibrate / serve.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "answervault/baseline.hpp"
#include "answervault/corpus.hpp"
#include "answervault/evaluate.hpp"
#include "answervault/serve.hpp"
#include "answervault/siamese.hpp"
#include "answervault/tune.hpp"

namespace fs = std::filesystem;
using namespace answervault;
using nlohmann::json;

namespace {

// Fully merged view of config file and flags.
struct RunConfig {
  std::string data;
  std::string checkpoint;
  std::string format = "options";
  std::string loss = "contrastive";
  std::uint64_t seed = 13;
  std::uint64_t shuffle_seed = kDefaultShuffleSeed;
  std::size_t epochs = 10;
  double lr = 0.1;
  std::size_t vocab_size = 5000;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 50;
  std::size_t max_len = 128;
  std::size_t batch_size = 16;
  double init_range = 0.05;
  double margin = 1.0;
  double threshold = kDefaultThreshold;
  std::string threshold_file;
  std::string listen = "127.0.0.1:8080";
  bool no_cors = false;
  std::string embeddings;
  std::string embedding_url;
  double embedding_timeout = 10.0;
  int embedding_retries = 2;
  std::size_t embedding_concurrency = 4;
  std::string scorer = "siamese";
  std::string context = "support";
  std::string split = "test";
  std::size_t train_limit = 0;
  std::size_t eval_limit = 0;
  std::string out;
  std::vector<double> grid_lr{0.1, 0.01};
  std::vector<std::size_t> grid_vocab{5000, 20000};
  std::vector<std::size_t> grid_hidden{64, 128};
  std::vector<std::size_t> grid_embed{50, 100};
  std::string trial_log = "trials.jsonl";
  std::size_t workers = 1;
  bool quiet = false;

  EncoderConfig encoder() const {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.embed_dim = embed_dim;
    c.hidden_dim = hidden_dim;
    c.max_len = max_len;
    c.margin = margin;
    c.learning_rate = lr;
    c.init_range = init_range;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.seed = seed;
    c.loss = parse_loss(loss);
    c.validate();
    return c;
  }
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<QuestionRecord> truncated(std::vector<QuestionRecord> v, std::size_t limit) {
  if (limit && v.size() > limit) v.resize(limit);
  return v;
}

struct Data {
  bool is_split = false;
  DatasetSplit split;
  std::vector<QuestionRecord> single;  // --data names one file

  std::vector<QuestionRecord> train() const { return is_split ? split.train : single; }
  std::vector<QuestionRecord> validation() const { return is_split ? split.validation : std::vector<QuestionRecord>{}; }
  std::vector<QuestionRecord> named(const std::string& name) const {
    if (!is_split) return single;
    if (name == "train") return split.train;
    if (name == "valid" || name == "validation") return split.validation;
    if (name == "test") return split.test;
    throw UsageError("unknown split '" + name + "' (expected train|valid|test)");
  }
};

Data load_data(const RunConfig& rc) {
  if (rc.data.empty()) throw UsageError("--data is required");
  Data d;
  if (fs::is_directory(rc.data)) {
    d.is_split = true;
    d.split = load_sciq_split(rc.data, rc.shuffle_seed);
  } else {
    d.single = load_sciq(rc.data, rc.shuffle_seed);
  }
  return d;
}

std::optional<EmbeddingProvider> make_provider(const RunConfig& rc) {
  if (!rc.embeddings.empty() && !rc.embedding_url.empty()) {
    throw UsageError("--embeddings and --embedding-url are mutually exclusive");
  }
  if (!rc.embeddings.empty()) return EmbeddingProvider::local(load_embeddings(rc.embeddings));
  if (!rc.embedding_url.empty()) {
    RemoteEndpoint ep;
    ep.url = rc.embedding_url;
    ep.timeout_seconds = rc.embedding_timeout;
    ep.retries = rc.embedding_retries;
    ep.max_in_flight = rc.embedding_concurrency;
    return EmbeddingProvider::remote(ep);
  }
  return std::nullopt;
}

std::shared_ptr<const SiameseModel> load_checkpoint(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw UsageError("--checkpoint is required");
  return std::make_shared<const SiameseModel>(load_model(rc.checkpoint));
}

std::unique_ptr<Scorer> make_scorer(const RunConfig& rc) {
  if (rc.scorer == "siamese") return std::make_unique<SiameseScorer>(load_checkpoint(rc));
  if (rc.scorer == "baseline") {
    auto provider = make_provider(rc);
    if (!provider) throw UsageError("baseline scorer needs --embeddings or --embedding-url");
    return std::make_unique<BaselineScorer>(std::move(*provider), parse_context_side(rc.context));
  }
  throw UsageError("unknown scorer '" + rc.scorer + "' (expected siamese|baseline)");
}

void write_artifact(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string model_label(const Scorer& scorer) {
  return scorer.name() == "siamese" ? "Siamese Networks" : "Baseline (embedding cosine)";
}

// ---------------------------------------------------------------------------

int run_ingest(const RunConfig& rc) {
  const auto d = load_data(rc);
  json summary = json::object();
  auto describe = [&](const char* name, const std::vector<QuestionRecord>& rs) {
    std::size_t no_support = 0;
    for (const auto& r : rs) no_support += r.support.empty();
    std::printf("%-6s %6zu records  %5zu without support\n", name, rs.size(), no_support);
    summary[name] = {{"records", rs.size()}, {"without_support", no_support}};
  };
  if (d.is_split) {
    describe("train", d.split.train);
    describe("valid", d.split.validation);
    describe("test", d.split.test);
    const auto total = d.split.train.size() + d.split.validation.size() + d.split.test.size();
    std::printf("total  %6zu records\n", total);
    summary["total"] = total;
  } else {
    describe("file", d.single);
    summary["total"] = d.single.size();
  }
  if (!rc.out.empty()) write_artifact(rc.out, summary.dump(2) + "\n");
  return 0;
}

int run_train(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const auto config = rc.encoder();
  const auto d = load_data(rc);
  const auto train_set = truncated(d.train(), rc.train_limit);
  const auto val = truncated(d.validation(), rc.eval_limit);
  const auto format = parse_format(rc.format);
  std::printf("training %s on %zu records (%zu validation), format %s\n", std::string(loss_name(config.loss)).c_str(),
              train_set.size(), val.size(), std::string(format_name(format)).c_str());
  auto result = train(config, {train_set, val, format}, [&](const EpochStats& s) {
    if (rc.quiet) return;
    if (s.validation_accuracy) {
      std::printf("epoch %3zu  loss %.6f  val %s\n", s.epoch, s.train_loss, format_percent(*s.validation_accuracy).c_str());
    } else {
      std::printf("epoch %3zu  loss %.6f\n", s.epoch, s.train_loss);
    }
    std::fflush(stdout);
  });
  save_model(result.model, rc.checkpoint);
  std::printf("initial loss %.6f\nwrote %s\n", result.initial_loss, rc.checkpoint.c_str());
  return 0;
}

int run_eval(const RunConfig& rc) {
  const auto scorer = make_scorer(rc);
  const auto d = load_data(rc);
  const auto records = truncated(d.named(rc.split), rc.eval_limit);
  const auto format = parse_format(rc.format);
  const auto verdicts = predict_all(*scorer, records, format);
  const double acc = accuracy(verdicts, records);
  std::printf("accuracy %s (%zu records, scorer %s, format %s)\n", format_percent(acc).c_str(), records.size(),
              std::string(scorer->name()).c_str(), std::string(format_name(format)).c_str());
  std::vector<AccuracyRow> rows{{model_label(*scorer), "sciq", acc,
                                 scorer->name() == "siamese" ? ReferenceFigures::kSiamese : ReferenceFigures::kBaseline}};
  std::printf("%s%s\n", render_accuracy_table(rows).c_str(), kReferenceNote);
  if (!rc.out.empty()) {
    auto j = accuracy_json(rows);
    j["records"] = records.size();
    j["format"] = std::string(format_name(format));
    write_artifact(rc.out, j.dump(2) + "\n");
  }
  return 0;
}

int run_ablate(const RunConfig& rc) {
  const auto scorer = make_scorer(rc);
  const auto d = load_data(rc);
  const auto records = truncated(d.named(rc.split), rc.eval_limit);
  const auto report = run_ablation(*scorer, records, kAllFormats);
  std::printf("%s%s\n", render_ablation(report).c_str(), kReferenceNote);
  if (!rc.out.empty()) write_artifact(rc.out, ablation_json(report).dump(2) + "\n");
  return 0;
}

int run_tune(const RunConfig& rc) {
  GridSpec spec;
  spec.learning_rates = rc.grid_lr;
  spec.vocab_sizes = rc.grid_vocab;
  spec.hidden_dims = rc.grid_hidden;
  spec.embed_dims = rc.grid_embed;
  spec.base = rc.encoder();
  spec.format = parse_format(rc.format);
  const auto d = load_data(rc);
  if (!d.is_split) throw UsageError("tune needs a SciQ directory with train.json and valid.json");
  const auto train_set = truncated(d.split.train, rc.train_limit);
  const auto val = truncated(d.split.validation, rc.eval_limit);
  if (!rc.trial_log.empty()) fs::remove(rc.trial_log);
  std::printf("grid of %zu trials, %zu worker(s)\n", spec.size(), rc.workers);
  const auto result = grid_search(spec, train_set, val, {rc.workers, rc.trial_log});
  for (const auto& t : result.trials) {
    const auto& c = t.config;
    if (t.ok()) {
      std::printf("trial %2zu  lr %-6g vocab %-6zu hidden %-4zu embed %-4zu  val %s  loss %.6f  (%.1fs)\n", t.index,
                  c.learning_rate, c.vocab_size, c.hidden_dim, c.embed_dim,
                  format_percent(*t.validation_accuracy).c_str(), *t.final_loss, t.wall_seconds);
    } else {
      std::printf("trial %2zu  failed: %s\n", t.index, t.error->c_str());
    }
  }
  std::printf("best trial %zu: val %s\n", result.best.index, format_percent(*result.best.validation_accuracy).c_str());
  const json best{{"trial", result.best.index},
                  {"validation_accuracy", *result.best.validation_accuracy},
                  {"config", result.best.config}};
  std::printf("%s\n", best.dump(2).c_str());
  if (!rc.out.empty()) write_artifact(rc.out, best.dump(2) + "\n");
  return 0;
}

int run_calibrate(const RunConfig& rc) {
  const auto scorer = make_scorer(rc);
  const auto d = load_data(rc);
  const auto records = truncated(d.is_split ? d.split.validation : d.single, rc.eval_limit);
  const auto c = calibrate_threshold(*scorer, records);
  const json j{{"scorer", std::string(scorer->name())}, {"threshold", c.threshold},
               {"balanced_accuracy", c.balanced_accuracy}, {"degenerate", c.degenerate},
               {"positives", c.positives},            {"negatives", c.negatives}};
  std::printf("threshold %.17g  balanced accuracy %.4f%s\n", c.threshold, c.balanced_accuracy,
              c.degenerate ? "  (degenerate: all scores identical)" : "");
  if (!rc.out.empty()) write_artifact(rc.out, j.dump(2) + "\n");
  return 0;
}

std::atomic<Service*> g_service{nullptr};

void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

int run_serve(const RunConfig& rc) {
  const auto sep = rc.listen.rfind(':');
  if (sep == std::string::npos) throw UsageError("--listen must be host:port");
  const std::string host = rc.listen.substr(0, sep);
  int port = 0;
  try {
    port = std::stoi(rc.listen.substr(sep + 1));
  } catch (const std::exception&) {
    throw UsageError("--listen port is not a number: " + rc.listen);
  }

  double threshold = rc.threshold;
  if (!rc.threshold_file.empty()) {
    std::ifstream in(rc.threshold_file);
    if (!in) throw std::runtime_error("cannot open " + rc.threshold_file);
    threshold = json::parse(in).at("threshold").get<double>();
  }
  ServiceOptions opts{threshold, parse_format(rc.format), !rc.no_cors};
  const auto d = load_data(rc);
  auto questions = truncated(d.named(rc.split), rc.eval_limit);
  auto state = std::make_shared<const ServiceState>(load_checkpoint(rc), make_provider(rc), std::move(questions), opts);

  Service service(state);
  const int bound = service.bind(host, port);
  if (bound <= 0) throw std::runtime_error("cannot bind " + rc.listen);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on http://%s:%d (model %s, %zu questions, threshold %g)\n", host.c_str(), bound,
              state->model_version().c_str(), state->questions().size(), threshold);
  std::fflush(stdout);
  service.listen_after_bind();
  g_service = nullptr;
  return 0;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + CLI::detail::to_string(x);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-choice answer scoring with Siamese encoders and an embedding baseline", "answervault"};
  app.require_subcommand(1);
  app.allow_config_extras(false);

  std::string env_config;
  if (const char* e = std::getenv("ANSWERVAULT_CONFIG")) env_config = e;
  app.set_config("--config", env_config, "TOML config file; keys mirror long flag names (env ANSWERVAULT_CONFIG)");

  RunConfig rc;
  app.add_option("--data", rc.data, "SciQ directory (train/valid/test.json) or a single JSON/JSONL file");
  app.add_option("--checkpoint", rc.checkpoint, "model checkpoint path");
  app.add_option("--format", rc.format, "input format")->check(CLI::IsMember({"options", "question", "sentence"}))->capture_default_str();
  app.add_option("--loss", rc.loss, "training loss")->check(CLI::IsMember({"contrastive", "triplet", "bce"}))->capture_default_str();
  app.add_option("--seed", rc.seed, "initialization and batching seed")->capture_default_str();
  app.add_option("--shuffle-seed", rc.shuffle_seed, "option-order seed used when loading records")->capture_default_str();
  app.add_option("--epochs", rc.epochs)->capture_default_str();
  app.add_option("--lr", rc.lr, "SGD learning rate")->capture_default_str();
  app.add_option("--vocab-size", rc.vocab_size)->capture_default_str();
  app.add_option("--hidden-dim", rc.hidden_dim)->capture_default_str();
  app.add_option("--embed-dim", rc.embed_dim)->capture_default_str();
  app.add_option("--max-len", rc.max_len)->capture_default_str();
  app.add_option("--batch-size", rc.batch_size, "records per SGD step")->capture_default_str();
  app.add_option("--init-range", rc.init_range, "uniform init half-width")->capture_default_str();
  app.add_option("--margin", rc.margin)->capture_default_str();
  app.add_option("--threshold", rc.threshold, "free-answer acceptance threshold")->capture_default_str();
  app.add_option("--threshold-file", rc.threshold_file, "JSON written by calibrate; overrides --threshold");
  app.add_option("--listen", rc.listen, "host:port for serve")->capture_default_str();
  app.add_flag("--no-cors", rc.no_cors, "omit cross-origin headers");
  app.add_option("--embeddings", rc.embeddings, "word vectors for the baseline (token v1 ... vd)");
  app.add_option("--embedding-url", rc.embedding_url, "sentence embedding endpoint for the baseline");
  app.add_option("--embedding-timeout", rc.embedding_timeout)->capture_default_str();
  app.add_option("--embedding-retries", rc.embedding_retries)->capture_default_str();
  app.add_option("--embedding-concurrency", rc.embedding_concurrency)->capture_default_str();
  app.add_option("--scorer", rc.scorer)->check(CLI::IsMember({"siamese", "baseline"}))->capture_default_str();
  app.add_option("--context", rc.context, "baseline context side")->check(CLI::IsMember({"support", "question+support"}))->capture_default_str();
  app.add_option("--split", rc.split, "split for eval/ablate/serve")->check(CLI::IsMember({"train", "valid", "test"}))->capture_default_str();
  app.add_option("--train-limit", rc.train_limit, "use the first N training records (0 = all)");
  app.add_option("--eval-limit", rc.eval_limit, "use the first N evaluation records (0 = all)");
  app.add_option("--out", rc.out, "write the report/artifact as JSON");
  app.add_option("--grid-lr", rc.grid_lr)->delimiter(',')->default_str(join(rc.grid_lr));
  app.add_option("--grid-vocab", rc.grid_vocab)->delimiter(',')->default_str(join(rc.grid_vocab));
  app.add_option("--grid-hidden", rc.grid_hidden)->delimiter(',')->default_str(join(rc.grid_hidden));
  app.add_option("--grid-embed", rc.grid_embed)->delimiter(',')->default_str(join(rc.grid_embed));
  app.add_option("--trial-log", rc.trial_log, "JSON-lines log of every trial")->capture_default_str();
  app.add_option("--workers", rc.workers, "parallel trials")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--quiet", rc.quiet, "suppress per-epoch lines");

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&);
  };
  const Sub subs[] = {
      {"ingest", "load SciQ and print split sizes", run_ingest},
      {"train", "train a Siamese encoder and write a checkpoint", run_train},
      {"eval", "held-out accuracy for a scorer", run_eval},
      {"ablate", "accuracy per input format", run_ablate},
      {"tune", "grid search over lr, vocab, hidden and embed sizes", run_tune},
      {"calibrate", "choose the free-answer threshold on validation data", run_calibrate},
      {"serve", "HTTP scoring service", run_serve},
  };
  std::vector<std::pair<CLI::App*, int (*)(const RunConfig&)>> handlers;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->fallthrough();
    handlers.emplace_back(sub, s.fn);
  }

  if (!env_config.empty() && !fs::exists(env_config)) {
    std::fprintf(stderr, "error: ANSWERVAULT_CONFIG names a missing file: %s\n", env_config.c_str());
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [sub, fn] : handlers) {
      if (sub->parsed()) return fn(rc);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
