#include "answervault/tune.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace answervault {

using nlohmann::json;

void GridSpec::validate() const {
  if (learning_rates.empty() || vocab_sizes.empty() || hidden_dims.empty() || embed_dims.empty()) {
    throw std::invalid_argument("grid: every candidate list must be nonempty");
  }
}

std::size_t GridSpec::size() const {
  return learning_rates.size() * vocab_sizes.size() * hidden_dims.size() * embed_dims.size();
}

std::vector<EncoderConfig> expand_grid(const GridSpec& spec) {
  spec.validate();
  std::vector<EncoderConfig> configs;
  configs.reserve(spec.size());
  for (double lr : spec.learning_rates)
    for (auto vocab : spec.vocab_sizes)
      for (auto hidden : spec.hidden_dims)
        for (auto embed : spec.embed_dims) {
          EncoderConfig c = spec.base;
          c.learning_rate = lr;
          c.vocab_size = vocab;
          c.hidden_dim = hidden;
          c.embed_dim = embed;
          c.seed = spec.base.seed + configs.size();
          configs.push_back(c);
        }
  return configs;
}

json to_json(const TrialResult& t) {
  // Timing stays out so the log is byte-reproducible for a fixed seed.
  json j{{"trial", t.index}, {"config", t.config}};
  j["final_loss"] = t.final_loss ? json(*t.final_loss) : json(nullptr);
  j["validation_accuracy"] = t.validation_accuracy ? json(*t.validation_accuracy) : json(nullptr);
  j["error"] = t.error ? json(*t.error) : json(nullptr);
  return j;
}

TrialResult run_trial(const EncoderConfig& config, std::size_t index, std::span<const QuestionRecord> train_set,
                      std::span<const QuestionRecord> validation_set, InputFormat format) {
  TrialResult t;
  t.index = index;
  t.config = config;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto result = train(config, TrainingData{train_set, {}, format});
    t.final_loss = result.history.empty() ? result.initial_loss : result.history.back().train_loss;
    t.validation_accuracy = option_accuracy(result.model, validation_set, format);
  } catch (const std::exception& e) {
    t.error = e.what();
  }
  t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

GridSearchResult grid_search(const GridSpec& spec, std::span<const QuestionRecord> train_set,
                             std::span<const QuestionRecord> validation_set, const GridSearchOptions& options) {
  if (train_set.empty() || validation_set.empty()) throw std::invalid_argument("grid_search: empty split");
  const auto configs = expand_grid(spec);

  GridSearchResult result;
  result.trials.resize(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      result.trials[i] = run_trial(configs[i], i, train_set, validation_set, spec.format);
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, configs.size());
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  if (!options.trial_log.empty()) {
    std::ofstream log(options.trial_log, std::ios::app);
    if (!log) throw std::runtime_error("cannot append trial log " + options.trial_log.string());
    for (const auto& t : result.trials) log << to_json(t).dump() << '\n';
  }

  const TrialResult* best = nullptr;
  for (const auto& t : result.trials) {
    if (!t.ok()) continue;
    if (!best || *t.validation_accuracy > *best->validation_accuracy) best = &t;
  }
  if (!best) throw std::runtime_error("grid search: all " + std::to_string(configs.size()) + " trials failed");
  result.best = *best;
  return result;
}

}  // namespace answervault
