#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "answervault/corpus.hpp"
#include "answervault/siamese.hpp"

namespace answervault {

struct GridSpec {
  std::vector<double> learning_rates{0.1, 0.01};
  std::vector<std::size_t> vocab_sizes{5000, 20000};
  std::vector<std::size_t> hidden_dims{64, 128};
  std::vector<std::size_t> embed_dims{50, 100};
  EncoderConfig base;  // every other field, seed is the base seed
  InputFormat format = InputFormat::OptionsOnly;

  void validate() const;
  std::size_t size() const;
};

// Cartesian product in (learning rate, vocab, hidden, embed) order, embed
// varying fastest. Trial i is seeded with base.seed + i.
std::vector<EncoderConfig> expand_grid(const GridSpec& spec);

struct TrialResult {
  std::size_t index = 0;
  EncoderConfig config;
  std::optional<double> final_loss;
  std::optional<double> validation_accuracy;
  double wall_seconds = 0.0;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

nlohmann::json to_json(const TrialResult& t);

struct GridSearchOptions {
  std::size_t workers = 1;
  std::filesystem::path trial_log;  // appended as JSON lines when set
};

struct GridSearchResult {
  TrialResult best;
  std::vector<TrialResult> trials;  // by index
};

TrialResult run_trial(const EncoderConfig& config, std::size_t index, std::span<const QuestionRecord> train_set,
                      std::span<const QuestionRecord> validation_set, InputFormat format);

// Best = highest validation accuracy, lower index on ties. Failed trials are
// kept in the result; throws only when every trial failed.
GridSearchResult grid_search(const GridSpec& spec, std::span<const QuestionRecord> train_set,
                             std::span<const QuestionRecord> validation_set, const GridSearchOptions& options = {});

}  // namespace answervault
