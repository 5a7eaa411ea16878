#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "answervault/autodiff.hpp"
#include "answervault/corpus.hpp"
#include "answervault/text.hpp"

namespace answervault {

enum class LossKind { Contrastive, Triplet, Bce };

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

struct EncoderConfig {
  std::size_t vocab_size = 5000;
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 64;
  std::size_t max_len = 128;
  double margin = 1.0;
  double learning_rate = 0.1;
  double init_range = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;  // records per step
  std::uint64_t seed = 13;
  LossKind loss = LossKind::Contrastive;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Deep-averaging encoder shared by both branches:
//   gather -> masked mean -> affine(embed->hidden) -> tanh -> affine(hidden->hidden)
// plus the (scale, bias) head used to turn cosine similarity into a
// probability when trained with BCE.
class SiameseModel {
 public:
  SiameseModel(EncoderConfig config, Vocabulary vocab);

  const EncoderConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  std::vector<double> encode_text(const TokenSequence& seq) const;
  std::vector<double> encode_text(std::string_view text) const;
  TokenSequence tokenize(std::string_view text) const;

  // Higher is more similar: 1/(1+D) for distance losses, the head probability for BCE.
  double similarity(std::span<const double> u, std::span<const double> v) const;
  double similarity(std::string_view a, std::string_view b) const;

  // Scores each option (as laid out by make_pairs) against the context side.
  std::array<double, 4> score_options(const QuestionRecord& record, InputFormat format) const;

  bool operator==(const SiameseModel& other) const;

  ad::Parameter embedding;
  ad::Parameter proj1_weight;
  ad::Parameter proj1_bias;
  ad::Parameter proj2_weight;
  ad::Parameter proj2_bias;
  ad::Parameter head_scale;
  ad::Parameter head_bias;

 private:
  EncoderConfig config_;
  Vocabulary vocab_;
};

// Graph handles for one model's parameters, reused by every branch so the
// two sides of a pair share weights.
struct EncoderVars {
  ad::Var embedding, proj1_weight, proj1_bias, proj2_weight, proj2_bias, head_scale, head_bias;
};

EncoderVars bind(ad::Graph& g, SiameseModel& model);
EncoderVars bind(ad::Graph& g, const SiameseModel& model);

ad::Var encode(ad::Graph& g, const EncoderVars& vars, const TokenSequence& seq, std::size_t vocab_size);

// Scalar losses.
double contrastive_loss(double distance, int label, double margin);
double triplet_loss(double d_anchor_positive, double d_anchor_negative, double margin);
double bce_probability(double cosine, double scale, double bias);
double bce_loss(double probability, int label);
double bce_similarity_loss(std::span<const double> u, std::span<const double> v, int label,
                           double scale, double bias);

inline constexpr double kProbabilityClamp = 1e-7;

// Graph versions of the same losses.
ad::Var contrastive_loss(ad::Graph& g, ad::Var distance, int label, double margin);
ad::Var triplet_loss(ad::Graph& g, ad::Var d_anchor_positive, ad::Var d_anchor_negative, double margin);
ad::Var bce_similarity_loss(ad::Graph& g, const EncoderVars& vars, ad::Var u, ad::Var v, int label);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> validation_accuracy;
};

struct TrainingResult {
  SiameseModel model;
  double initial_loss = 0.0;  // mean unit loss before any update
  std::vector<EpochStats> history;
};

struct TrainingData {
  std::span<const QuestionRecord> train;
  std::span<const QuestionRecord> validation;  // may be empty
  InputFormat format = InputFormat::OptionsOnly;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Builds the vocabulary from the training texts, initializes from config.seed
// and runs mini-batch SGD with the configured loss.
TrainingResult train(const EncoderConfig& config, const TrainingData& data,
                     const EpochCallback& on_epoch = {});

// Initialization only; equals train() with zero epochs.
SiameseModel initialize_model(const EncoderConfig& config, const TrainingData& data);

double mean_loss(const SiameseModel& model, std::span<const QuestionRecord> records, InputFormat format);

// Fraction of records whose top-scored option is the correct one.
double option_accuracy(const SiameseModel& model, std::span<const QuestionRecord> records,
                       InputFormat format);

// Checkpoint container; layout documented in docs/checkpoint.md.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(const SiameseModel& model);
// FNV-1a of the serialized checkpoint; identifies a model across processes.
std::uint64_t model_fingerprint(const SiameseModel& model);
SiameseModel deserialize_model(std::string_view bytes,
                               std::optional<std::size_t> expected_vocab_size = std::nullopt);
void save_model(const SiameseModel& model, const std::filesystem::path& path);
SiameseModel load_model(const std::filesystem::path& path,
                        std::optional<std::size_t> expected_vocab_size = std::nullopt);

}  // namespace answervault
