#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "answervault/baseline.hpp"
#include "answervault/corpus.hpp"
#include "answervault/siamese.hpp"

namespace answervault {

inline constexpr double kDefaultThreshold = 0.5;

// Anything that can rank the four options of a record and compare two texts.
// Implementations are immutable and safe to share across threads.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string_view name() const = 0;
  virtual std::array<double, 4> score_options(const QuestionRecord& record, InputFormat format) const = 0;
  virtual double similarity(std::string_view a, std::string_view b) const = 0;
};

class SiameseScorer final : public Scorer {
 public:
  explicit SiameseScorer(std::shared_ptr<const SiameseModel> model) : model_(std::move(model)) {}
  std::string_view name() const override { return "siamese"; }
  std::array<double, 4> score_options(const QuestionRecord& record, InputFormat format) const override;
  double similarity(std::string_view a, std::string_view b) const override;
  const SiameseModel& model() const { return *model_; }

 private:
  std::shared_ptr<const SiameseModel> model_;
};

class BaselineScorer final : public Scorer {
 public:
  explicit BaselineScorer(EmbeddingProvider provider, ContextSide side = ContextSide::Support)
      : provider_(std::move(provider)), side_(side) {}
  std::string_view name() const override { return "baseline"; }
  std::array<double, 4> score_options(const QuestionRecord& record, InputFormat format) const override;
  // Cosine of the two sentence embeddings; 0 when either side has no known token.
  double similarity(std::string_view a, std::string_view b) const override;

 private:
  EmbeddingProvider provider_;
  ContextSide side_;
};

struct ValidationVerdict {
  std::array<double, 4> per_option_scores{};
  int chosen_index = 0;
  std::optional<std::string> reference_answer;
  std::optional<double> free_answer_score;
  std::optional<bool> is_correct;
  double threshold = kDefaultThreshold;
};

nlohmann::json to_json(const ValidationVerdict& v);

ValidationVerdict predict(const Scorer& scorer, const QuestionRecord& record, InputFormat format);

std::vector<ValidationVerdict> predict_all(const Scorer& scorer, std::span<const QuestionRecord> records,
                                           InputFormat format);

double accuracy(std::span<const ValidationVerdict> verdicts, std::span<const QuestionRecord> records);

// Infers the reference answer (option chosen against the support), then
// scores the student's answer against it.
ValidationVerdict validate_free_answer(const Scorer& scorer, const QuestionRecord& record,
                                       std::string_view user_answer, double threshold);

struct Calibration {
  double threshold = kDefaultThreshold;
  double balanced_accuracy = 0.0;
  bool degenerate = false;  // every observed score identical
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

double balanced_accuracy(std::span<const double> positives, std::span<const double> negatives, double threshold);

// Sweeps thresholds at the midpoints between consecutive distinct observed
// scores (plus the minimum score) and keeps the best balanced accuracy; the
// lowest threshold wins ties.
Calibration best_threshold(std::span<const double> positives, std::span<const double> negatives);

// Simulates answering with every option: the correct option is a positive,
// each distractor a negative, all scored against the inferred reference.
Calibration calibrate_threshold(const Scorer& scorer, std::span<const QuestionRecord> records);

struct AblationRow {
  InputFormat format;
  double accuracy = 0.0;
  std::size_t records = 0;
};

struct AblationReport {
  std::string scorer;
  std::vector<AblationRow> rows;
};

AblationReport run_ablation(const Scorer& scorer, std::span<const QuestionRecord> records,
                            std::span<const InputFormat> formats);

// Reference accuracies of the original study, printed next to measured ones.
struct ReferenceFigures {
  static constexpr double kBaseline = 0.749;
  static constexpr double kSiamese = 0.845;
  static constexpr double kSiameseProse = 0.796;
  static constexpr double kOptionsAlone = 0.845;
  static constexpr double kOptionsQuestion = 0.748;
  static constexpr double kSentenceSelection = 0.2505;
};

std::optional<double> reference_accuracy(InputFormat format);
extern const char* const kReferenceNote;

std::string format_percent(double fraction);

struct AccuracyRow {
  std::string model;
  std::string dataset;
  double accuracy = 0.0;
  std::optional<double> reference;
};

std::string render_accuracy_table(std::span<const AccuracyRow> rows);
nlohmann::json accuracy_json(std::span<const AccuracyRow> rows);

std::string render_ablation(const AblationReport& report);
nlohmann::json ablation_json(const AblationReport& report);

}  // namespace answervault
