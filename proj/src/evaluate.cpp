#include "answervault/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace answervault {

using nlohmann::json;

std::array<double, 4> SiameseScorer::score_options(const QuestionRecord& record, InputFormat format) const {
  return model_->score_options(record, format);
}

double SiameseScorer::similarity(std::string_view a, std::string_view b) const {
  return model_->similarity(a, b);
}

std::array<double, 4> BaselineScorer::score_options(const QuestionRecord& record, InputFormat format) const {
  return baseline_scores(provider_, record, format, side_);
}

double BaselineScorer::similarity(std::string_view a, std::string_view b) const {
  const auto ea = provider_.embed(a);
  const auto eb = provider_.embed(b);
  if (ea.oov || eb.oov) return 0.0;
  return cosine_similarity(ea.vector, eb.vector);
}

json to_json(const ValidationVerdict& v) {
  json j{{"per_option_scores", v.per_option_scores}, {"chosen_index", v.chosen_index}, {"threshold", v.threshold}};
  j["reference_answer"] = v.reference_answer ? json(*v.reference_answer) : json(nullptr);
  j["free_answer_score"] = v.free_answer_score ? json(*v.free_answer_score) : json(nullptr);
  j["is_correct"] = v.is_correct ? json(*v.is_correct) : json(nullptr);
  return j;
}

ValidationVerdict predict(const Scorer& scorer, const QuestionRecord& record, InputFormat format) {
  ValidationVerdict v;
  v.per_option_scores = scorer.score_options(record, format);
  v.chosen_index = argmax_first(v.per_option_scores);
  return v;
}

std::vector<ValidationVerdict> predict_all(const Scorer& scorer, std::span<const QuestionRecord> records,
                                           InputFormat format) {
  std::vector<ValidationVerdict> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(predict(scorer, r, format));
  return out;
}

double accuracy(std::span<const ValidationVerdict> verdicts, std::span<const QuestionRecord> records) {
  if (verdicts.empty()) throw std::invalid_argument("accuracy: no verdicts");
  if (verdicts.size() != records.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(verdicts.size()) + " verdicts for " +
                                std::to_string(records.size()) + " records");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) correct += verdicts[i].chosen_index == records[i].correct_index;
  return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

ValidationVerdict validate_free_answer(const Scorer& scorer, const QuestionRecord& record,
                                       std::string_view user_answer, double threshold) {
  if (normalize_text(user_answer).empty()) throw std::invalid_argument("answer is empty after normalization");
  ValidationVerdict v = predict(scorer, record, InputFormat::OptionsOnly);
  const std::string& reference = record.options[static_cast<std::size_t>(v.chosen_index)];
  v.reference_answer = reference;
  v.free_answer_score = scorer.similarity(user_answer, reference);
  v.threshold = threshold;
  v.is_correct = *v.free_answer_score >= threshold;
  return v;
}

double balanced_accuracy(std::span<const double> positives, std::span<const double> negatives, double threshold) {
  if (positives.empty() || negatives.empty()) throw std::invalid_argument("balanced_accuracy: empty class");
  std::size_t tp = 0, tn = 0;
  for (double s : positives) tp += s >= threshold;
  for (double s : negatives) tn += s < threshold;
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(positives.size()) +
                static_cast<double>(tn) / static_cast<double>(negatives.size()));
}

Calibration best_threshold(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw std::invalid_argument("calibration needs both positive and negative scores");
  }
  std::set<double> distinct(positives.begin(), positives.end());
  distinct.insert(negatives.begin(), negatives.end());

  Calibration c;
  c.positives = positives.size();
  c.negatives = negatives.size();
  if (distinct.size() == 1) {
    c.threshold = *distinct.begin();
    c.balanced_accuracy = balanced_accuracy(positives, negatives, c.threshold);
    c.degenerate = true;
    return c;
  }
  std::vector<double> candidates{*distinct.begin()};
  for (auto it = distinct.begin(), next = std::next(it); next != distinct.end(); ++it, ++next) {
    candidates.push_back(*it + (*next - *it) / 2.0);
  }
  c.balanced_accuracy = -1.0;
  for (double t : candidates) {
    const double ba = balanced_accuracy(positives, negatives, t);
    if (ba > c.balanced_accuracy) {
      c.balanced_accuracy = ba;
      c.threshold = t;
    }
  }
  return c;
}

Calibration calibrate_threshold(const Scorer& scorer, std::span<const QuestionRecord> records) {
  if (records.empty()) throw std::invalid_argument("calibrate_threshold: no validation records");
  std::vector<double> positives, negatives;
  for (const auto& r : records) {
    const auto verdict = predict(scorer, r, InputFormat::OptionsOnly);
    const auto& reference = r.options[static_cast<std::size_t>(verdict.chosen_index)];
    for (int i = 0; i < 4; ++i) {
      const double s = scorer.similarity(r.options[static_cast<std::size_t>(i)], reference);
      (i == r.correct_index ? positives : negatives).push_back(s);
    }
  }
  return best_threshold(positives, negatives);
}

AblationReport run_ablation(const Scorer& scorer, std::span<const QuestionRecord> records,
                            std::span<const InputFormat> formats) {
  AblationReport report;
  report.scorer = std::string(scorer.name());
  for (InputFormat f : formats) {
    const auto verdicts = predict_all(scorer, records, f);
    report.rows.push_back({f, accuracy(verdicts, records), records.size()});
  }
  return report;
}

std::optional<double> reference_accuracy(InputFormat format) {
  switch (format) {
    case InputFormat::OptionsOnly: return ReferenceFigures::kOptionsAlone;
    case InputFormat::QuestionPrefixed: return ReferenceFigures::kOptionsQuestion;
    case InputFormat::SentenceSelected: return ReferenceFigures::kSentenceSelection;
  }
  return std::nullopt;
}

const char* const kReferenceNote =
    "reference column: figures reported for the original pretrained-embedding setup; the Siamese "
    "options-alone figure is reported as 84.50% in the results table and 79.60% in the prose.";

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

namespace {

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                         std::size_t left_aligned) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += c < left_aligned ? pad_right(cells[c], width[c]) : pad_left(cells[c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::size_t total = 0;
  for (auto w : width) total += w;
  total += 2 * (width.size() - 1);
  const std::string rule(total, '-');

  std::string out = rule + "\n" + line(header) + rule + "\n";
  for (const auto& row : rows) out += line(row);
  return out + rule + "\n";
}

}  // namespace

std::string render_accuracy_table(std::span<const AccuracyRow> rows) {
  const bool with_ref = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.reference.has_value(); });
  std::vector<std::string> header{"Model", "Dataset", "Accuracy"};
  if (with_ref) header.push_back("Reference");
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> row{r.model, r.dataset, format_percent(r.accuracy)};
    if (with_ref) row.push_back(r.reference ? format_percent(*r.reference) : "-");
    cells.push_back(std::move(row));
  }
  return render_table(header, cells, 2);
}

json accuracy_json(std::span<const AccuracyRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row{{"model", r.model}, {"dataset", r.dataset}, {"accuracy", r.accuracy}};
    row["reference_accuracy"] = r.reference ? json(*r.reference) : json(nullptr);
    out.push_back(std::move(row));
  }
  return {{"rows", out}, {"note", kReferenceNote}};
}

std::string render_ablation(const AblationReport& report) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    const auto ref = reference_accuracy(r.format);
    cells.push_back({std::string(format_label(r.format)), format_percent(r.accuracy),
                     ref ? format_percent(*ref) : "-"});
  }
  return render_table({"Input Format", "Accuracy", "Reference"}, cells, 1);
}

json ablation_json(const AblationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    const auto ref = reference_accuracy(r.format);
    rows.push_back({{"format", std::string(format_name(r.format))},
                    {"label", std::string(format_label(r.format))},
                    {"accuracy", r.accuracy},
                    {"records", r.records},
                    {"reference_accuracy", ref ? json(*ref) : json(nullptr)}});
  }
  return {{"scorer", report.scorer}, {"rows", rows}, {"note", kReferenceNote}};
}

}  // namespace answervault
