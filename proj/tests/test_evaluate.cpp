#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "answervault/evaluate.hpp"
#include "answervault/random.hpp"
#include "support/fixtures.hpp"

using namespace answervault;

namespace {

// Replays fixed scores; similarity is exact-match.
class FixedScorer final : public Scorer {
 public:
  explicit FixedScorer(std::array<double, 4> s) : s_(s) {}
  std::string_view name() const override { return "fixed"; }
  std::array<double, 4> score_options(const QuestionRecord&, InputFormat) const override { return s_; }
  double similarity(std::string_view a, std::string_view b) const override {
    return normalize_text(a) == normalize_text(b) ? 1.0 : 0.2;
  }

 private:
  std::array<double, 4> s_;
};

std::vector<std::string> lines_with(const std::string& text, const std::string& needle) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.find(needle) != std::string::npos) out.push_back(line);
  return out;
}

std::shared_ptr<const SiameseModel> trained_model(const std::vector<QuestionRecord>& data, LossKind loss) {
  EncoderConfig c;
  c.vocab_size = 800;
  c.embed_dim = 24;
  c.hidden_dim = 16;
  c.epochs = 2;
  c.loss = loss;
  c.init_range = 0.2;
  return std::make_shared<const SiameseModel>(train(c, {data, {}, InputFormat::OptionsOnly}).model);
}

// Vectors for every token of the mesophile item plus the synthetic pools.
EmbeddingTable mesophile_table(const fixtures::SyntheticSpec& spec) {
  auto table = fixtures::random_embedding_table(spec, 300, 21);
  Rng rng(22);
  const auto r = fixtures::mesophile_record();
  std::string all = r.question + " " + r.support;
  for (const auto& o : r.options) all += " " + o;
  for (const auto& tok : split_whitespace(normalize_text(all))) {
    if (table.vectors.count(tok)) continue;
    std::vector<double> v(300);
    for (auto& x : v) x = rng.normal();
    table.vectors.emplace(tok, std::move(v));
  }
  return table;
}

}  // namespace

TEST_CASE("predict examples") {
  auto r = fixtures::make_record("r", "q", {"a", "b", "c", "d"}, 1, "s");
  CHECK(predict(FixedScorer({0.1, 0.9, 0.2, 0.2}), r, InputFormat::OptionsOnly).chosen_index == 1);
  CHECK(predict(FixedScorer({0.4, 0.4, 0.4, 0.4}), r, InputFormat::OptionsOnly).chosen_index == 0);
}

TEST_CASE("chosen index survives strictly increasing transforms") {
  Rng rng(5);
  auto r = fixtures::make_record("r", "q", {"a", "b", "c", "d"}, 0, "s");
  for (int i = 0; i < 500; ++i) {
    std::array<double, 4> s{};
    for (auto& x : s) x = std::round(rng.uniform(-1, 1) * 4) / 4;  // force some ties
    const int base = predict(FixedScorer(s), r, InputFormat::OptionsOnly).chosen_index;
    for (auto f : std::vector<double (*)(double)>{[](double x) { return std::exp(x); },
                                                   [](double x) { return 3 * x + 1; },
                                                   [](double x) { return x * x * x; },
                                                   [](double x) { return 1 / (1 + std::exp(-x)); }}) {
      std::array<double, 4> t{};
      for (size_t k = 0; k < 4; ++k) t[k] = f(s[k]);
      CHECK(predict(FixedScorer(t), r, InputFormat::OptionsOnly).chosen_index == base);
    }
    CHECK(base == std::distance(s.begin(), std::max_element(s.begin(), s.end())));
  }
}

TEST_CASE("accuracy examples and properties") {
  std::vector<QuestionRecord> rs;
  std::vector<ValidationVerdict> vs;
  for (int i = 0; i < 4; ++i) {
    rs.push_back(fixtures::make_record("r" + std::to_string(i), "q", {"a", "b", "c", "d"}, i, "s"));
    ValidationVerdict v;
    v.chosen_index = i < 3 ? i : 0;
    vs.push_back(v);
  }
  CHECK(accuracy(vs, rs) == 0.75);
  vs[3].chosen_index = 3;
  CHECK(accuracy(vs, rs) == 1.0);
  CHECK_THROWS_AS(accuracy(std::span<const ValidationVerdict>{}, std::span<const QuestionRecord>{}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy(std::span(vs).first(2), rs), std::invalid_argument);

  fixtures::SyntheticSpec spec{.records = 40};
  auto data = fixtures::synthetic_dataset(spec);
  BaselineScorer scorer(EmbeddingProvider::local(fixtures::random_embedding_table(spec, 6, 2)));
  const double acc = accuracy(predict_all(scorer, data, InputFormat::OptionsOnly), data);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    rng.shuffle(std::span<QuestionRecord>(data));
    CHECK(accuracy(predict_all(scorer, data, InputFormat::OptionsOnly), data) == acc);
  }
}

TEST_CASE("report rendering") {
  std::vector<AccuracyRow> rows{{"SBERT", "sciq", ReferenceFigures::kBaseline, std::nullopt},
                                {"Siamese Networks", "sciq", ReferenceFigures::kSiamese, std::nullopt}};
  const auto table = render_accuracy_table(rows);
  REQUIRE(lines_with(table, "SBERT").size() == 1);
  CHECK(lines_with(table, "SBERT")[0].find("74.90%") != std::string::npos);
  CHECK(lines_with(table, "Siamese Networks")[0].find("84.50%") != std::string::npos);
  CHECK(lines_with(table, "Model").size() == 1);

  AblationReport rep{"siamese", {{InputFormat::OptionsOnly, 0.845, 10},
                                 {InputFormat::QuestionPrefixed, 0.748, 10},
                                 {InputFormat::SentenceSelected, 0.2505, 10}}};
  const auto ab = render_ablation(rep);
  CHECK(lines_with(ab, "Options alone")[0].find("84.50%") != std::string::npos);
  CHECK(lines_with(ab, "Options + question")[0].find("74.80%") != std::string::npos);
  CHECK(lines_with(ab, "Answer sentence selection")[0].find("25.05%") != std::string::npos);
  const auto j = ablation_json(rep);
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][2]["format"] == "sentence");
  CHECK(j.contains("note"));
  CHECK(format_percent(0.2505) == "25.05%");
  CHECK(accuracy_json(rows)["rows"][0]["accuracy"] == ReferenceFigures::kBaseline);
}

TEST_CASE("run_ablation shape") {
  fixtures::SyntheticSpec spec{.records = 12};
  auto data = fixtures::synthetic_dataset(spec);
  BaselineScorer scorer(EmbeddingProvider::local(fixtures::random_embedding_table(spec, 32, 2)));
  auto rep = run_ablation(scorer, data, kAllFormats);
  REQUIRE(rep.rows.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(rep.rows[i].format == kAllFormats[i]);
    CHECK(rep.rows[i].records == 12);
  }
  std::vector<InputFormat> two{InputFormat::SentenceSelected, InputFormat::OptionsOnly};
  CHECK(run_ablation(scorer, data, two).rows.size() == 2);

  auto one = std::span<const QuestionRecord>(data).first(1);
  for (const auto& row : run_ablation(scorer, one, kAllFormats).rows) {
    CHECK((row.accuracy == 0.0 || row.accuracy == 1.0));
  }
}

TEST_CASE("validate_free_answer: self-similarity and thresholds") {
  fixtures::SyntheticSpec spec{.records = 30};
  const auto data = fixtures::synthetic_dataset(spec);
  auto model = trained_model(data, LossKind::Contrastive);
  SiameseScorer siamese(model);
  BaselineScorer baseline(EmbeddingProvider::local(fixtures::random_embedding_table(spec, 32, 2)));
  Rng rng(9);
  for (const Scorer* scorer : {static_cast<const Scorer*>(&siamese), static_cast<const Scorer*>(&baseline)}) {
    for (const auto& r : data) {
      const auto ref = validate_free_answer(*scorer, r, r.options[0], 0.5).reference_answer.value();
      auto self = validate_free_answer(*scorer, r, ref, 0.5);
      CHECK(self.reference_answer == ref);
      CHECK(self.chosen_index == predict(*scorer, r, InputFormat::OptionsOnly).chosen_index);
      const double top = *self.free_answer_score;
      for (const auto& o : r.options) CHECK(scorer->similarity(o, ref) <= top + 1e-12);
      for (double t : {top, top * rng.uniform01(), top - 1.0}) CHECK(*validate_free_answer(*scorer, r, ref, t).is_correct);
      CHECK_FALSE(*validate_free_answer(*scorer, r, ref, top + 1e-9).is_correct);
    }
  }
  // Siamese scores are positive, so threshold 0 accepts anything.
  for (const auto& r : data) CHECK(*validate_free_answer(siamese, r, "completely unrelated words", 0.0).is_correct);
  CHECK_THROWS_AS(validate_free_answer(siamese, data[0], "  ?! ", 0.5), std::invalid_argument);

  auto j = to_json(validate_free_answer(siamese, data[0], data[0].options[1], 0.5));
  for (const char* k : {"per_option_scores", "chosen_index", "reference_answer", "free_answer_score", "is_correct", "threshold"})
    CHECK(j.contains(k));
}

TEST_CASE("best_threshold examples") {
  std::vector<double> pos{0.8, 0.9}, neg{0.1, 0.3};
  auto c = best_threshold(pos, neg);
  CHECK(c.threshold == doctest::Approx(0.55));
  CHECK(c.balanced_accuracy == 1.0);
  CHECK_FALSE(c.degenerate);

  std::vector<double> same{0.4, 0.4};
  auto d = best_threshold(same, same);
  CHECK(d.degenerate);
  CHECK(d.threshold == 0.4);

  CHECK_THROWS_AS(best_threshold(pos, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("calibration matches an exhaustive sweep on a 10-record fixture") {
  fixtures::SyntheticSpec spec{.records = 10};
  const auto data = fixtures::synthetic_dataset(spec);
  BaselineScorer scorer(EmbeddingProvider::local(fixtures::random_embedding_table(spec, 4, 8)));

  // Oracle: rebuild the simulated answers and try every cut point.
  std::vector<double> pos, neg;
  for (const auto& r : data) {
    const auto scores = scorer.score_options(r, InputFormat::OptionsOnly);
    size_t chosen = 0;
    for (size_t i = 1; i < 4; ++i)
      if (scores[i] > scores[chosen]) chosen = i;
    for (size_t i = 0; i < 4; ++i) {
      const double s = scorer.similarity(r.options[i], r.options[chosen]);
      (static_cast<int>(i) == r.correct_index ? pos : neg).push_back(s);
    }
  }
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cuts{all.front()};
  for (size_t i = 0; i + 1 < all.size(); ++i) cuts.push_back((all[i] + all[i + 1]) / 2);
  auto ba = [&](double t) {
    double tp = 0, tn = 0;
    for (double s : pos) tp += s >= t;
    for (double s : neg) tn += s < t;
    return (tp / pos.size() + tn / neg.size()) / 2;
  };
  double best = -1, best_t = 0;
  for (double t : cuts)
    if (ba(t) > best) best = ba(t), best_t = t;
  // Cuts outside the observed range can never do better.
  CHECK(ba(all.front() - 1) <= best);
  CHECK(ba(all.back() + 1) <= best);

  const auto c = calibrate_threshold(scorer, data);
  CHECK(c.positives == 10);
  CHECK(c.negatives == 30);
  CHECK(c.balanced_accuracy == best);
  CHECK(c.threshold == best_t);
  CHECK(c.balanced_accuracy == balanced_accuracy(pos, neg, c.threshold));
}

TEST_CASE("mesophile: the correct answer validates under a calibrated threshold") {
  fixtures::SyntheticSpec spec{.records = 60};
  auto data = fixtures::synthetic_dataset(spec);
  BaselineScorer scorer(EmbeddingProvider::local(mesophile_table(spec)));
  const auto mesophile = fixtures::mesophile_record();
  data.push_back(mesophile);
  const auto c = calibrate_threshold(scorer, data);
  CHECK_FALSE(c.degenerate);
  auto v = validate_free_answer(scorer, mesophile, "mesophilic organisms", c.threshold);
  CHECK(v.reference_answer == "mesophilic organisms");
  CHECK(*v.free_answer_score == doctest::Approx(1.0));
  CHECK(*v.is_correct);
  CHECK_FALSE(*validate_free_answer(scorer, mesophile, "viruses", c.threshold).is_correct);
}
