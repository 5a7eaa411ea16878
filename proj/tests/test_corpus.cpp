#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "answervault/corpus.hpp"
#include "answervault/random.hpp"
#include "support/fixtures.hpp"

using namespace answervault;

namespace {

// Independent reimplementation used as an oracle for sentence choice.
std::vector<std::string> oracle_tokens(const std::string& s) {
  static const std::set<std::string> wh = {"what", "which", "who", "whom", "whose", "when", "where", "why", "how"};
  std::string t;
  for (unsigned char c : s) t += (c < 128 && (std::ispunct(c) || std::isspace(c))) ? ' ' : static_cast<char>(c < 128 ? std::tolower(c) : c);
  std::vector<std::string> out;
  std::string w;
  for (char c : t + " ") {
    if (c == ' ') {
      if (!w.empty() && !wh.count(w)) out.push_back(w);
      w.clear();
    } else {
      w += c;
    }
  }
  return out;
}

double oracle_f1(const std::vector<std::string>& q, const std::vector<std::string>& s) {
  std::map<std::string, int> a, b;
  for (auto& t : q) ++a[t];
  for (auto& t : s) ++b[t];
  int common = 0;
  for (auto& [k, n] : a) common += std::min(n, b.count(k) ? b[k] : 0);
  if (common == 0) return 0.0;
  double p = double(common) / s.size(), r = double(common) / q.size();
  return 2 * p * r / (p + r);
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST_CASE("mesophile record keeps its correct answer and support") {
  auto r = fixtures::mesophile_record();
  CHECK(r.correct_answer() == "mesophilic organisms");
  CHECK(r.support.find("Mesophilic organisms") != std::string::npos);
  CHECK(normalize_text(r.support).find(normalize_text(r.correct_answer())) != std::string::npos);
  std::multiset<std::string> opts(r.options.begin(), r.options.end());
  CHECK(opts == std::multiset<std::string>{"mesophilic organisms", "protozoa", "gymnosperms", "viruses"});
}

TEST_CASE("empty input is rejected") {
  CHECK_THROWS_WITH_AS(parse_sciq("", "x"), "empty dataset", DataError);
  CHECK_THROWS_WITH_AS(parse_sciq("[]", "x"), "empty dataset", DataError);
  CHECK_THROWS_WITH_AS(parse_sciq("\n\n", "x"), "empty dataset", DataError);
  auto p = temp_file("av_empty.json", "[]");
  CHECK_THROWS_AS(load_sciq(p), DataError);
  std::filesystem::remove(p);
}

TEST_CASE("malformed records name the record and field") {
  CHECK_THROWS_WITH_AS(parse_sciq(R"([{"question":"q","correct_answer":"a","distractor1":"b","distractor2":"c"}])", "x"),
                       "record 1: missing field 'distractor3'", DataError);
  CHECK_THROWS_WITH_AS(parse_sciq(R"([{"question":"  ","correct_answer":"a","distractor1":"b","distractor2":"c","distractor3":"d"}])", "x"),
                       "record 1: empty question", DataError);
  CHECK_THROWS_AS(load_sciq("/nonexistent/sciq.json"), DataError);
}

TEST_CASE("json array and jsonl agree; support is optional") {
  const std::string a = R"({"question":"q1","correct_answer":"a","distractor1":"b","distractor2":"c","distractor3":"d","support":"s."})";
  const std::string b = R"({"question":"q2","correct_answer":"e","distractor1":"f","distractor2":"g","distractor3":"h"})";
  auto arr = parse_sciq("[" + a + "," + b + "]", "t");
  auto lines = parse_sciq(a + "\n\n" + b + "\n", "t");
  REQUIRE(arr.size() == 2);
  REQUIRE(lines.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(arr[i].id == lines[i].id);
    CHECK(arr[i].options == lines[i].options);
    CHECK(arr[i].correct_index == lines[i].correct_index);
  }
  CHECK(arr[0].id == "t-0");
  CHECK(arr[1].support.empty());
  CHECK(make_pairs(arr[1], InputFormat::OptionsOnly)[0].right.empty());
}

TEST_CASE("load is deterministic per seed and the seed moves options") {
  std::string content = "[";
  for (int i = 0; i < 40; ++i) {
    if (i) content += ",";
    content += R"({"question":"q)" + std::to_string(i) + R"(","correct_answer":"right","distractor1":"w1","distractor2":"w2","distractor3":"w3"})";
  }
  content += "]";
  auto p = temp_file("av_det.json", content);
  auto a = load_sciq(p, 5), b = load_sciq(p, 5), c = load_sciq(p, 6);
  std::filesystem::remove(p);
  bool differs = false;
  std::set<int> slots;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].options == b[i].options);
    CHECK(a[i].correct_index == b[i].correct_index);
    CHECK(a[i].correct_answer() == "right");
    CHECK(a[i].id == "av_det-" + std::to_string(i));
    differs |= a[i].options != c[i].options;
    slots.insert(a[i].correct_index);
  }
  CHECK(differs);
  CHECK(slots.size() == 4);
}

TEST_CASE("split loader rejects colliding ids") {
  auto dir = std::filesystem::temp_directory_path() / "av_split";
  std::filesystem::create_directories(dir);
  const std::string rec = R"({"question":"q","correct_answer":"a","distractor1":"b","distractor2":"c","distractor3":"d"})";
  std::ofstream(dir / "train.json") << "[" << rec << "," << rec << "]";
  std::ofstream(dir / "valid.json") << "[" << rec << "]";
  std::ofstream(dir / "test.json") << "[" << rec << "]";
  auto split = load_sciq_split(dir);
  CHECK(split.train.size() == 2);
  CHECK(split.validation.size() == 1);
  CHECK(split.test.size() == 1);
  CHECK(split.validation[0].id == "valid-0");

  std::ofstream(dir / "test.json") << "[" << R"({"id":"train-1",)" << rec.substr(1) << "]";
  CHECK_THROWS_AS(load_sciq_split(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("normalize_text examples") {
  CHECK(normalize_text("What is H2O?") == "is h2o");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text("  WHY,   not?! ") == "not");
  CHECK(normalize_text("cell-membrane's role") == "cell membrane s role");
  CHECK(normalize_text("what is it", {"is"}) == "what it");
}

TEST_CASE("normalize_text is idempotent and clean on random input") {
  const std::string alphabet = "abcXYZ019 .,;:!?-'\"()[]{}\t\nWhatHowwhich";
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const auto len = rng.below(40);
    for (size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    if (trial % 7 == 0) s += " what WHO how ";
    const auto once = normalize_text(s);
    CHECK(normalize_text(once) == once);
    for (char c : once) {
      CHECK_FALSE(std::isupper(static_cast<unsigned char>(c)));
      CHECK_FALSE(std::ispunct(static_cast<unsigned char>(c)));
    }
    CHECK(once.find("  ") == std::string::npos);
    for (const auto& t : split_whitespace(once)) {
      for (const auto& w : default_question_words()) CHECK(t != w);
    }
  }
}

TEST_CASE("make_pairs labels and layout") {
  auto r = fixtures::make_record("r", "q", {"A", "B", "C", "D"}, 1, "s one. s two.");
  auto pairs = make_pairs(r, InputFormat::OptionsOnly);
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0].label == 0);
  CHECK(pairs[1].label == 1);
  CHECK(pairs[2].label == 0);
  CHECK(pairs[3].label == 0);
  CHECK(pairs[2].left == "C");
  CHECK(pairs[2].right == "s one. s two.");

  auto single = fixtures::make_record("r", "q", {"a", "b", "c", "d"}, 0, "");
  CHECK(make_pairs(single, InputFormat::QuestionPrefixed)[0].left == "q a");
}

TEST_CASE("every record and format yields 4 pairs with exactly one positive") {
  const auto data = fixtures::synthetic_dataset({.records = 50});
  for (auto f : kAllFormats) {
    size_t total = 0;
    for (const auto& r : data) {
      auto pairs = make_pairs(r, f);
      total += pairs.size();
      CHECK(std::count_if(pairs.begin(), pairs.end(), [](auto& p) { return p.label == 1; }) == 1);
      CHECK(pairs[static_cast<size_t>(r.correct_index)].label == 1);
    }
    CHECK(total == 4 * data.size());
  }
}

TEST_CASE("format names are stable and round-trip") {
  CHECK(format_name(InputFormat::OptionsOnly) == "options");
  CHECK(format_name(InputFormat::QuestionPrefixed) == "question");
  CHECK(format_name(InputFormat::SentenceSelected) == "sentence");
  for (auto f : kAllFormats) CHECK(parse_format(format_name(f)) == f);
  CHECK_THROWS_AS(parse_format("prose"), std::invalid_argument);
}

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("One. Two! Three? Four") == std::vector<std::string>{"One.", "Two!", "Three?", "Four"});
  CHECK(split_sentences("pH 7.4 is neutral-ish.  Next.") == std::vector<std::string>{"pH 7.4 is neutral-ish.", "Next."});
  CHECK(split_sentences("").empty());
}

TEST_CASE("select_support_sentence") {
  SUBCASE("single sentence") {
    auto r = fixtures::make_record("r", "q about cells", {"a", "b", "c", "d"}, 0, "Only one sentence here.");
    CHECK(select_support_sentence(r) == "Only one sentence here.");
  }
  SUBCASE("no overlap picks the first") {
    auto r = fixtures::make_record("r", "zebra quagga", {"a", "b", "c", "d"}, 0, "First one. Second one. Third.");
    CHECK(select_support_sentence(r) == "First one.");
  }
  SUBCASE("mesophile matches the brute-force oracle") {
    auto r = fixtures::mesophile_record();
    const auto sentences = split_sentences(r.support);
    REQUIRE(sentences.size() == 4);
    const auto q = oracle_tokens(r.question);
    size_t best = 0;
    double best_f1 = -1;
    for (size_t i = 0; i < sentences.size(); ++i) {
      const double f = oracle_f1(q, oracle_tokens(sentences[i]));
      if (f > best_f1) best_f1 = f, best = i;
    }
    CHECK(best == 3);
    const auto chosen = select_support_sentence(r);
    CHECK(chosen == sentences[best]);
    CHECK(chosen.find("Mesophilic") != std::string::npos);
    CHECK(chosen == "Mesophilic organisms have important uses in food preparation, including cheese, yogurt, beer and wine.");
  }
}

TEST_CASE("token_f1") {
  CHECK(token_f1({"a", "b"}, {"a", "b"}) == doctest::Approx(1.0));
  CHECK(token_f1({"a"}, {"b"}) == 0.0);
  CHECK(token_f1({}, {"b"}) == 0.0);
  CHECK(token_f1({"a", "a", "b"}, {"a"}) == doctest::Approx(oracle_f1({"a", "a", "b"}, {"a"})));
}
