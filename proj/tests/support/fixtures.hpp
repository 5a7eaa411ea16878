#pragma once

// Shared fixtures: the mesophilic-organisms SciQ item and a generator for
// synthetic records whose correct answer appears verbatim in the support
// while distractors share no token with it.

#include <set>
#include <string>
#include <vector>

#include "answervault/baseline.hpp"
#include "answervault/corpus.hpp"
#include "answervault/random.hpp"

namespace fixtures {

inline const char* kMesophileJson = R"({"question": "What type of organism is commonly used in preparation of foods such as cheese and yogurt?", "distractor3": "viruses", "distractor1": "protozoa", "distractor2": "gymnosperms", "correct_answer": "mesophilic organisms", "support": "Mesophiles grow best in moderate temperature, typically between 25°C and 40°C (77°F and 104°F). Mesophiles are often found living in or on the bodies of humans or other animals. The optimal growth temperature of many pathogenic mesophiles is 37°C (98°F), the normal human body temperature. Mesophilic organisms have important uses in food preparation, including cheese, yogurt, beer and wine."})";

inline answervault::QuestionRecord mesophile_record() {
  return answervault::parse_sciq(kMesophileJson, "mesophile").front();
}

inline answervault::QuestionRecord make_record(std::string id, std::string question,
                                               std::array<std::string, 4> options, int correct,
                                               std::string support) {
  answervault::QuestionRecord r;
  r.id = std::move(id);
  r.question = std::move(question);
  r.options = std::move(options);
  r.correct_index = correct;
  r.support = std::move(support);
  return r;
}

// Pronounceable lowercase pseudo-words; distinct for distinct n.
inline std::string pseudo_word(std::size_t n) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  std::string w;
  do {
    w += kOnsets[n % 14];
    n /= 14;
    w += kVowels[n % 5];
    n /= 5;
  } while (n > 0);
  return w + "x";
}

struct SyntheticSpec {
  std::size_t records = 200;
  std::size_t filler_words = 300;
  std::size_t answer_words = 120;
  std::uint64_t seed = 7;
};

// Answer tokens and filler tokens come from disjoint pools; every support is
// built from filler plus the correct answer, so distractors never overlap it.
inline std::vector<answervault::QuestionRecord> synthetic_dataset(const SyntheticSpec& spec = {}) {
  answervault::Rng rng(spec.seed);
  auto filler = [&] { return pseudo_word(rng.below(spec.filler_words)); };
  auto answer_word = [&] { return pseudo_word(spec.filler_words + rng.below(spec.answer_words)); };

  std::vector<answervault::QuestionRecord> out;
  for (std::size_t n = 0; n < spec.records; ++n) {
    std::vector<std::vector<std::string>> sentences(3);
    for (auto& s : sentences) {
      const std::size_t len = 6 + rng.below(3);
      for (std::size_t i = 0; i < len; ++i) s.push_back(filler());
    }
    const std::size_t key = rng.below(3);
    std::string correct = answer_word() + " " + answer_word();
    const auto c1 = correct.substr(0, correct.find(' '));
    const auto c2 = correct.substr(correct.find(' ') + 1);
    if (c1 == c2) correct = c1;
    sentences[key].insert(sentences[key].begin() + static_cast<std::ptrdiff_t>(rng.below(4)), correct);

    std::string support;
    for (const auto& s : sentences) {
      std::string line;
      for (const auto& w : s) line += (line.empty() ? "" : " ") + w;
      line[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
      support += (support.empty() ? "" : " ") + line + ".";
    }

    // Question reuses three filler words of the key sentence.
    std::string question = "What";
    for (std::size_t i = 0; i < 3; ++i) question += " " + sentences[key][(i * 2 + 1) % sentences[key].size()];
    question += " " + filler() + "?";

    std::set<std::string> used{c1, c2};
    std::array<std::string, 4> options;
    std::vector<std::string> distractors;
    while (distractors.size() < 3) {
      std::string a = answer_word(), b = answer_word();
      if (a == b || used.count(a) || used.count(b)) continue;
      used.insert(a);
      used.insert(b);
      distractors.push_back(a + " " + b);
    }
    const int correct_index = static_cast<int>(rng.below(4));
    for (int i = 0, d = 0; i < 4; ++i) options[static_cast<std::size_t>(i)] = i == correct_index ? correct : distractors[static_cast<std::size_t>(d++)];
    out.push_back(make_record("syn-" + std::to_string(n), question, options, correct_index, support));
  }
  return out;
}

// Random Gaussian vectors for every pseudo-word the generator can emit.
inline answervault::EmbeddingTable random_embedding_table(const SyntheticSpec& spec, std::size_t dim,
                                                          std::uint64_t seed) {
  answervault::Rng rng(seed);
  answervault::EmbeddingTable table;
  table.dim = dim;
  for (std::size_t n = 0; n < spec.filler_words + spec.answer_words; ++n) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    table.vectors.emplace(pseudo_word(n), std::move(v));
  }
  return table;
}

}  // namespace fixtures
