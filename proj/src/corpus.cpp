#include "answervault/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "answervault/random.hpp"

namespace answervault {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 5> kRequiredFields = {"question", "correct_answer", "distractor1",
                                                        "distractor2", "distractor3"};

std::string required_string(const json& obj, const char* key, size_t ordinal) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw DataError("record " + std::to_string(ordinal) + ": missing field '" + key + "'");
  }
  if (!it->is_string()) {
    throw DataError("record " + std::to_string(ordinal) + ": field '" + key + "' is not a string");
  }
  return it->get<std::string>();
}

QuestionRecord record_from_json(const json& obj, size_t ordinal, std::string_view source,
                                std::uint64_t seed) {
  if (!obj.is_object()) {
    throw DataError("record " + std::to_string(ordinal) + ": not a JSON object");
  }
  QuestionRecord rec;
  if (auto it = obj.find("id"); it != obj.end() && it->is_string()) {
    rec.id = it->get<std::string>();
  } else {
    rec.id = std::string(source) + "-" + std::to_string(ordinal - 1);
  }
  rec.question = required_string(obj, kRequiredFields[0], ordinal);
  if (rec.question.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw DataError("record " + std::to_string(ordinal) + ": empty question");
  }
  std::array<std::string, 4> raw;
  for (size_t i = 0; i < 4; ++i) raw[i] = required_string(obj, kRequiredFields[i + 1], ordinal);
  if (auto it = obj.find("support"); it != obj.end() && it->is_string()) {
    rec.support = it->get<std::string>();
  }

  // raw[0] is the correct answer; permute so its slot depends on the record.
  std::array<int, 4> order = {0, 1, 2, 3};
  Rng rng(splitmix64(seed) + ordinal);
  rng.shuffle(std::span<int>(order));
  for (size_t slot = 0; slot < 4; ++slot) {
    rec.options[slot] = raw[static_cast<size_t>(order[slot])];
    if (order[slot] == 0) rec.correct_index = static_cast<int>(slot);
  }
  return rec;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

}  // namespace

std::string_view format_name(InputFormat format) {
  switch (format) {
    case InputFormat::OptionsOnly: return "options";
    case InputFormat::QuestionPrefixed: return "question";
    case InputFormat::SentenceSelected: return "sentence";
  }
  return "options";
}

std::string_view format_label(InputFormat format) {
  switch (format) {
    case InputFormat::OptionsOnly: return "Options alone";
    case InputFormat::QuestionPrefixed: return "Options + question";
    case InputFormat::SentenceSelected: return "Answer sentence selection";
  }
  return "Options alone";
}

InputFormat parse_format(std::string_view name) {
  for (InputFormat f : kAllFormats) {
    if (format_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown input format '" + std::string(name) +
                              "' (expected options|question|sentence)");
}

std::vector<QuestionRecord> parse_sciq(std::string_view content, std::string_view source,
                                       std::uint64_t seed) {
  std::vector<QuestionRecord> records;
  const auto first = content.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw DataError("empty dataset");

  if (content[first] == '[') {
    json doc;
    try {
      doc = json::parse(content);
    } catch (const json::parse_error& e) {
      throw DataError(std::string(source) + ": invalid JSON: " + e.what());
    }
    size_t ordinal = 0;
    for (const auto& obj : doc) {
      records.push_back(record_from_json(obj, ++ordinal, source, seed));
    }
  } else {
    size_t ordinal = 0;
    size_t pos = 0;
    while (pos < content.size()) {
      auto end = content.find('\n', pos);
      if (end == std::string_view::npos) end = content.size();
      std::string_view line = content.substr(pos, end - pos);
      pos = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      ++ordinal;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw DataError("record " + std::to_string(ordinal) + ": invalid JSON: " + e.what());
      }
      records.push_back(record_from_json(obj, ordinal, source, seed));
    }
  }
  if (records.empty()) throw DataError("empty dataset");
  return records;
}

std::vector<QuestionRecord> load_sciq(const std::filesystem::path& path, std::uint64_t seed) {
  const std::string content = read_file(path);
  try {
    return parse_sciq(content, path.stem().string(), seed);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

DatasetSplit load_sciq_split(const std::filesystem::path& dir, std::uint64_t seed) {
  DatasetSplit split;
  split.train = load_sciq(dir / "train.json", seed);
  split.validation = load_sciq(dir / "valid.json", seed);
  split.test = load_sciq(dir / "test.json", seed);

  std::unordered_set<std::string> seen;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& r : *part) {
      if (!seen.insert(r.id).second) throw DataError("duplicate record id across splits: " + r.id);
    }
  }
  return split;
}

std::vector<std::string> default_question_words() {
  return {"what", "which", "who", "whom", "whose", "when", "where", "why", "how"};
}

std::string normalize_text(std::string_view raw) {
  static const std::vector<std::string> kWords = default_question_words();
  return normalize_text(raw, kWords);
}

std::string normalize_text(std::string_view raw, const std::vector<std::string>& stop_words) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (char c : raw) {
    if (is_ascii_punct(c) || is_space(c)) {
      cleaned.push_back(' ');
    } else if (static_cast<unsigned char>(c) < 0x80) {
      cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      cleaned.push_back(c);
    }
  }
  std::string out;
  out.reserve(cleaned.size());
  for (const auto& token : split_whitespace(cleaned)) {
    if (std::find(stop_words.begin(), stop_words.end(), token) != stop_words.end()) continue;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  auto push = [&](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return;
    const auto e = s.find_last_not_of(" \t\r\n");
    sentences.emplace_back(s.substr(b, e - b + 1));
  };
  size_t start = 0;
  for (size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && is_space(text[i + 1])) {
      push(text.substr(start, i + 1 - start));
      start = i + 1;
    }
  }
  if (start < text.size()) push(text.substr(start));
  return sentences;
}

double token_f1(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string_view, int> counts;
  for (const auto& t : a) ++counts[t];
  int common = 0;
  for (const auto& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(b.size());
  const double recall = static_cast<double>(common) / static_cast<double>(a.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::string select_support_sentence(const QuestionRecord& record) {
  if (record.support.empty()) return record.support;
  const auto sentences = split_sentences(record.support);
  if (sentences.empty()) return record.support;

  const auto question_tokens = split_whitespace(normalize_text(record.question));
  size_t best = 0;
  double best_f1 = -1.0;
  for (size_t i = 0; i < sentences.size(); ++i) {
    const double f1 = token_f1(question_tokens, split_whitespace(normalize_text(sentences[i])));
    if (f1 > best_f1) {  // strict: earliest sentence wins ties
      best_f1 = f1;
      best = i;
    }
  }
  return sentences[best];
}

std::vector<AnswerPair> make_pairs(const QuestionRecord& record, InputFormat format) {
  const std::string context =
      format == InputFormat::SentenceSelected ? select_support_sentence(record) : record.support;
  std::vector<AnswerPair> pairs;
  pairs.reserve(4);
  for (size_t i = 0; i < 4; ++i) {
    AnswerPair p;
    p.left = format == InputFormat::QuestionPrefixed ? record.question + " " + record.options[i]
                                                     : record.options[i];
    p.right = context;
    p.label = static_cast<int>(i) == record.correct_index ? 1 : 0;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace answervault
