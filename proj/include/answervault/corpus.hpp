#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace answervault {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One multiple-choice item. Options are stored in display order; the correct
// answer sits at correct_index.
struct QuestionRecord {
  std::string id;
  std::string question;
  std::array<std::string, 4> options;
  int correct_index = 0;
  std::string support;

  const std::string& correct_answer() const { return options[static_cast<size_t>(correct_index)]; }
};

struct AnswerPair {
  std::string left;   // candidate answer, possibly question-prefixed
  std::string right;  // context: full support or one selected sentence
  int label = 0;      // 1 iff left derives from the correct option
};

enum class InputFormat { OptionsOnly, QuestionPrefixed, SentenceSelected };

inline constexpr std::array<InputFormat, 3> kAllFormats = {
    InputFormat::OptionsOnly, InputFormat::QuestionPrefixed, InputFormat::SentenceSelected};

// Stable short names: "options", "question", "sentence".
std::string_view format_name(InputFormat format);
// Human-readable row label used in ablation reports.
std::string_view format_label(InputFormat format);
InputFormat parse_format(std::string_view name);

struct DatasetSplit {
  std::vector<QuestionRecord> train;
  std::vector<QuestionRecord> validation;
  std::vector<QuestionRecord> test;
};

inline constexpr std::uint64_t kDefaultShuffleSeed = 13;

// Parses SciQ records from a JSON array or line-delimited JSON. `source` names
// the input in ids ("<source>-<ordinal>") unless a record carries its own "id".
std::vector<QuestionRecord> parse_sciq(std::string_view content, std::string_view source,
                                       std::uint64_t seed = kDefaultShuffleSeed);
std::vector<QuestionRecord> load_sciq(const std::filesystem::path& path,
                                      std::uint64_t seed = kDefaultShuffleSeed);

// Loads train.json / valid.json / test.json from a SciQ release directory and
// rejects id collisions across splits.
DatasetSplit load_sciq_split(const std::filesystem::path& dir,
                             std::uint64_t seed = kDefaultShuffleSeed);

std::vector<std::string> default_question_words();

// Lowercase, punctuation to spaces, drop question words, collapse whitespace.
std::string normalize_text(std::string_view raw);
std::string normalize_text(std::string_view raw, const std::vector<std::string>& stop_words);

std::vector<std::string> split_whitespace(std::string_view text);

// Sentences end at '.', '!' or '?' followed by whitespace. Returned trimmed.
std::vector<std::string> split_sentences(std::string_view text);

// Bag-of-tokens F1 between two normalized token lists.
double token_f1(const std::vector<std::string>& a, const std::vector<std::string>& b);

std::string select_support_sentence(const QuestionRecord& record);

std::vector<AnswerPair> make_pairs(const QuestionRecord& record, InputFormat format);

}  // namespace answervault
