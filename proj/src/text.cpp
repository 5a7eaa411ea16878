#include "answervault/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "answervault/corpus.hpp"

namespace answervault {

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
  index_.emplace(tokens_[0], kPadId);
  index_.emplace(tokens_[1], kUnkId);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t max_size) {
  if (max_size < 2) throw std::invalid_argument("vocabulary max_size must be >= 2");

  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : split_whitespace(normalize_text(text))) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort on count
  // keeps the tie rule.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{"<pad>", "<unk>"};
  for (auto& [tok, _] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens), max_size);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t max_size) {
  if (max_size < 2) throw std::invalid_argument("vocabulary max_size must be >= 2");
  if (tokens.size() < 2) throw std::invalid_argument("vocabulary must contain PAD and UNK");
  if (tokens.size() > max_size) {
    throw std::invalid_argument("vocabulary has " + std::to_string(tokens.size()) +
                                " tokens, exceeds max_size " + std::to_string(max_size));
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  v.max_size_ = max_size;
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text, std::size_t max_size) {
  std::vector<std::string> tokens;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) {
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": missing tab");
    }
    const std::string id_text(line.substr(tab + 1));
    std::size_t parsed = 0;
    long long id = -1;
    try {
      id = std::stoll(id_text, &parsed);
    } catch (const std::exception&) {
      parsed = 0;
    }
    if (parsed != id_text.size() || id != static_cast<long long>(tokens.size())) {
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) +
                               ": expected id " + std::to_string(tokens.size()));
    }
    tokens.emplace_back(line.substr(0, tab));
  }
  return from_tokens(std::move(tokens), max_size);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, std::size_t max_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), max_size);
}

TokenSequence encode(const Vocabulary& vocab, std::string_view text, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  TokenSequence seq;
  seq.ids.assign(max_len, kPadId);
  for (const auto& tok : split_whitespace(normalize_text(text))) {
    if (seq.length == max_len) break;
    seq.ids[seq.length++] = vocab.id(tok);
  }
  return seq;
}

}  // namespace answervault
