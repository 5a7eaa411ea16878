#pragma once

// Unsupervised scorer: normalize -> embed -> cosine -> argmax, over a
// pluggable source of word or sentence embeddings.

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "answervault/corpus.hpp"

namespace answervault {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EmbeddingTable {
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t dim = 0;

  const std::vector<double>* find(std::string_view token) const;
};

// Text format: one "token v1 v2 ... vd" per line, consistent d.
EmbeddingTable parse_embeddings(std::string_view content);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// POST {"text": ...} to `url`, expect 200 with {"vector": [...]}.
struct RemoteEndpoint {
  std::string url;                   // http://host[:port][/path], path defaults to /embed
  double timeout_seconds = 10.0;
  int retries = 2;                   // extra attempts after the first
  std::size_t max_in_flight = 4;
  std::optional<std::size_t> dim;    // learned from the first response when unset
};

struct SentenceEmbedding {
  std::vector<double> vector;
  bool oov = false;  // no token had a vector; `vector` is zero
};

class EmbeddingProvider {
 public:
  static EmbeddingProvider local(EmbeddingTable table);
  static EmbeddingProvider remote(RemoteEndpoint endpoint);

  bool is_remote() const;
  // 0 until a remote endpoint has answered once.
  std::size_t dim() const;

  // Normalizes `text` before embedding.
  SentenceEmbedding embed(std::string_view text) const;

 private:
  struct LocalState;
  struct RemoteState;
  std::shared_ptr<const LocalState> local_;
  std::shared_ptr<RemoteState> remote_;
};

SentenceEmbedding embed_sentence(const EmbeddingProvider& provider, std::string_view text);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

enum class ContextSide { Support, QuestionAndSupport };

std::string_view context_side_name(ContextSide side);
ContextSide parse_context_side(std::string_view name);

struct OptionPrediction {
  int chosen_index = 0;
  std::array<double, 4> scores{};
};

// Index of the largest score; lowest index wins ties.
int argmax_first(std::span<const double> scores);

std::array<double, 4> baseline_scores(const EmbeddingProvider& provider, const QuestionRecord& record,
                                      InputFormat format, ContextSide side = ContextSide::Support);

OptionPrediction predict_option(const EmbeddingProvider& provider, const QuestionRecord& record,
                                InputFormat format, ContextSide side = ContextSide::Support);

}  // namespace answervault
