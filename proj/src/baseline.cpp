#include "answervault/baseline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace answervault {

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
  auto it = vectors.find(std::string(token));
  return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embeddings(std::string_view content) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) {
      throw EmbeddingError("embeddings line " + std::to_string(line_no) + ": token without vector");
    }
    std::vector<double> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto& f = fields[i];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw EmbeddingError("embeddings line " + std::to_string(line_no) + ": bad number '" + f + "'");
      }
      vec.push_back(v);
    }
    if (table.dim == 0) {
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw EmbeddingError("embeddings line " + std::to_string(line_no) + ": dimension " +
                           std::to_string(vec.size()) + ", expected " + std::to_string(table.dim));
    }
    table.vectors.insert_or_assign(fields[0], std::move(vec));
  }
  if (table.vectors.empty()) throw EmbeddingError("embeddings file is empty");
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_embeddings(ss.str());
  } catch (const EmbeddingError& e) {
    throw EmbeddingError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct EmbeddingProvider::LocalState {
  EmbeddingTable table;
};

struct EmbeddingProvider::RemoteState {
  explicit RemoteState(RemoteEndpoint ep)
      : endpoint(std::move(ep)), slots(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, endpoint.max_in_flight))) {
    const std::string& url = endpoint.url;
    if (url.rfind("http://", 0) != 0) {
      throw EmbeddingError("embedding url must start with http://: " + url);
    }
    const auto slash = url.find('/', 7);
    origin = slash == std::string::npos ? url : url.substr(0, slash);
    path = slash == std::string::npos ? "/embed" : url.substr(slash);
    if (origin.size() <= 7) throw EmbeddingError("embedding url has no host: " + url);
    if (endpoint.dim) dim = *endpoint.dim;
  }

  RemoteEndpoint endpoint;
  std::string origin;
  std::string path;
  std::counting_semaphore<> slots;
  mutable std::mutex mu;
  std::size_t dim = 0;
};

EmbeddingProvider EmbeddingProvider::local(EmbeddingTable table) {
  EmbeddingProvider p;
  p.local_ = std::make_shared<const LocalState>(LocalState{std::move(table)});
  return p;
}

EmbeddingProvider EmbeddingProvider::remote(RemoteEndpoint endpoint) {
  EmbeddingProvider p;
  p.remote_ = std::make_shared<RemoteState>(std::move(endpoint));
  return p;
}

bool EmbeddingProvider::is_remote() const { return remote_ != nullptr; }

std::size_t EmbeddingProvider::dim() const {
  if (local_) return local_->table.dim;
  std::lock_guard lock(remote_->mu);
  return remote_->dim;
}

namespace {

bool all_zero(const std::vector<double>& v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

}  // namespace

SentenceEmbedding EmbeddingProvider::embed(std::string_view text) const {
  const std::string normalized = normalize_text(text);
  SentenceEmbedding out;

  if (local_) {
    const auto& table = local_->table;
    out.vector.assign(table.dim, 0.0);
    std::size_t known = 0;
    for (const auto& tok : split_whitespace(normalized)) {
      if (const auto* v = table.find(tok)) {
        for (std::size_t i = 0; i < table.dim; ++i) out.vector[i] += (*v)[i];
        ++known;
      }
    }
    if (known == 0) {
      out.oov = true;
    } else {
      for (auto& x : out.vector) x /= static_cast<double>(known);
    }
    return out;
  }

  RemoteState& rs = *remote_;
  const std::string body = nlohmann::json{{"text", normalized}}.dump();
  const int attempts = 1 + std::max(0, rs.endpoint.retries);
  std::string last_error;

  rs.slots.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{rs.slots};

  for (int attempt = 0; attempt < attempts; ++attempt) {
    httplib::Client client(rs.origin);
    const auto secs = static_cast<time_t>(rs.endpoint.timeout_seconds);
    const auto usecs = static_cast<time_t>((rs.endpoint.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(rs.path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const auto doc = nlohmann::json::parse(res->body);
      out.vector = doc.at("vector").get<std::vector<double>>();
    } catch (const std::exception& e) {
      last_error = std::string("bad response: ") + e.what();
      continue;
    }
    {
      std::lock_guard lock(rs.mu);
      if (rs.dim == 0) rs.dim = out.vector.size();
      if (out.vector.size() != rs.dim || out.vector.empty()) {
        throw EmbeddingError("embedding endpoint returned dimension " + std::to_string(out.vector.size()) +
                             ", expected " + std::to_string(rs.dim));
      }
    }
    out.oov = all_zero(out.vector);
    return out;
  }
  throw EmbeddingError("embedding endpoint " + rs.endpoint.url + " failed after " + std::to_string(attempts) +
                       " attempt(s): " + last_error);
}

SentenceEmbedding embed_sentence(const EmbeddingProvider& provider, std::string_view text) {
  return provider.embed(text);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  const double c = uv / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

std::string_view context_side_name(ContextSide side) {
  return side == ContextSide::Support ? "support" : "question+support";
}

ContextSide parse_context_side(std::string_view name) {
  if (name == "support") return ContextSide::Support;
  if (name == "question+support") return ContextSide::QuestionAndSupport;
  throw std::invalid_argument("unknown context side '" + std::string(name) + "' (expected support|question+support)");
}

int argmax_first(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::array<double, 4> baseline_scores(const EmbeddingProvider& provider, const QuestionRecord& record,
                                      InputFormat format, ContextSide side) {
  const auto pairs = make_pairs(record, format);
  std::string context = pairs.front().right;
  if (side == ContextSide::QuestionAndSupport) context = record.question + " " + context;
  const auto ctx = provider.embed(context);
  std::array<double, 4> scores{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto opt = provider.embed(pairs[i].left);
    scores[i] = (ctx.oov || opt.oov) ? 0.0 : cosine_similarity(opt.vector, ctx.vector);
  }
  return scores;
}

OptionPrediction predict_option(const EmbeddingProvider& provider, const QuestionRecord& record,
                                InputFormat format, ContextSide side) {
  OptionPrediction p;
  p.scores = baseline_scores(provider, record, format, side);
  p.chosen_index = argmax_first(p.scores);
  return p;
}

}  // namespace answervault
