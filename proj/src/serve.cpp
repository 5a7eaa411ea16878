#include "answervault/serve.hpp"

#include <charconv>
#include <cstdio>

#include <httplib.h>

namespace answervault {

using nlohmann::json;

namespace {

constexpr std::size_t kDefaultPageSize = 20;
constexpr std::size_t kMaxPageSize = 1000;

ApiResponse error(int status, std::string message) { return {status, json{{"error", std::move(message)}}}; }

std::optional<std::size_t> parse_count(std::string_view text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

// Parses a JSON object body; on failure returns the error response.
std::optional<ApiResponse> parse_body(std::string_view body, json& out) {
  try {
    out = json::parse(body);
  } catch (const json::parse_error&) {
    return error(400, "request body is not valid JSON");
  }
  if (!out.is_object()) return error(400, "request body must be a JSON object");
  return std::nullopt;
}

std::optional<std::string> string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

ServiceState::ServiceState(std::shared_ptr<const SiameseModel> model, std::optional<EmbeddingProvider> provider,
                           std::vector<QuestionRecord> questions, ServiceOptions options)
    : questions_(std::move(questions)), options_(options) {
  if (model) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(model_fingerprint(*model)));
    model_version_ = "v" + std::to_string(kCheckpointVersion) + "-" + buf;
    siamese_ = std::make_unique<SiameseScorer>(std::move(model));
  }
  if (provider) baseline_ = std::make_unique<BaselineScorer>(std::move(*provider));
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    if (!index_.emplace(questions_[i].id, i).second) {
      throw std::invalid_argument("duplicate question id " + questions_[i].id);
    }
  }
}

const QuestionRecord* ServiceState::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &questions_[it->second];
}

const Scorer* ServiceState::scorer(std::string_view name) const {
  if (name == "siamese") return siamese_.get();
  if (name == "baseline") return baseline_.get();
  return nullptr;
}

ApiResponse handle_health(const ServiceState& state) {
  if (!state.ready()) return {503, json{{"status", "unavailable"}, {"model_version", nullptr}}};
  return {200, json{{"status", "ok"}, {"model_version", state.model_version()}}};
}

ApiResponse handle_questions(const ServiceState& state, std::optional<std::string_view> offset_text,
                             std::optional<std::string_view> limit_text) {
  std::size_t offset = 0, limit = kDefaultPageSize;
  if (offset_text) {
    auto v = parse_count(*offset_text);
    if (!v) return error(400, "offset must be a non-negative integer");
    offset = *v;
  }
  if (limit_text) {
    auto v = parse_count(*limit_text);
    if (!v) return error(400, "limit must be a non-negative integer");
    limit = std::min(*v, kMaxPageSize);
  }
  const auto& qs = state.questions();
  json items = json::array();
  for (std::size_t i = offset; i < qs.size() && i < offset + limit; ++i) {
    items.push_back({{"id", qs[i].id}, {"question", qs[i].question}, {"options", qs[i].options}});
  }
  return {200, json{{"total", qs.size()}, {"offset", offset}, {"limit", limit}, {"questions", items}}};
}

ApiResponse handle_score_options(const ServiceState& state, std::string_view request_body) {
  json req;
  if (auto err = parse_body(request_body, req)) return *err;
  const auto id = string_field(req, "question_id");
  if (!id) return error(400, "question_id (string) is required");
  const std::string scorer_name = string_field(req, "scorer").value_or("siamese");
  if (scorer_name != "siamese" && scorer_name != "baseline") {
    return error(400, "unknown scorer '" + scorer_name + "' (expected siamese|baseline)");
  }
  InputFormat format = state.options().format;
  if (auto f = string_field(req, "format")) {
    try {
      format = parse_format(*f);
    } catch (const std::invalid_argument& e) {
      return error(400, e.what());
    }
  }
  const QuestionRecord* record = state.find(*id);
  if (!record) return error(404, "unknown question_id '" + *id + "'");
  const Scorer* scorer = state.scorer(scorer_name);
  if (!scorer) return error(503, "scorer '" + scorer_name + "' is not configured");

  try {
    const auto verdict = predict(*scorer, *record, format);
    return {200, json{{"question_id", *id},
                      {"scorer", scorer_name},
                      {"format", std::string(format_name(format))},
                      {"scores", verdict.per_option_scores},
                      {"chosen_index", verdict.chosen_index}}};
  } catch (const EmbeddingError& e) {
    return error(502, e.what());
  }
}

ApiResponse handle_validate(const ServiceState& state, std::string_view request_body) {
  json req;
  if (auto err = parse_body(request_body, req)) return *err;
  const auto id = string_field(req, "question_id");
  if (!id) return error(400, "question_id (string) is required");
  const auto answer = string_field(req, "user_answer");
  if (!answer) return error(400, "user_answer (string) is required");
  if (normalize_text(*answer).empty()) return error(400, "user_answer is empty");
  const std::string scorer_name = string_field(req, "scorer").value_or("siamese");
  if (scorer_name != "siamese" && scorer_name != "baseline") {
    return error(400, "unknown scorer '" + scorer_name + "' (expected siamese|baseline)");
  }
  const QuestionRecord* record = state.find(*id);
  if (!record) return error(404, "unknown question_id '" + *id + "'");
  const Scorer* scorer = state.scorer(scorer_name);
  if (!scorer) return error(503, "scorer '" + scorer_name + "' is not configured");

  try {
    const auto verdict = validate_free_answer(*scorer, *record, *answer, state.options().threshold);
    json body = to_json(verdict);
    body["question_id"] = *id;
    body["scorer"] = scorer_name;
    return {200, body};
  } catch (const EmbeddingError& e) {
    return error(502, e.what());
  }
}

// ---------------------------------------------------------------------------

Service::Service(std::shared_ptr<const ServiceState> state)
    : state_(std::move(state)), server_(std::make_unique<httplib::Server>()) {
  auto reply = [this](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json; charset=utf-8");
    if (state_->options().cors) {
      res.set_header("Access-Control-Allow-Origin", "*");
    }
  };
  auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string_view> {
    if (!req.has_param(key)) return std::nullopt;
    auto it = req.params.find(key);
    return std::string_view(it->second);
  };

  server_->Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health(*state_));
  });
  server_->Get("/questions", [this, reply, param](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_questions(*state_, param(req, "offset"), param(req, "limit")));
  });
  server_->Post("/score-options", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_score_options(*state_, req.body));
  });
  server_->Post("/validate", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_validate(*state_, req.body));
  });
  server_->Options(R"(/.*)", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    if (state_->options().cors) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
  });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

void Service::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace answervault
