#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "answervault/baseline.hpp"
#include "answervault/corpus.hpp"
#include "answervault/evaluate.hpp"
#include "answervault/siamese.hpp"

namespace httplib {
class Server;
}

namespace answervault {

struct ServiceOptions {
  double threshold = kDefaultThreshold;
  InputFormat format = InputFormat::OptionsOnly;
  bool cors = true;
};

// Everything a request may read. Built once at startup, never mutated.
class ServiceState {
 public:
  ServiceState(std::shared_ptr<const SiameseModel> model, std::optional<EmbeddingProvider> provider,
               std::vector<QuestionRecord> questions, ServiceOptions options = {});

  bool ready() const { return siamese_ != nullptr; }
  const std::string& model_version() const { return model_version_; }
  const std::vector<QuestionRecord>& questions() const { return questions_; }
  const QuestionRecord* find(std::string_view id) const;
  // nullptr when the named scorer is not configured
  const Scorer* scorer(std::string_view name) const;
  const ServiceOptions& options() const { return options_; }

 private:
  std::unique_ptr<SiameseScorer> siamese_;
  std::unique_ptr<BaselineScorer> baseline_;
  std::vector<QuestionRecord> questions_;
  std::unordered_map<std::string, std::size_t> index_;
  ServiceOptions options_;
  std::string model_version_;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

ApiResponse handle_health(const ServiceState& state);
ApiResponse handle_questions(const ServiceState& state, std::optional<std::string_view> offset,
                             std::optional<std::string_view> limit);
ApiResponse handle_score_options(const ServiceState& state, std::string_view request_body);
ApiResponse handle_validate(const ServiceState& state, std::string_view request_body);

// Thin HTTP wrapper around the handlers above.
class Service {
 public:
  explicit Service(std::shared_ptr<const ServiceState> state);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  std::shared_ptr<const ServiceState> state_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace answervault
