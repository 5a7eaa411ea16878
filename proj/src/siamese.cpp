#include "answervault/siamese.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "answervault/random.hpp"

namespace answervault {

using nlohmann::json;

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::Contrastive: return "contrastive";
    case LossKind::Triplet: return "triplet";
    case LossKind::Bce: return "bce";
  }
  return "contrastive";
}

LossKind parse_loss(std::string_view name) {
  for (LossKind k : {LossKind::Contrastive, LossKind::Triplet, LossKind::Bce}) {
    if (loss_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown loss '" + std::string(name) + "' (expected contrastive|triplet|bce)");
}

void EncoderConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid encoder config: ") + what);
  };
  require(vocab_size >= 2, "vocab_size must be >= 2");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(max_len >= 1, "max_len must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(std::isfinite(margin) && margin >= 0.0, "margin must be >= 0");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
  require(std::isfinite(init_range) && init_range >= 0.0, "init_range must be >= 0");
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},       {"hidden_dim", c.hidden_dim},
           {"max_len", c.max_len},       {"margin", c.margin},             {"learning_rate", c.learning_rate},
           {"init_range", c.init_range}, {"epochs", c.epochs},             {"batch_size", c.batch_size},
           {"seed", c.seed},             {"loss", std::string(loss_name(c.loss))}};
}

void from_json(const json& j, EncoderConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("max_len").get_to(c.max_len);
  j.at("margin").get_to(c.margin);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("init_range").get_to(c.init_range);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  c.loss = parse_loss(j.at("loss").get<std::string>());
}

// ---------------------------------------------------------------------------
// Model

SiameseModel::SiameseModel(EncoderConfig config, Vocabulary vocab)
    : embedding("embedding", {config.vocab_size, config.embed_dim}),
      proj1_weight("proj1.weight", {config.hidden_dim, config.embed_dim}),
      proj1_bias("proj1.bias", {config.hidden_dim}),
      proj2_weight("proj2.weight", {config.hidden_dim, config.hidden_dim}),
      proj2_bias("proj2.bias", {config.hidden_dim}),
      head_scale("head.scale", {}),
      head_bias("head.bias", {}),
      config_(std::move(config)),
      vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.size() > config_.vocab_size) {
    throw std::invalid_argument("vocabulary has " + std::to_string(vocab_.size()) +
                                " tokens but vocab_size is " + std::to_string(config_.vocab_size));
  }
  Rng rng(config_.seed);
  const double r = config_.init_range;
  for (auto* p : {&embedding, &proj1_weight, &proj2_weight}) {
    for (auto& v : p->value()) v = rng.uniform(-r, r);
  }
  head_scale.value()[0] = 1.0;
  head_bias.value()[0] = 0.0;
}

std::vector<ad::Parameter*> SiameseModel::parameters() {
  return {&embedding, &proj1_weight, &proj1_bias, &proj2_weight, &proj2_bias, &head_scale, &head_bias};
}

std::vector<const ad::Parameter*> SiameseModel::parameters() const {
  return {&embedding, &proj1_weight, &proj1_bias, &proj2_weight, &proj2_bias, &head_scale, &head_bias};
}

bool SiameseModel::operator==(const SiameseModel& other) const {
  if (!(config_ == other.config_) || !(vocab_ == other.vocab_)) return false;
  auto a = parameters();
  auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return true;
}

namespace {

template <typename Model>
EncoderVars bind_impl(ad::Graph& g, Model& m) {
  return EncoderVars{g.parameter(m.embedding),  g.parameter(m.proj1_weight), g.parameter(m.proj1_bias),
                     g.parameter(m.proj2_weight), g.parameter(m.proj2_bias), g.parameter(m.head_scale),
                     g.parameter(m.head_bias)};
}

}  // namespace

EncoderVars bind(ad::Graph& g, SiameseModel& model) { return bind_impl(g, model); }
EncoderVars bind(ad::Graph& g, const SiameseModel& model) { return bind_impl(g, model); }

ad::Var encode(ad::Graph& g, const EncoderVars& vars, const TokenSequence& seq, std::size_t vocab_size) {
  for (auto id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw std::out_of_range("encode: token id " + std::to_string(id) + " >= vocab_size " +
                              std::to_string(vocab_size));
    }
  }
  auto rows = g.embedding_gather(vars.embedding, seq.ids);
  auto pooled = g.masked_mean_pool(rows, seq.length);
  auto hidden = g.tanh(g.affine(vars.proj1_weight, vars.proj1_bias, pooled));
  return g.affine(vars.proj2_weight, vars.proj2_bias, hidden);
}

TokenSequence SiameseModel::tokenize(std::string_view text) const {
  return answervault::encode(vocab_, text, config_.max_len);
}

std::vector<double> SiameseModel::encode_text(const TokenSequence& seq) const {
  ad::Graph g;
  auto vars = bind(g, *this);
  auto out = answervault::encode(g, vars, seq, config_.vocab_size);
  auto v = g.value(out);
  return {v.begin(), v.end()};
}

std::vector<double> SiameseModel::encode_text(std::string_view text) const {
  return encode_text(tokenize(text));
}

namespace {

double euclidean(std::span<const double> u, std::span<const double> v) {
  double ss = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double n = std::sqrt(uu) * std::sqrt(vv);
  return n < 1e-12 ? 0.0 : uv / n;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double SiameseModel::similarity(std::span<const double> u, std::span<const double> v) const {
  if (u.size() != v.size()) throw std::invalid_argument("similarity: dimension mismatch");
  if (config_.loss == LossKind::Bce) {
    return bce_probability(cosine(u, v), head_scale.value()[0], head_bias.value()[0]);
  }
  return 1.0 / (1.0 + euclidean(u, v));
}

double SiameseModel::similarity(std::string_view a, std::string_view b) const {
  return similarity(encode_text(a), encode_text(b));
}

std::array<double, 4> SiameseModel::score_options(const QuestionRecord& record, InputFormat format) const {
  const auto pairs = make_pairs(record, format);
  const auto context = encode_text(pairs.front().right);
  std::array<double, 4> scores{};
  for (std::size_t i = 0; i < 4; ++i) scores[i] = similarity(encode_text(pairs[i].left), context);
  return scores;
}

// ---------------------------------------------------------------------------
// Losses

double contrastive_loss(double distance, int label, double margin) {
  if (label == 1) return distance * distance;
  const double h = std::max(margin - distance, 0.0);
  return h * h;
}

double triplet_loss(double d_ap, double d_an, double margin) { return std::max(d_ap - d_an + margin, 0.0); }

double bce_probability(double cos, double scale, double bias) { return stable_sigmoid(scale * cos + bias); }

double bce_loss(double probability, int label) {
  const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double bce_similarity_loss(std::span<const double> u, std::span<const double> v, int label, double scale,
                           double bias) {
  if (u.size() != v.size()) throw std::invalid_argument("bce_similarity_loss: dimension mismatch");
  return bce_loss(bce_probability(cosine(u, v), scale, bias), label);
}

ad::Var contrastive_loss(ad::Graph& g, ad::Var distance, int label, double margin) {
  if (label == 1) return g.square(distance);
  return g.square(g.relu(g.add_scalar(g.scale(distance, -1.0), margin)));
}

ad::Var triplet_loss(ad::Graph& g, ad::Var d_ap, ad::Var d_an, double margin) {
  return g.relu(g.add_scalar(g.sub(d_ap, d_an), margin));
}

ad::Var bce_similarity_loss(ad::Graph& g, const EncoderVars& vars, ad::Var u, ad::Var v, int label) {
  auto logit = g.add(g.mul(vars.head_scale, g.cosine_similarity(u, v)), vars.head_bias);
  auto p = g.clamp(g.sigmoid(logit), kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (label == 1) return g.scale(g.log(p), -1.0);
  return g.scale(g.log(g.add_scalar(g.scale(p, -1.0), 1.0)), -1.0);
}

// ---------------------------------------------------------------------------
// Training

namespace {

// One record's worth of encoded training units.
struct Group {
  std::array<TokenSequence, 4> lefts;
  TokenSequence context;
  int correct = 0;
};

std::vector<std::string> training_texts(std::span<const QuestionRecord> records, InputFormat format) {
  std::vector<std::string> texts;
  texts.reserve(records.size() * 5);
  for (const auto& r : records) {
    auto pairs = make_pairs(r, format);
    for (auto& p : pairs) texts.push_back(std::move(p.left));
    texts.push_back(std::move(pairs.front().right));
  }
  return texts;
}

std::vector<Group> make_groups(const SiameseModel& model, std::span<const QuestionRecord> records,
                               InputFormat format) {
  std::vector<Group> groups;
  groups.reserve(records.size());
  for (const auto& r : records) {
    const auto pairs = make_pairs(r, format);
    Group grp;
    for (std::size_t i = 0; i < 4; ++i) grp.lefts[i] = model.tokenize(pairs[i].left);
    grp.context = model.tokenize(pairs.front().right);
    grp.correct = r.correct_index;
    groups.push_back(std::move(grp));
  }
  return groups;
}

std::size_t units_per_group(LossKind kind) { return kind == LossKind::Triplet ? 3 : 4; }

// Sum of unit losses for one group, recorded on `g`.
ad::Var group_loss(ad::Graph& g, const EncoderVars& vars, const Group& grp, const EncoderConfig& cfg) {
  auto ctx = encode(g, vars, grp.context, cfg.vocab_size);
  std::vector<ad::Var> terms;
  terms.reserve(4);
  if (cfg.loss == LossKind::Triplet) {
    auto pos = encode(g, vars, grp.lefts[static_cast<std::size_t>(grp.correct)], cfg.vocab_size);
    auto d_ap = g.euclidean_distance(ctx, pos);
    for (int i = 0; i < 4; ++i) {
      if (i == grp.correct) continue;
      auto neg = encode(g, vars, grp.lefts[static_cast<std::size_t>(i)], cfg.vocab_size);
      terms.push_back(triplet_loss(g, d_ap, g.euclidean_distance(ctx, neg), cfg.margin));
    }
  } else {
    for (int i = 0; i < 4; ++i) {
      auto left = encode(g, vars, grp.lefts[static_cast<std::size_t>(i)], cfg.vocab_size);
      const int label = i == grp.correct ? 1 : 0;
      if (cfg.loss == LossKind::Contrastive) {
        terms.push_back(contrastive_loss(g, g.euclidean_distance(left, ctx), label, cfg.margin));
      } else {
        terms.push_back(bce_similarity_loss(g, vars, left, ctx, label));
      }
    }
  }
  return g.sum(terms);
}

template <typename Model>
double groups_mean_loss(Model& model, const std::vector<Group>& groups) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& grp : groups) {
    ad::Graph g;
    auto vars = bind(g, std::as_const(model));
    total += g.scalar_value(group_loss(g, vars, grp, model.config()));
  }
  return total / static_cast<double>(groups.size() * units_per_group(model.config().loss));
}

double groups_accuracy(const SiameseModel& model, const std::vector<Group>& groups) {
  if (groups.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& grp : groups) {
    const auto ctx = model.encode_text(grp.context);
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double s = model.similarity(model.encode_text(grp.lefts[i]), ctx);
      if (i == 0 || s > best_score) {
        best_score = s;
        best = i;
      }
    }
    correct += static_cast<int>(best) == grp.correct;
  }
  return static_cast<double>(correct) / static_cast<double>(groups.size());
}

}  // namespace

SiameseModel initialize_model(const EncoderConfig& config, const TrainingData& data) {
  config.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training data");
  return SiameseModel(config, Vocabulary::build(training_texts(data.train, data.format), config.vocab_size));
}

TrainingResult train(const EncoderConfig& config, const TrainingData& data, const EpochCallback& on_epoch) {
  TrainingResult result{initialize_model(config, data), 0.0, {}};
  SiameseModel& model = result.model;

  const auto groups = make_groups(model, data.train, data.format);
  const auto val_groups = make_groups(model, data.validation, data.format);
  result.initial_loss = groups_mean_loss(model, groups);

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(splitmix64(config.seed) ^ 0x73687566666c65ULL);
  const auto params = model.parameters();
  const double per_unit = static_cast<double>(units_per_group(config.loss));

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      ad::Graph g;
      auto vars = bind(g, model);
      std::vector<ad::Var> losses;
      losses.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) losses.push_back(group_loss(g, vars, groups[order[k]], config));
      auto batch_sum = g.sum(losses);
      const double batch_value = g.scalar_value(batch_sum);
      if (!std::isfinite(batch_value)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
      }
      epoch_total += batch_value;
      auto loss = g.scale(batch_sum, 1.0 / (static_cast<double>(end - start) * per_unit));
      for (auto* p : params) p->zero_grad();
      g.backward(loss);
      for (auto* p : params) p->sgd_step(config.learning_rate);
    }
    for (auto* p : params) p->zero_grad();
    for (const auto* p : std::as_const(model).parameters()) {
      for (double v : p->value()) {
        if (!std::isfinite(v)) {
          throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (non-finite " +
                              p->name() + ")");
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_total / (static_cast<double>(groups.size()) * per_unit);
    if (!val_groups.empty()) stats.validation_accuracy = groups_accuracy(model, val_groups);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

double mean_loss(const SiameseModel& model, std::span<const QuestionRecord> records, InputFormat format) {
  return groups_mean_loss(model, make_groups(model, records, format));
}

double option_accuracy(const SiameseModel& model, std::span<const QuestionRecord> records, InputFormat format) {
  return groups_accuracy(model, make_groups(model, records, format));
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kMagic[8] = {'A', 'N', 'S', 'V', 'A', 'U', 'L', 'T'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void blob(std::string_view s) {
    uint<std::uint64_t>(s.size());
    bytes(s);
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw CheckpointError("truncated checkpoint");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T uint() {
    auto s = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string_view blob() { return bytes(uint<std::uint64_t>()); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const SiameseModel& model) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.blob(json(model.config()).dump());
  w.blob(model.vocab().serialize());
  const auto params = model.parameters();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->name().size()));
    w.bytes(p->name());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->shape().size()));
    for (auto d : p->shape()) w.uint<std::uint64_t>(d);
    for (double v : p->value()) w.f64(v);
  }
  w.uint<std::uint64_t>(fnv1a(w.str()));
  return std::move(w.str());
}

std::uint64_t model_fingerprint(const SiameseModel& model) { return fnv1a(serialize_model(model)); }

SiameseModel deserialize_model(std::string_view bytes, std::optional<std::size_t> expected_vocab_size) {
  Reader r(bytes);
  if (r.remaining() < sizeof(kMagic) || r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }

  EncoderConfig config;
  try {
    config = json::parse(r.blob()).get<EncoderConfig>();
    config.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
  }
  if (expected_vocab_size && *expected_vocab_size != config.vocab_size) {
    throw CheckpointError("checkpoint vocab_size " + std::to_string(config.vocab_size) + " does not match expected " +
                          std::to_string(*expected_vocab_size));
  }
  Vocabulary vocab;
  const auto vocab_text = r.blob();
  try {
    vocab = Vocabulary::deserialize(vocab_text, config.vocab_size);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint vocabulary: ") + e.what());
  }

  SiameseModel model(config, std::move(vocab));
  auto params = model.parameters();
  const auto count = r.uint<std::uint32_t>();
  if (count != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " parameter arrays, expected " +
                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    const auto name = r.bytes(r.uint<std::uint32_t>());
    if (name != p->name()) throw CheckpointError("unexpected parameter '" + std::string(name) + "'");
    const auto rank = r.uint<std::uint32_t>();
    ad::Shape shape;
    if (rank > 2) throw CheckpointError("parameter '" + p->name() + "' has unsupported rank");
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.uint<std::uint64_t>());
    if (shape != p->shape()) {
      throw CheckpointError("parameter '" + p->name() + "' has shape " + ad::shape_string(shape) +
                            ", config implies " + ad::shape_string(p->shape()));
    }
    for (auto& v : p->value()) v = r.f64();
  }
  const std::size_t body = r.pos();
  const auto checksum = r.uint<std::uint64_t>();
  if (checksum != fnv1a(bytes.substr(0, body))) throw CheckpointError("corrupt checkpoint (checksum mismatch)");
  if (r.remaining() != 0) throw CheckpointError("corrupt checkpoint (trailing bytes)");
  return model;
}

void save_model(const SiameseModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

SiameseModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_model(ss.str(), expected_vocab_size);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace answervault
