#include <charprobe/model.hpp>

#include <charprobe/error.hpp>

#include <cmath>
#include <array>
#include <map>

namespace charprobe {

std::string direction_name(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

void ModelConfig::validate() const {
  if (char_emb_dim <= 0) throw ConfigError("char_emb_dim must be positive");
  if (fwd_units < 0 || bwd_units < 0) throw ConfigError("unit counts must be non-negative");
  if (char_units() <= 0) throw ConfigError("fwd_units + bwd_units must be positive");
  if (word_hidden_total <= 0 || word_hidden_total % 2 != 0) {
    throw ConfigError("word_hidden_total must be positive and even");
  }
  if (word_layers < 1) throw ConfigError("word_layers must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!std::isfinite(char_forget_bias)) throw ConfigError("char_forget_bias must be finite");
  if (attributes.empty() || attributes.front().name != kPosAttribute) {
    throw ConfigError("the first attribute must be POS");
  }
  for (const Attribute& a : attributes) {
    if (a.values.empty()) throw ConfigError("attribute '" + a.name + "' has an empty tagset");
  }
}

int ModelConfig::attribute_index(const std::string& name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == name) return static_cast<int>(i);
  }
  throw ConfigError("model does not predict attribute '" + name + "'");
}

EncodedSentence encode_sentence(const ModelConfig& config, const Sentence& sentence) {
  EncodedSentence out;
  out.chars.reserve(sentence.size());
  out.gold.reserve(sentence.size());
  for (const Token& t : sentence) {
    out.chars.push_back(config.charset.encode(utf8_decode(t.form)));
    std::vector<int> labels;
    labels.reserve(config.attributes.size());
    for (const Attribute& a : config.attributes) labels.push_back(a.index_of(attribute_value(t, a.name)));
    out.gold.push_back(std::move(labels));
  }
  return out;
}

namespace {

// One LSTM direction over inputs already projected through W_x and b.
std::vector<NodeId> run_projected(Graph& g, NodeId wh, int hidden,
                                  std::span<const NodeId> projected, bool reverse,
                                  NodeId recurrent_mask) {
  const std::size_t n = projected.size();
  std::vector<NodeId> out(n, -1);
  NodeId h = -1;
  NodeId c = -1;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pos = reverse ? n - 1 - k : k;
    NodeId pre = projected[pos];
    if (h >= 0) {
      const NodeId h_in = recurrent_mask >= 0 ? g.mul(h, recurrent_mask) : h;
      pre = g.add(pre, g.matmul(wh, h_in));
    }
    const NodeId in_gate = g.sigmoid(g.slice(pre, 0, hidden));
    const NodeId candidate = g.tanh(g.slice(pre, 2 * hidden, hidden));
    const NodeId out_gate = g.sigmoid(g.slice(pre, 3 * hidden, hidden));
    const NodeId write = g.mul(in_gate, candidate);
    if (c >= 0) {
      const NodeId forget = g.sigmoid(g.slice(pre, hidden, hidden));
      c = g.add(g.mul(forget, c), write);
    } else {
      c = write;  // previous cell state is zero
    }
    h = g.mul(out_gate, g.tanh(c));
    out[pos] = h;
  }
  return out;
}

NodeId param_node(Graph& g, Parameter* p, bool trainable) {
  return trainable ? g.parameter(*p) : g.constant(*p);
}

Vector softmax(const Matrix& logits) {
  const Eigen::ArrayXd shifted = logits.col(0).array() - logits.maxCoeff();
  const Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

}  // namespace

std::vector<NodeId> run_lstm(Graph& g, const LstmWeights& w, std::span<const NodeId> inputs,
                             bool reverse, bool trainable, const Matrix* input_mask,
                             const Matrix* recurrent_mask) {
  const NodeId wx = param_node(g, w.wx, trainable);
  const NodeId wh = param_node(g, w.wh, trainable);
  const NodeId b = param_node(g, w.b, trainable);
  const NodeId in_mask = input_mask != nullptr ? g.input(*input_mask) : -1;
  const NodeId rec_mask = recurrent_mask != nullptr ? g.input(*recurrent_mask) : -1;
  std::vector<NodeId> projected;
  projected.reserve(inputs.size());
  for (NodeId x : inputs) {
    const NodeId x_in = in_mask >= 0 ? g.mul(x, in_mask) : x;
    projected.push_back(g.add(g.matmul(wx, x_in), b));
  }
  return run_projected(g, wh, w.hidden(), projected, reverse, rec_mask);
}

// ---------------------------------------------------------------------------

namespace {

std::string word_prefix(int layer, Direction d) {
  return "word.l" + std::to_string(layer) + "." + (d == Direction::forward ? "fwd" : "bwd");
}

// Expected tensor shapes, in creation order.
std::vector<std::pair<std::string, std::pair<int, int>>> expected_shapes(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::pair<int, int>>> shapes;
  auto lstm = [&](const std::string& prefix, int in, int h) {
    shapes.push_back({prefix + ".Wx", {4 * h, in}});
    shapes.push_back({prefix + ".Wh", {4 * h, h}});
    shapes.push_back({prefix + ".b", {4 * h, 1}});
  };
  shapes.push_back({"char.emb", {c.charset.size(), c.char_emb_dim}});
  if (c.fwd_units > 0) lstm("char.fwd", c.char_emb_dim, c.fwd_units);
  if (c.bwd_units > 0) lstm("char.bwd", c.char_emb_dim, c.bwd_units);
  const int wh = c.word_hidden_per_direction();
  for (int l = 0; l < c.word_layers; ++l) {
    const int in = l == 0 ? c.char_units() : c.word_hidden_total;
    lstm(word_prefix(l, Direction::forward), in, wh);
    lstm(word_prefix(l, Direction::backward), in, wh);
  }
  for (const Attribute& a : c.attributes) {
    const int t = static_cast<int>(a.values.size());
    shapes.push_back({"mlp." + a.name + ".W1", {t, c.word_hidden_total}});
    shapes.push_back({"mlp." + a.name + ".b1", {t, 1}});
    shapes.push_back({"mlp." + a.name + ".W2", {t, t}});
    shapes.push_back({"mlp." + a.name + ".b2", {t, 1}});
  }
  return shapes;
}

}  // namespace

ParameterSet init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParameterSet ps;
  for (const auto& [name, shape] : expected_shapes(config)) {
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
    ps.add(name, is_bias ? Matrix::Zero(shape.first, shape.second)
                         : glorot_uniform(shape.first, shape.second, rng));
    if (name.starts_with("char.") && name.ends_with(".b")) {
      Matrix& b = ps.at(name).value;
      const Eigen::Index h = b.rows() / 4;
      b.middleRows(h, h).setConstant(config.char_forget_bias);
    }
  }
  return ps;
}

struct Tagger::Layout {
  Parameter* emb = nullptr;
  std::optional<LstmWeights> char_fwd;
  std::optional<LstmWeights> char_bwd;
  std::vector<std::array<LstmWeights, 2>> word;
  struct Head {
    Parameter* w1;
    Parameter* b1;
    Parameter* w2;
    Parameter* b2;
  };
  std::vector<Head> heads;
};

Tagger::Tagger(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(init_model(config_, seed)) {
  bind();
}

Tagger::Tagger(ModelConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto shapes = expected_shapes(config_);
  if (shapes.size() != params_.size()) {
    throw ConfigError("parameter set has " + std::to_string(params_.size()) +
                      " tensors, configuration needs " + std::to_string(shapes.size()));
  }
  for (const auto& [name, shape] : shapes) {
    if (!params_.contains(name)) throw ConfigError("parameter set lacks '" + name + "'");
    const Matrix& v = params_.at(name).value;
    if (v.rows() != shape.first || v.cols() != shape.second) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_string(v) +
                           ", expected [" + std::to_string(shape.first) + "x" +
                           std::to_string(shape.second) + "]");
    }
  }
  bind();
}

Tagger::Tagger(const Tagger& other) : config_(other.config_), params_(other.params_) { bind(); }

Tagger& Tagger::operator=(const Tagger& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    bind();
  }
  return *this;
}

Tagger::Tagger(Tagger&&) noexcept = default;
Tagger& Tagger::operator=(Tagger&&) noexcept = default;
Tagger::~Tagger() = default;

void Tagger::bind() {
  auto layout = std::make_unique<Layout>();
  auto lstm = [&](const std::string& prefix) {
    return LstmWeights{&params_.at(prefix + ".Wx"), &params_.at(prefix + ".Wh"),
                       &params_.at(prefix + ".b")};
  };
  layout->emb = &params_.at("char.emb");
  if (config_.fwd_units > 0) layout->char_fwd = lstm("char.fwd");
  if (config_.bwd_units > 0) layout->char_bwd = lstm("char.bwd");
  for (int l = 0; l < config_.word_layers; ++l) {
    layout->word.push_back(
        {lstm(word_prefix(l, Direction::forward)), lstm(word_prefix(l, Direction::backward))});
  }
  for (const Attribute& a : config_.attributes) {
    const std::string p = "mlp." + a.name;
    layout->heads.push_back({&params_.at(p + ".W1"), &params_.at(p + ".b1"),
                             &params_.at(p + ".W2"), &params_.at(p + ".b2")});
  }
  layout_ = std::move(layout);
}

NodeId Tagger::encode_word_node(Graph& g, std::span<const int> chars, bool trainable,
                                std::vector<NodeId>* fwd_states, std::vector<NodeId>* bwd_states,
                                std::vector<NodeId>* projection_cache) const {
  if (chars.empty()) throw ContractError("cannot encode an empty word");
  const Layout& L = *layout_;
  const NodeId emb = param_node(g, L.emb, trainable);
  const int vocab = config_.charset.size();

  // projection_cache holds W_x e_c + b per (direction, character).
  std::vector<NodeId> local_cache;
  if (projection_cache == nullptr) projection_cache = &local_cache;
  if (projection_cache->size() < static_cast<std::size_t>(2 * vocab)) {
    projection_cache->assign(static_cast<std::size_t>(2 * vocab), -1);
  }

  auto direction = [&](const LstmWeights& w, int slot, bool reverse) {
    const NodeId wx = param_node(g, w.wx, trainable);
    const NodeId wh = param_node(g, w.wh, trainable);
    const NodeId b = param_node(g, w.b, trainable);
    std::vector<NodeId> projected;
    projected.reserve(chars.size());
    for (int c : chars) {
      if (c < 0 || c >= vocab) throw IndexError("character index " + std::to_string(c) + " outside charset");
      NodeId& cached = (*projection_cache)[static_cast<std::size_t>(slot * vocab + c)];
      if (cached < 0) cached = g.add(g.matmul(wx, g.lookup(emb, c)), b);
      projected.push_back(cached);
    }
    return run_projected(g, wh, w.hidden(), projected, reverse, -1);
  };

  NodeId fwd_final = -1;
  NodeId bwd_final = -1;
  if (L.char_fwd) {
    auto states = direction(*L.char_fwd, 0, false);
    fwd_final = states.back();
    if (fwd_states != nullptr) *fwd_states = std::move(states);
  }
  if (L.char_bwd) {
    auto states = direction(*L.char_bwd, 1, true);
    bwd_final = states.front();
    if (bwd_states != nullptr) *bwd_states = std::move(states);
  }
  if (fwd_final < 0) return bwd_final;
  if (bwd_final < 0) return fwd_final;
  return g.concat(fwd_final, bwd_final);
}

Tagger::WordEncoding Tagger::encode_word(std::u32string_view word, bool record_trace) const {
  if (word.empty()) throw ContractError("cannot encode an empty word");
  Graph g;
  const std::vector<int> chars = config_.charset.encode(word);
  std::vector<NodeId> fwd;
  std::vector<NodeId> bwd;
  const NodeId out = encode_word_node(g, chars, false, &fwd, &bwd, nullptr);
  WordEncoding enc;
  enc.vector = g.value(out).col(0);
  if (record_trace) {
    ActivationTrace trace;
    trace.word = std::u32string(word);
    const int n = static_cast<int>(word.size());
    trace.values.resize(config_.char_units(), n);
    for (int c = 0; c < n; ++c) {
      if (!fwd.empty()) trace.values.block(0, c, config_.fwd_units, 1) = g.value(fwd[c]);
      if (!bwd.empty()) trace.values.block(config_.fwd_units, c, config_.bwd_units, 1) = g.value(bwd[c]);
    }
    trace.directions.assign(config_.fwd_units, Direction::forward);
    trace.directions.insert(trace.directions.end(), config_.bwd_units, Direction::backward);
    enc.trace = std::move(trace);
  }
  return enc;
}

SentenceLogits Tagger::build_impl(Graph& g, const EncodedSentence& s, Rng* dropout,
                                  bool trainable) const {
  if (s.chars.empty()) throw ContractError("cannot tag an empty sentence");
  const Layout& L = *layout_;

  // Character layer has no dropout, so repeated words share one encoding.
  std::map<std::vector<int>, NodeId> word_nodes;
  std::vector<NodeId> projection_cache;
  std::vector<NodeId> layer_input;
  layer_input.reserve(s.chars.size());
  for (const auto& chars : s.chars) {
    auto [it, inserted] = word_nodes.try_emplace(chars, -1);
    if (inserted) it->second = encode_word_node(g, chars, trainable, nullptr, nullptr, &projection_cache);
    layer_input.push_back(it->second);
  }

  const int wh = config_.word_hidden_per_direction();
  for (int l = 0; l < config_.word_layers; ++l) {
    const int in_dim = l == 0 ? config_.char_units() : config_.word_hidden_total;
    std::array<std::vector<NodeId>, 2> outs;
    for (int d = 0; d < 2; ++d) {
      std::optional<Matrix> in_mask;
      std::optional<Matrix> rec_mask;
      if (dropout != nullptr) {
        in_mask = dropout_mask(in_dim, 1, config_.dropout_rate, *dropout);
        rec_mask = dropout_mask(wh, 1, config_.dropout_rate, *dropout);
      }
      outs[d] = run_lstm(g, L.word[l][d], layer_input, d == 1, trainable,
                         in_mask ? &*in_mask : nullptr, rec_mask ? &*rec_mask : nullptr);
    }
    for (std::size_t t = 0; t < layer_input.size(); ++t) layer_input[t] = g.concat(outs[0][t], outs[1][t]);
  }

  SentenceLogits logits(layer_input.size());
  for (std::size_t t = 0; t < layer_input.size(); ++t) {
    for (const Layout::Head& head : L.heads) {
      const NodeId hidden = g.tanh(
          g.add(g.matmul(param_node(g, head.w1, trainable), layer_input[t]), param_node(g, head.b1, trainable)));
      logits[t].push_back(
          g.add(g.matmul(param_node(g, head.w2, trainable), hidden), param_node(g, head.b2, trainable)));
    }
  }
  return logits;
}

SentenceLogits Tagger::build(Graph& g, const EncodedSentence& sentence, Rng* dropout) {
  return build_impl(g, sentence, dropout, true);
}

SentenceLogits Tagger::build_eval(Graph& g, const EncodedSentence& sentence) const {
  return build_impl(g, sentence, nullptr, false);
}

Distributions Tagger::tag_encoded(const EncodedSentence& sentence) const {
  Graph g;
  const SentenceLogits logits = build_eval(g, sentence);
  Distributions out(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    for (NodeId id : logits[t]) out[t].push_back(softmax(g.value(id)));
  }
  return out;
}

Distributions Tagger::tag_sentence(const Sentence& sentence, bool train_mode, Rng* rng) const {
  if (sentence.empty()) throw ContractError("cannot tag an empty sentence");
  const EncodedSentence enc = encode_sentence(config_, sentence);
  if (!train_mode) return tag_encoded(enc);
  if (rng == nullptr) throw ContractError("train-mode tagging needs a random generator");
  Graph g;
  const SentenceLogits logits = build_impl(g, enc, rng, false);
  Distributions out(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    for (NodeId id : logits[t]) out[t].push_back(softmax(g.value(id)));
  }
  return out;
}

}  // namespace charprobe
