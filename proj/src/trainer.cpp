#include <charprobe/trainer.hpp>

#include <charprobe/error.hpp>

#include <cmath>

namespace charprobe {

void TrainConfig::validate() const {
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0)) {
    throw ConfigError("target_accuracy must lie in [0, 1]");
  }
}

namespace {

void check_aligned(std::size_t outputs, const std::vector<std::vector<int>>& gold) {
  if (outputs != gold.size()) {
    throw ContractError("model produced " + std::to_string(outputs) + " tokens, gold has " +
                        std::to_string(gold.size()));
  }
}

}  // namespace

NodeId sentence_loss(Graph& g, const SentenceLogits& logits,
                     const std::vector<std::vector<int>>& gold) {
  check_aligned(logits.size(), gold);
  NodeId total = -1;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (logits[t].size() != gold[t].size()) {
      throw ContractError("token " + std::to_string(t) + ": attribute count mismatch");
    }
    for (std::size_t a = 0; a < logits[t].size(); ++a) {
      if (gold[t][a] < 0) continue;
      const NodeId nll = g.softmax_nll(logits[t][a], gold[t][a]);
      total = total < 0 ? nll : g.add(total, nll);
    }
  }
  if (total < 0) total = g.input(Matrix::Zero(1, 1));
  return total;
}

double sentence_loss(const Distributions& predicted, const std::vector<std::vector<int>>& gold) {
  check_aligned(predicted.size(), gold);
  double total = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    if (predicted[t].size() != gold[t].size()) {
      throw ContractError("token " + std::to_string(t) + ": attribute count mismatch");
    }
    for (std::size_t a = 0; a < predicted[t].size(); ++a) {
      const int label = gold[t][a];
      if (label < 0) continue;
      if (label >= predicted[t][a].size()) throw IndexError("gold label outside the distribution");
      total -= std::log(predicted[t][a](label));
    }
  }
  return total;
}

Evaluation evaluate(const Tagger& tagger, const std::vector<Sentence>& sentences) {
  const std::size_t n_attr = tagger.config().attributes.size();
  std::vector<std::size_t> correct(n_attr, 0);
  Evaluation ev;
  double loss = 0.0;
  for (const Sentence& s : sentences) {
    if (s.empty()) continue;
    const EncodedSentence enc = encode_sentence(tagger.config(), s);
    Graph g;
    const SentenceLogits logits = tagger.build_eval(g, enc);
    loss += g.scalar(sentence_loss(g, logits, enc.gold));
    for (std::size_t t = 0; t < logits.size(); ++t) {
      ++ev.tokens;
      for (std::size_t a = 0; a < n_attr; ++a) {
        Eigen::Index best = 0;
        g.value(logits[t][a]).col(0).maxCoeff(&best);
        if (enc.gold[t][a] >= 0 && best == enc.gold[t][a]) ++correct[a];
      }
    }
  }
  ev.accuracy.assign(n_attr, 0.0);
  if (ev.tokens > 0) {
    for (std::size_t a = 0; a < n_attr; ++a) {
      ev.accuracy[a] = static_cast<double>(correct[a]) / static_cast<double>(ev.tokens);
    }
    ev.mean_loss = loss / static_cast<double>(ev.tokens);
  }
  return ev;
}

ModelConfig configure_for(ModelConfig architecture, const std::vector<Sentence>& train) {
  Inventories inv = build_inventories(train);
  architecture.charset = std::move(inv.charset);
  architecture.attributes = std::move(inv.attributes);
  architecture.validate();
  return architecture;
}

void momentum_step(ParameterSet& params, std::vector<Matrix>& velocity, double learning_rate,
                   double momentum, double clip_norm) {
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    }
  }
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) sq += params[i].grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    velocity[i] = momentum * velocity[i] - (learning_rate * scale) * p.grad;
    p.value += velocity[i];
  }
}

TrainResult train(const Treebank& treebank, const ModelConfig& architecture,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const std::vector<Sentence>& train_split = treebank.split("train");
  const std::vector<Sentence>& dev_split = treebank.split("dev");
  if (train_split.empty() || dev_split.empty()) {
    throw DataError("treebank '" + treebank.name + "' needs non-empty train and dev splits");
  }

  const ModelConfig model_config = configure_for(architecture, train_split);
  Tagger tagger(model_config, mix_seed(config.seed, 0));
  Rng order_rng(mix_seed(config.seed, 1));
  Rng dropout_rng(mix_seed(config.seed, 2));

  std::vector<EncodedSentence> encoded;
  encoded.reserve(train_split.size());
  for (const Sentence& s : train_split) {
    if (!s.empty()) encoded.push_back(encode_sentence(model_config, s));
  }
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  KeyValues meta;
  meta.set("seed", std::to_string(config.seed));
  meta.set("treebank", treebank.name);

  auto record = [&](int epoch, double train_loss) {
    const Evaluation dev = evaluate(tagger, dev_split);
    EpochLog entry{epoch, train_loss, dev.mean_loss, dev.accuracy};
    const bool improved = result.log.empty() ||
                          entry.dev_accuracy[0] > result.log[result.best_epoch].dev_accuracy[0];
    result.log.push_back(entry);
    if (improved) {
      result.best_epoch = epoch;
      result.best.config = model_config;
      result.best.params = tagger.parameters();
      result.best.metadata = meta;
      result.best.metadata.set("epoch", std::to_string(epoch));
      result.best.metadata.set("dev_pos_accuracy", format_double(entry.dev_accuracy[0]));
    }
    if (on_epoch) on_epoch(entry);
  };

  record(0, evaluate(tagger, train_split).mean_loss);

  std::vector<Matrix> velocity;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t idx : order) {
      const EncodedSentence& s = encoded[idx];
      tagger.parameters().zero_grad();
      Graph g;
      const SentenceLogits logits = tagger.build(g, s, &dropout_rng);
      const NodeId loss = sentence_loss(g, logits, s.gold);
      loss_sum += g.scalar(loss);
      tokens += s.chars.size();
      g.backward(loss);
      momentum_step(tagger.parameters(), velocity, config.learning_rate, config.momentum,
                    config.clip_norm);
    }
    record(epoch, tokens > 0 ? loss_sum / static_cast<double>(tokens) : 0.0);
    if (config.patience > 0 && epoch - result.best_epoch >= config.patience) break;
    if (config.target_accuracy > 0.0 &&
        result.log.back().dev_accuracy[0] >= config.target_accuracy) {
      break;
    }
  }
  return result;
}

std::string epoch_log_tsv(const std::vector<EpochLog>& log, const ModelConfig& config) {
  std::string out = "epoch\ttrain_loss\tdev_loss";
  for (const Attribute& a : config.attributes) out += "\tdev_acc_" + a.name;
  out += '\n';
  for (const EpochLog& e : log) {
    out += std::to_string(e.epoch) + '\t' + format_double(e.train_loss) + '\t' +
           format_double(e.dev_loss);
    for (double acc : e.dev_accuracy) out += '\t' + format_double(acc);
    out += '\n';
  }
  return out;
}

KeyValues train_config_to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv.set("max_epochs", std::to_string(c.max_epochs));
  kv.set("learning_rate", format_double(c.learning_rate));
  kv.set("momentum", format_double(c.momentum));
  kv.set("seed", std::to_string(c.seed));
  kv.set("clip_norm", format_double(c.clip_norm));
  kv.set("patience", std::to_string(c.patience));
  kv.set("target_accuracy", format_double(c.target_accuracy));
  return kv;
}

TrainConfig train_config_from_key_values(const KeyValues& kv, TrainConfig c) {
  c.max_epochs = kv.get_int("max_epochs", c.max_epochs);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.seed = kv.get_u64("seed", c.seed);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.patience = kv.get_int("patience", c.patience);
  c.target_accuracy = kv.get_double("target_accuracy", c.target_accuracy);
  c.validate();
  return c;
}

}  // namespace charprobe
