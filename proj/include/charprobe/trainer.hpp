#pragma once

// SGD-with-momentum training, evaluation and dev-set model selection.

#include <charprobe/corpus.hpp>
#include <charprobe/model.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace charprobe {

struct TrainConfig {
  int max_epochs = 80;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  // Global gradient-norm clipping threshold; 0 disables clipping.
  double clip_norm = 5.0;
  // Stop after this many epochs without a dev POS improvement; 0 disables.
  int patience = 0;
  // Stop once dev POS accuracy reaches this value; 0 disables.
  double target_accuracy = 0.0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;  // mean per-token loss
  double dev_loss = 0.0;    // mean per-token loss, evaluation mode
  std::vector<double> dev_accuracy;  // per attribute, POS first
};

struct TrainResult {
  Checkpoint best;
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

/// Sum over tokens of the POS negative log-likelihood plus every other
/// attribute's. Labels of -1 (values unseen in training) contribute nothing.
NodeId sentence_loss(Graph& g, const SentenceLogits& logits,
                     const std::vector<std::vector<int>>& gold);
/// Same quantity computed from already-normalized distributions.
double sentence_loss(const Distributions& predicted, const std::vector<std::vector<int>>& gold);

struct Evaluation {
  std::vector<double> accuracy;  // per attribute
  double mean_loss = 0.0;        // per token
  std::size_t tokens = 0;
};

/// Token accuracy per attribute with argmax decoding.
Evaluation evaluate(const Tagger& tagger, const std::vector<Sentence>& sentences);

/// Sets the charset and attribute tagsets of `architecture` from `train`.
ModelConfig configure_for(ModelConfig architecture, const std::vector<Sentence>& train);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on the "train" split, selecting the epoch with the best "dev" POS
/// accuracy (earliest on ties). The charset and tagsets come from train.
TrainResult train(const Treebank& treebank, const ModelConfig& architecture,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// One SGD-with-momentum step on gradients already held by the parameters:
/// v <- momentum * v - lr * grad; value <- value + v.
void momentum_step(ParameterSet& params, std::vector<Matrix>& velocity, double learning_rate,
                   double momentum, double clip_norm);

/// Per-epoch log as TSV: epoch, train_loss, dev_loss, dev_acc_<attribute>...
std::string epoch_log_tsv(const std::vector<EpochLog>& log, const ModelConfig& config);

KeyValues train_config_to_key_values(const TrainConfig& c);
TrainConfig train_config_from_key_values(const KeyValues& kv, TrainConfig defaults = {});

}  // namespace charprobe
