#pragma once

// Hierarchical character-to-word tagger:
//   character embeddings
//   -> character BiLSTM with independent forward/backward unit counts
//   -> stacked word-level BiLSTM with variational dropout
//   -> one tanh MLP + softmax head per predicted attribute (POS first).

#include <charprobe/corpus.hpp>
#include <charprobe/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace charprobe {

struct ModelConfig {
  int char_emb_dim = 256;
  int fwd_units = 64;
  int bwd_units = 64;
  int word_hidden_total = 128;  // split evenly over the two word directions
  int word_layers = 2;
  double dropout_rate = 0.5;
  // Initial forget-gate bias of the character LSTMs. All other biases start at 0.
  double char_forget_bias = 1.0;
  std::vector<Attribute> attributes;  // attributes[0] is POS
  Charset charset;

  int char_units() const { return fwd_units + bwd_units; }
  int word_hidden_per_direction() const { return word_hidden_total / 2; }
  // Throws ConfigError naming the offending field.
  void validate() const;
  // Throws ConfigError for an attribute the model does not predict.
  int attribute_index(const std::string& name) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class Direction { forward, backward };

std::string direction_name(Direction d);

/// Per-character outputs of every character-layer unit for one word.
/// values(i, c) is unit i's output at character position c. Forward units
/// come first. A backward unit's value at c is its state after reading
/// characters |w|-1 down to c, so both directions are indexed by position.
struct ActivationTrace {
  std::u32string word;
  Matrix values;
  std::vector<Direction> directions;

  int units() const { return static_cast<int>(values.rows()); }
  int length() const { return static_cast<int>(values.cols()); }
};

/// Parameters of one LSTM direction. Gate blocks of the 4H rows are ordered
/// [input, forget, candidate, output].
struct LstmWeights {
  Parameter* wx = nullptr;  // 4H x I
  Parameter* wh = nullptr;  // 4H x H
  Parameter* b = nullptr;   // 4H x 1
  int hidden() const { return static_cast<int>(wh->value.cols()); }
};

/// Runs one LSTM direction over `inputs`. When `reverse` is set the sequence
/// is consumed from the last element to the first. The result is indexed by
/// input position either way. Masks, when given, are multiplied into every
/// step's input and previous hidden state respectively.
std::vector<NodeId> run_lstm(Graph& g, const LstmWeights& w, std::span<const NodeId> inputs,
                             bool reverse, bool trainable, const Matrix* input_mask = nullptr,
                             const Matrix* recurrent_mask = nullptr);

/// Token characters and gold labels mapped to model indices. A gold label of
/// -1 marks a value outside the tagset (possible on dev/test data).
struct EncodedSentence {
  std::vector<std::vector<int>> chars;
  std::vector<std::vector<int>> gold;  // [token][attribute]
};

EncodedSentence encode_sentence(const ModelConfig& config, const Sentence& sentence);

/// Output logits: [token][attribute] -> graph node (column of tagset size).
using SentenceLogits = std::vector<std::vector<NodeId>>;

/// Per-token, per-attribute probability distributions.
using Distributions = std::vector<std::vector<Vector>>;

ParameterSet init_model(const ModelConfig& config, std::uint64_t seed);

class Tagger {
 public:
  Tagger(ModelConfig config, std::uint64_t seed);
  // Checks that `params` has exactly the tensors `config` needs.
  Tagger(ModelConfig config, ParameterSet params);
  Tagger(const Tagger& other);
  Tagger& operator=(const Tagger& other);
  Tagger(Tagger&&) noexcept;
  Tagger& operator=(Tagger&&) noexcept;
  ~Tagger();

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  struct WordEncoding {
    Vector vector;  // concat(final forward state, final backward state)
    std::optional<ActivationTrace> trace;
  };
  WordEncoding encode_word(std::u32string_view word, bool record_trace) const;

  // Trainable graph: gradients flow into parameters(). `dropout` may be null
  // for a dropout-free training graph.
  SentenceLogits build(Graph& g, const EncodedSentence& sentence, Rng* dropout);
  // Evaluation graph: parameters enter as constants, no dropout.
  SentenceLogits build_eval(Graph& g, const EncodedSentence& sentence) const;

  Distributions tag_sentence(const Sentence& sentence, bool train_mode, Rng* rng) const;
  Distributions tag_encoded(const EncodedSentence& sentence) const;

 private:
  struct Layout;

  SentenceLogits build_impl(Graph& g, const EncodedSentence& s, Rng* dropout,
                            bool trainable) const;
  NodeId encode_word_node(Graph& g, std::span<const int> chars, bool trainable,
                          std::vector<NodeId>* fwd_states, std::vector<NodeId>* bwd_states,
                          std::vector<NodeId>* projection_cache) const;
  void bind();

  ModelConfig config_;
  ParameterSet params_;
  std::unique_ptr<Layout> layout_;
};

/// Saved model: configuration, parameters and free-form metadata.
struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  KeyValues metadata;

  Tagger tagger() const { return Tagger(config, params); }
};

inline constexpr const char* kCheckpointMagic = "CHPRCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model configuration as key-value records (used in checkpoints and run
/// configs). Charset and tagsets are included.
KeyValues model_config_to_key_values(const ModelConfig& config);
ModelConfig model_config_from_key_values(const KeyValues& kv);

}  // namespace charprobe
