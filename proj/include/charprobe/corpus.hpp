#pragma once

// CoNLL-U ingestion, token normalization, inventories and split policies.

#include <charprobe/text.hpp>

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace charprobe {

struct Token {
  std::string form;
  std::string lemma = "_";
  std::string upos;
  std::map<std::string, std::string> feats;

  bool operator==(const Token&) const = default;
};

using Sentence = std::vector<Token>;

// Inflectional affixation classes (S/s strongly/weakly suffixing, P/p
// prefixing, "=" equal, "none" little affixation).
enum class Affixation { strong_suffix, weak_suffix, strong_prefix, weak_prefix, equal, little };
enum class Synthesis { agglutinative, fusional, introflexive, isolating };

std::string affixation_code(Affixation a);
Affixation parse_affixation(const std::string& code);
// Row label used in aggregate tables, e.g. "S. suffix".
std::string affixation_label(Affixation a);
std::string synthesis_name(Synthesis s);
Synthesis parse_synthesis(const std::string& name);

struct Treebank {
  std::string name;
  std::map<std::string, std::vector<Sentence>> splits;
  Affixation affixation = Affixation::strong_suffix;
  Synthesis synthesis = Synthesis::fusional;

  bool has_split(const std::string& split) const;
  // Throws DataError naming the split when missing.
  const std::vector<Sentence>& split(const std::string& split) const;
};

/// Reads CoNLL-U. Comments, multiword ranges and empty nodes are skipped;
/// only FORM, LEMMA, UPOS and FEATS are retained.
std::vector<Sentence> parse_conllu(std::istream& in);
std::vector<Sentence> parse_conllu(std::string_view text);
std::vector<Sentence> load_conllu(const std::filesystem::path& path);

std::string serialize_conllu(const std::vector<Sentence>& sentences);
void save_conllu(const std::vector<Sentence>& sentences, const std::filesystem::path& path);

/// "http" anywhere -> "URL"; else "@" anywhere -> "EMAIL". Case-sensitive.
std::string normalize_token(const std::string& form);
void normalize_forms(std::vector<Sentence>& sentences);

/// Label of a token that lacks an attribute.
inline constexpr const char* kNoneValue = "NONE";
inline constexpr const char* kPosAttribute = "POS";

/// One predicted attribute: "POS" (the UPOS column) or a FEATS attribute name.
struct Attribute {
  std::string name;
  std::vector<std::string> values;

  // -1 for a value outside the tagset.
  int index_of(const std::string& value) const;
  bool operator==(const Attribute&) const = default;
};

/// Character inventory. Index 0 is the reserved unknown-character slot.
class Charset {
 public:
  Charset() = default;
  explicit Charset(std::vector<char32_t> symbols);

  static constexpr int kUnknown = 0;

  int index_of(char32_t c) const;
  int size() const { return static_cast<int>(symbols_.size()) + 1; }
  // Known symbols in index order (index i + 1).
  const std::vector<char32_t>& symbols() const { return symbols_; }
  std::vector<int> encode(std::u32string_view word) const;

  bool operator==(const Charset& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<char32_t> symbols_;
  std::map<char32_t, int> index_;
};

struct Inventories {
  Charset charset;
  std::vector<Attribute> attributes;  // POS first
};

/// Charset from normalized train forms plus UNK; POS tagset from UPOS values;
/// every FEATS attribute seen in train gets its observed values plus NONE.
Inventories build_inventories(const std::vector<Sentence>& train);

/// Gold label of `token` for `attribute` (NONE when a feature is absent).
std::string attribute_value(const Token& token, const std::string& attribute);

enum class SplitPolicy {
  standard,       // train and dev given
  shuffle_split,  // pool everything, seeded shuffle, 85/15 train/dev
  test_as_dev,    // train and test given; dev aliases test
};

SplitPolicy parse_split_policy(const std::string& name);
std::string split_policy_name(SplitPolicy p);

Treebank make_splits(Treebank treebank, SplitPolicy policy, std::uint64_t seed);

/// Treebank metadata file: `name`, `affixation`, `synthesis`, `train`, `dev`,
/// `test`, `split_policy`, `split_seed`. Paths are relative to the file.
struct TreebankMetadata {
  std::string name;
  Affixation affixation = Affixation::strong_suffix;
  Synthesis synthesis = Synthesis::fusional;
  std::map<std::string, std::filesystem::path> split_paths;
  SplitPolicy policy = SplitPolicy::standard;
  std::uint64_t split_seed = 0;

  static TreebankMetadata from_key_values(const KeyValues& kv, const std::filesystem::path& base);
  KeyValues to_key_values() const;
};

/// Loads the metadata file, reads and normalizes every split, applies the
/// split policy.
Treebank load_treebank(const std::filesystem::path& metadata_path);

}  // namespace charprobe
