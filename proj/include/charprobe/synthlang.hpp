#pragma once

// Seeded generator of toy corpora with a controlled affix position and
// morphological synthesis type.

#include <charprobe/corpus.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace charprobe {

enum class AffixPosition { prefix, suffix, none };

std::string affix_position_name(AffixPosition p);
AffixPosition parse_affix_position(const std::string& name);

struct TypologyProfile {
  AffixPosition affix_position = AffixPosition::suffix;
  Synthesis synthesis = Synthesis::agglutinative;
  int alphabet_size = 12;
  int n_stems = 200;
  int stem_len_min = 3;
  int stem_len_max = 6;
  int sent_len_min = 4;
  int sent_len_max = 12;
  double label_noise = 0.0;
  // Stem frequencies follow rank^-zipf_exponent.
  double zipf_exponent = 1.0;
  std::vector<std::string> pos_tags{"NOUN", "VERB", "ADJ", "ADV"};
  std::string feature_name = "Number";
  std::vector<std::string> feature_values{"Sing", "Plur", "Dual"};

  void validate() const;
  KeyValues to_key_values() const;
  static TypologyProfile from_key_values(const KeyValues& kv);
  static TypologyProfile from_key_values(const KeyValues& kv, TypologyProfile defaults);
};

/// The morpheme inventory behind a generated corpus. Cells are indexed
/// pos * n_features + feature.
struct Morphology {
  std::string alphabet;
  std::vector<std::string> stems;
  std::vector<int> stem_pos;  // isolating lexicon: POS index per stem
  // Agglutinative: one affix per POS and one per feature value.
  std::vector<std::string> pos_affixes;
  std::vector<std::string> feature_affixes;
  // Fusional: one fused affix per cell; an empty affix marks a cell realized
  // by replacing the stem-final character with alternation[cell].
  std::vector<std::string> fused_affixes;
  std::vector<char> alternation;
};

/// Letters in the order they enter an alphabet of a given size.
inline constexpr const char* kLetterOrder = "abdeiklmnosucfghjpqrtvwxyz";

Morphology build_morphology(const TypologyProfile& profile, std::uint64_t seed);

/// Surface form of stem `stem` with the given POS and feature indices. In
/// prefix mode the whole suffixing form is mirrored, so affixes precede the
/// stem and prefix/suffix corpora are exact token-wise reversals.
std::string inflect(const Morphology& morph, const TypologyProfile& profile, int stem, int pos,
                    int feature);

/// Treebank with an 85/15 train/dev split.
Treebank generate(const TypologyProfile& profile, int n_sentences, std::uint64_t seed);

/// Writes train.conllu, dev.conllu, treebank.kv (metadata) and profile.kv
/// into `dir`; returns the metadata path.
std::filesystem::path emit_conllu(const Treebank& treebank, const TypologyProfile& profile,
                                  const std::filesystem::path& dir);

}  // namespace charprobe
