#include <charprobe/synthlang.hpp>

#include <charprobe/error.hpp>
#include <charprobe/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

namespace charprobe {

std::string affix_position_name(AffixPosition p) {
  switch (p) {
    case AffixPosition::prefix: return "prefix";
    case AffixPosition::suffix: return "suffix";
    case AffixPosition::none: return "none";
  }
  return "?";
}

AffixPosition parse_affix_position(const std::string& name) {
  if (name == "prefix") return AffixPosition::prefix;
  if (name == "suffix") return AffixPosition::suffix;
  if (name == "none") return AffixPosition::none;
  throw ConfigError("unknown affix position '" + name + "' (expected prefix, suffix, none)");
}

void TypologyProfile::validate() const {
  const int max_letters = static_cast<int>(std::strlen(kLetterOrder));
  if (alphabet_size < 2 || alphabet_size > max_letters) {
    throw ConfigError("alphabet_size must lie in [2, " + std::to_string(max_letters) + "]");
  }
  if (synthesis == Synthesis::introflexive) {
    throw ConfigError("introflexive synthesis is not generated");
  }
  if (affix_position == AffixPosition::none && synthesis != Synthesis::isolating) {
    throw ConfigError("affix_position=none requires synthesis=isolating");
  }
  if (n_stems < 1) throw ConfigError("n_stems must be positive");
  if (stem_len_min < 2 || stem_len_min > stem_len_max) {
    throw ConfigError("stem length range must satisfy 2 <= min <= max");
  }
  if (sent_len_min < 1 || sent_len_min > sent_len_max) {
    throw ConfigError("sentence length range must satisfy 1 <= min <= max");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("label_noise must lie in [0, 1]");
  if (!(zipf_exponent >= 0.0)) throw ConfigError("zipf_exponent must be non-negative");
  if (pos_tags.size() < 2) throw ConfigError("at least two POS tags are needed");
  if (feature_values.empty()) throw ConfigError("at least one feature value is needed");
  if (synthesis == Synthesis::isolating && static_cast<int>(pos_tags.size()) > n_stems) {
    throw ConfigError("isolating lexicon needs at least one stem per POS");
  }
}

KeyValues TypologyProfile::to_key_values() const {
  KeyValues kv;
  kv.set("affix_position", affix_position_name(affix_position));
  kv.set("synthesis", synthesis_name(synthesis));
  kv.set("alphabet_size", std::to_string(alphabet_size));
  kv.set("n_stems", std::to_string(n_stems));
  kv.set("stem_len", std::to_string(stem_len_min) + ".." + std::to_string(stem_len_max));
  kv.set("sent_len", std::to_string(sent_len_min) + ".." + std::to_string(sent_len_max));
  kv.set("label_noise", format_double(label_noise));
  kv.set("zipf_exponent", format_double(zipf_exponent));
  std::string tags;
  for (const auto& t : pos_tags) tags += (tags.empty() ? "" : " ") + t;
  kv.set("pos_tags", tags);
  kv.set("feature_name", feature_name);
  std::string values;
  for (const auto& v : feature_values) values += (values.empty() ? "" : " ") + v;
  kv.set("feature_values", values);
  return kv;
}

TypologyProfile TypologyProfile::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, TypologyProfile{});
}

TypologyProfile TypologyProfile::from_key_values(const KeyValues& kv, TypologyProfile p) {
  auto words = [](const std::string& s) {
    std::vector<std::string> out;
    for (auto& w : split(s, ' ')) {
      if (!w.empty()) out.push_back(w);
    }
    return out;
  };
  if (kv.has("affix_position")) p.affix_position = parse_affix_position(kv.get("affix_position"));
  if (kv.has("synthesis")) p.synthesis = parse_synthesis(kv.get("synthesis"));
  p.alphabet_size = kv.get_int("alphabet_size", p.alphabet_size);
  p.n_stems = kv.get_int("n_stems", p.n_stems);
  if (kv.has("stem_len")) std::tie(p.stem_len_min, p.stem_len_max) = parse_range(kv.get("stem_len"), "stem_len");
  if (kv.has("sent_len")) std::tie(p.sent_len_min, p.sent_len_max) = parse_range(kv.get("sent_len"), "sent_len");
  p.label_noise = kv.get_double("label_noise", p.label_noise);
  p.zipf_exponent = kv.get_double("zipf_exponent", p.zipf_exponent);
  if (kv.has("pos_tags")) p.pos_tags = words(kv.get("pos_tags"));
  p.feature_name = kv.get_or("feature_name", p.feature_name);
  if (kv.has("feature_values")) p.feature_values = words(kv.get("feature_values"));
  p.validate();
  return p;
}

namespace {

std::string random_string(const std::string& alphabet, int length, Rng& rng) {
  std::string s;
  for (int i = 0; i < length; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
  return s;
}

std::vector<std::string> unique_affixes(const std::string& alphabet, std::size_t count, Rng& rng) {
  const std::size_t capacity = alphabet.size() * alphabet.size();
  if (count > capacity) {
    throw ConfigError("alphabet of " + std::to_string(alphabet.size()) + " letters cannot form " +
                      std::to_string(count) + " distinct two-letter affixes");
  }
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string a = random_string(alphabet, 2, rng);
    if (seen.insert(a).second) out.push_back(std::move(a));
  }
  return out;
}

double stem_capacity(const TypologyProfile& p) {
  double total = 0.0;
  for (int len = p.stem_len_min; len <= p.stem_len_max; ++len) total += std::pow(p.alphabet_size, len);
  return total;
}

}  // namespace

Morphology build_morphology(const TypologyProfile& profile, std::uint64_t seed) {
  profile.validate();
  Rng rng(seed);
  Morphology m;
  m.alphabet.assign(kLetterOrder, static_cast<std::size_t>(profile.alphabet_size));

  const std::size_t n_pos = profile.pos_tags.size();
  const std::size_t n_feat = profile.feature_values.size();
  const std::size_t n_cells = n_pos * n_feat;
  switch (profile.synthesis) {
    case Synthesis::agglutinative: {
      auto affixes = unique_affixes(m.alphabet, n_pos + n_feat, rng);
      m.pos_affixes.assign(affixes.begin(), affixes.begin() + static_cast<std::ptrdiff_t>(n_pos));
      m.feature_affixes.assign(affixes.begin() + static_cast<std::ptrdiff_t>(n_pos), affixes.end());
      break;
    }
    case Synthesis::fusional: {
      if (n_cells < 4) throw ConfigError("fusional mode needs at least four (POS, feature) cells");
      // Cells cells[0] and cells[1] share one affix; cells[2] and cells[3]
      // use stem-final alternation.
      std::vector<std::size_t> cells(n_cells);
      for (std::size_t i = 0; i < n_cells; ++i) cells[i] = i;
      rng.shuffle(std::span<std::size_t>(cells));
      auto affixes = unique_affixes(m.alphabet, n_cells - 3, rng);
      m.fused_affixes.assign(n_cells, "");
      m.alternation.assign(n_cells, '\0');
      std::size_t next = 0;
      m.fused_affixes[cells[0]] = affixes[next];
      m.fused_affixes[cells[1]] = affixes[next++];
      const char first_alt = m.alphabet[rng.below(m.alphabet.size())];
      char second_alt = first_alt;
      while (second_alt == first_alt) second_alt = m.alphabet[rng.below(m.alphabet.size())];
      m.alternation[cells[2]] = first_alt;
      m.alternation[cells[3]] = second_alt;
      for (std::size_t k = 4; k < n_cells; ++k) m.fused_affixes[cells[k]] = affixes[next++];
      break;
    }
    case Synthesis::isolating:
    case Synthesis::introflexive:
      break;
  }

  if (stem_capacity(profile) < profile.n_stems) {
    throw ConfigError("alphabet and stem lengths cannot form " + std::to_string(profile.n_stems) +
                      " distinct stems");
  }
  std::set<std::string> seen;
  while (static_cast<int>(m.stems.size()) < profile.n_stems) {
    const int len = profile.stem_len_min +
                    static_cast<int>(rng.below(profile.stem_len_max - profile.stem_len_min + 1));
    std::string s = random_string(m.alphabet, len, rng);
    if (seen.insert(s).second) m.stems.push_back(std::move(s));
  }

  // Isolating lexicon: a balanced, shuffled assignment of stems to POS.
  std::vector<int> lexicon(m.stems.size());
  for (std::size_t i = 0; i < lexicon.size(); ++i) lexicon[i] = static_cast<int>(i % n_pos);
  rng.shuffle(std::span<int>(lexicon));
  m.stem_pos = std::move(lexicon);
  return m;
}

std::string inflect(const Morphology& morph, const TypologyProfile& profile, int stem, int pos,
                    int feature) {
  std::string form = morph.stems.at(static_cast<std::size_t>(stem));
  const std::size_t n_feat = profile.feature_values.size();
  switch (profile.synthesis) {
    case Synthesis::agglutinative:
      form += morph.pos_affixes.at(static_cast<std::size_t>(pos));
      form += morph.feature_affixes.at(static_cast<std::size_t>(feature));
      break;
    case Synthesis::fusional: {
      const std::size_t cell = static_cast<std::size_t>(pos) * n_feat + static_cast<std::size_t>(feature);
      const std::string& affix = morph.fused_affixes.at(cell);
      if (affix.empty()) {
        form.back() = morph.alternation.at(cell);
      } else {
        form += affix;
      }
      break;
    }
    case Synthesis::isolating:
    case Synthesis::introflexive:
      break;
  }
  if (profile.affix_position == AffixPosition::prefix) std::reverse(form.begin(), form.end());
  return form;
}

Treebank generate(const TypologyProfile& profile, int n_sentences, std::uint64_t seed) {
  if (n_sentences < 2) throw ConfigError("generate needs at least two sentences");
  const Morphology morph = build_morphology(profile, mix_seed(seed, 0));
  Rng rng(mix_seed(seed, 1));

  std::vector<double> cumulative(morph.stems.size());
  double total = 0.0;
  for (std::size_t r = 0; r < cumulative.size(); ++r) {
    total += std::pow(static_cast<double>(r + 1), -profile.zipf_exponent);
    cumulative[r] = total;
  }
  auto draw_stem = [&]() {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return static_cast<int>(it - cumulative.begin());
  };

  const int n_pos = static_cast<int>(profile.pos_tags.size());
  const int n_feat = static_cast<int>(profile.feature_values.size());
  const bool isolating = profile.synthesis == Synthesis::isolating;

  std::vector<Sentence> sentences;
  sentences.reserve(static_cast<std::size_t>(n_sentences));
  for (int s = 0; s < n_sentences; ++s) {
    const int len = profile.sent_len_min +
                    static_cast<int>(rng.below(profile.sent_len_max - profile.sent_len_min + 1));
    Sentence sentence;
    for (int k = 0; k < len; ++k) {
      const int stem = draw_stem();
      int pos = isolating ? morph.stem_pos[stem] : static_cast<int>(rng.below(n_pos));
      const int feature = isolating ? 0 : static_cast<int>(rng.below(n_feat));
      Token tok;
      tok.form = inflect(morph, profile, stem, pos, feature);
      tok.lemma = morph.stems[stem];
      if (profile.affix_position == AffixPosition::prefix) std::reverse(tok.lemma.begin(), tok.lemma.end());
      if (!isolating) tok.feats[profile.feature_name] = profile.feature_values[feature];
      // Noise is drawn for every token so noisy and clean corpora stay aligned.
      const double noise_draw = rng.uniform();
      const int noise_shift = 1 + static_cast<int>(rng.below(n_pos - 1));
      if (noise_draw < profile.label_noise) pos = (pos + noise_shift) % n_pos;
      tok.upos = profile.pos_tags[pos];
      sentence.push_back(std::move(tok));
    }
    sentences.push_back(std::move(sentence));
  }

  Treebank tb;
  tb.name = "synth-" + affix_position_name(profile.affix_position) + "-" + synthesis_name(profile.synthesis);
  switch (profile.affix_position) {
    case AffixPosition::prefix: tb.affixation = Affixation::strong_prefix; break;
    case AffixPosition::suffix: tb.affixation = Affixation::strong_suffix; break;
    case AffixPosition::none: tb.affixation = Affixation::little; break;
  }
  if (isolating) tb.affixation = Affixation::little;
  tb.synthesis = profile.synthesis;
  const std::size_t n_train = (sentences.size() * 85 + 50) / 100;
  tb.splits["train"].assign(sentences.begin(), sentences.begin() + static_cast<std::ptrdiff_t>(n_train));
  tb.splits["dev"].assign(sentences.begin() + static_cast<std::ptrdiff_t>(n_train), sentences.end());
  return tb;
}

std::filesystem::path emit_conllu(const Treebank& treebank, const TypologyProfile& profile,
                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory", dir.string());
  TreebankMetadata meta;
  meta.name = treebank.name;
  meta.affixation = treebank.affixation;
  meta.synthesis = treebank.synthesis;
  for (const auto& [split_name, sentences] : treebank.splits) {
    const std::string file = split_name + ".conllu";
    save_conllu(sentences, dir / file);
    meta.split_paths[split_name] = file;
  }
  const auto meta_path = dir / "treebank.kv";
  write_file(meta_path, meta.to_key_values().to_string());
  write_file(dir / "profile.kv", profile.to_key_values().to_string());
  return meta_path;
}

}  // namespace charprobe
