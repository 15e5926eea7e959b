#include <charprobe/corpus.hpp>

#include <charprobe/error.hpp>
#include <charprobe/rng.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace charprobe {

std::string affixation_code(Affixation a) {
  switch (a) {
    case Affixation::strong_suffix: return "S";
    case Affixation::weak_suffix: return "s";
    case Affixation::strong_prefix: return "P";
    case Affixation::weak_prefix: return "p";
    case Affixation::equal: return "=";
    case Affixation::little: return "none";
  }
  return "?";
}

Affixation parse_affixation(const std::string& code) {
  if (code == "S") return Affixation::strong_suffix;
  if (code == "s") return Affixation::weak_suffix;
  if (code == "P") return Affixation::strong_prefix;
  if (code == "p") return Affixation::weak_prefix;
  if (code == "=") return Affixation::equal;
  if (code == "none") return Affixation::little;
  throw ConfigError("unknown affixation class '" + code + "' (expected S, s, P, p, =, none)");
}

std::string affixation_label(Affixation a) {
  switch (a) {
    case Affixation::strong_suffix: return "S. suffix";
    case Affixation::weak_suffix: return "W. suffix";
    case Affixation::strong_prefix: return "S. prefix";
    case Affixation::weak_prefix: return "W. prefix";
    case Affixation::equal: return "Equal p/s";
    case Affixation::little: return "Little aff.";
  }
  return "?";
}

std::string synthesis_name(Synthesis s) {
  switch (s) {
    case Synthesis::agglutinative: return "agglutinative";
    case Synthesis::fusional: return "fusional";
    case Synthesis::introflexive: return "introflexive";
    case Synthesis::isolating: return "isolating";
  }
  return "?";
}

Synthesis parse_synthesis(const std::string& name) {
  if (name == "agglutinative" || name == "agg") return Synthesis::agglutinative;
  if (name == "fusional" || name == "fus") return Synthesis::fusional;
  if (name == "introflexive" || name == "int") return Synthesis::introflexive;
  if (name == "isolating" || name == "iso") return Synthesis::isolating;
  throw ConfigError("unknown synthesis class '" + name +
                    "' (expected agglutinative, fusional, introflexive, isolating)");
}

bool Treebank::has_split(const std::string& s) const { return splits.count(s) != 0; }

const std::vector<Sentence>& Treebank::split(const std::string& s) const {
  auto it = splits.find(s);
  if (it == splits.end()) throw DataError("treebank '" + name + "' has no '" + s + "' split");
  return it->second;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_feats(const std::string& column, std::size_t line_no) {
  std::map<std::string, std::string> feats;
  if (column == "_") return feats;
  for (const std::string& pair : split(column, '|')) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == pair.size()) {
      throw ParseError("malformed FEATS entry '" + pair + "'", line_no);
    }
    feats[pair.substr(0, eq)] = pair.substr(eq + 1);
  }
  return feats;
}

}  // namespace

std::vector<Sentence> parse_conllu(std::istream& in) {
  std::vector<Sentence> sentences;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      if (!current.empty()) sentences.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (line.front() == '#') continue;
    const std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 10) {
      throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()),
                       line_no);
    }
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    Token tok;
    tok.form = cols[1];
    tok.lemma = cols[2];
    tok.upos = cols[3];
    tok.feats = parse_feats(cols[5], line_no);
    if (tok.form.empty()) throw ParseError("empty FORM", line_no);
    current.push_back(std::move(tok));
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

std::vector<Sentence> parse_conllu(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in);
}

std::vector<Sentence> load_conllu(const std::filesystem::path& path) {
  return parse_conllu(read_file(path));
}

std::string serialize_conllu(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const Sentence& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Token& t = s[i];
      std::string feats;
      for (const auto& [k, v] : t.feats) {
        if (!feats.empty()) feats += '|';
        feats += k + "=" + v;
      }
      if (feats.empty()) feats = "_";
      out += std::to_string(i + 1) + '\t' + t.form + '\t' + (t.lemma.empty() ? "_" : t.lemma) +
             '\t' + t.upos + "\t_\t" + feats + '\t' + (i == 0 ? "0\troot" : "1\tdep") + "\t_\t_\n";
    }
    out += '\n';
  }
  return out;
}

void save_conllu(const std::vector<Sentence>& sentences, const std::filesystem::path& path) {
  write_file(path, serialize_conllu(sentences));
}

std::string normalize_token(const std::string& form) {
  if (form.find("http") != std::string::npos) return "URL";
  if (form.find('@') != std::string::npos) return "EMAIL";
  return form;
}

void normalize_forms(std::vector<Sentence>& sentences) {
  for (Sentence& s : sentences) {
    for (Token& t : s) t.form = normalize_token(t.form);
  }
}

// ---------------------------------------------------------------------------

int Attribute::index_of(const std::string& value) const {
  auto it = std::find(values.begin(), values.end(), value);
  return it == values.end() ? -1 : static_cast<int>(it - values.begin());
}

Charset::Charset(std::vector<char32_t> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i) + 1).second) {
      throw ConfigError("charset contains a duplicate character");
    }
  }
}

int Charset::index_of(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Charset::encode(std::u32string_view word) const {
  std::vector<int> ids;
  ids.reserve(word.size());
  for (char32_t c : word) ids.push_back(index_of(c));
  return ids;
}

std::string attribute_value(const Token& token, const std::string& attribute) {
  if (attribute == kPosAttribute) return token.upos;
  auto it = token.feats.find(attribute);
  return it == token.feats.end() ? std::string(kNoneValue) : it->second;
}

Inventories build_inventories(const std::vector<Sentence>& train) {
  std::size_t tokens = 0;
  std::set<char32_t> chars;
  std::set<std::string> pos;
  std::map<std::string, std::set<std::string>> feats;
  for (const Sentence& s : train) {
    for (const Token& t : s) {
      ++tokens;
      for (char32_t c : utf8_decode(normalize_token(t.form))) chars.insert(c);
      pos.insert(t.upos);
      for (const auto& [k, v] : t.feats) feats[k].insert(v);
    }
  }
  if (tokens == 0) throw DataError("cannot build inventories from an empty train split");

  Inventories inv;
  inv.charset = Charset(std::vector<char32_t>(chars.begin(), chars.end()));
  inv.attributes.push_back({kPosAttribute, std::vector<std::string>(pos.begin(), pos.end())});
  for (const auto& [name, values] : feats) {
    if (name == kPosAttribute) continue;
    Attribute a{name, std::vector<std::string>(values.begin(), values.end())};
    if (a.index_of(kNoneValue) < 0) a.values.push_back(kNoneValue);
    inv.attributes.push_back(std::move(a));
  }
  return inv;
}

// ---------------------------------------------------------------------------

SplitPolicy parse_split_policy(const std::string& name) {
  if (name == "standard") return SplitPolicy::standard;
  if (name == "shuffle_split") return SplitPolicy::shuffle_split;
  if (name == "test_as_dev") return SplitPolicy::test_as_dev;
  throw ConfigError("unknown split policy '" + name +
                    "' (expected standard, shuffle_split, test_as_dev)");
}

std::string split_policy_name(SplitPolicy p) {
  switch (p) {
    case SplitPolicy::standard: return "standard";
    case SplitPolicy::shuffle_split: return "shuffle_split";
    case SplitPolicy::test_as_dev: return "test_as_dev";
  }
  return "?";
}

Treebank make_splits(Treebank tb, SplitPolicy policy, std::uint64_t seed) {
  switch (policy) {
    case SplitPolicy::standard:
      tb.split("train");
      tb.split("dev");
      return tb;
    case SplitPolicy::test_as_dev:
      tb.split("train");
      tb.splits["dev"] = tb.split("test");
      return tb;
    case SplitPolicy::shuffle_split: {
      std::vector<Sentence> pool;
      for (const char* name : {"train", "dev", "test"}) {
        auto it = tb.splits.find(name);
        if (it != tb.splits.end()) pool.insert(pool.end(), it->second.begin(), it->second.end());
      }
      if (pool.empty()) throw DataError("treebank '" + tb.name + "' has no sentences to split");
      Rng rng(seed);
      rng.shuffle(std::span<Sentence>(pool));
      const std::size_t n_train = (pool.size() * 85 + 50) / 100;
      tb.splits.clear();
      tb.splits["train"].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
      tb.splits["dev"].assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
      return tb;
    }
  }
  return tb;
}

TreebankMetadata TreebankMetadata::from_key_values(const KeyValues& kv,
                                                   const std::filesystem::path& base) {
  TreebankMetadata m;
  m.name = kv.get("name");
  m.affixation = parse_affixation(kv.get_or("affixation", "S"));
  m.synthesis = parse_synthesis(kv.get_or("synthesis", "fusional"));
  m.policy = parse_split_policy(kv.get_or("split_policy", "standard"));
  m.split_seed = kv.get_u64("split_seed", 0);
  for (const char* split_name : {"train", "dev", "test"}) {
    if (!kv.has(split_name)) continue;
    std::filesystem::path p = kv.get(split_name);
    if (p.is_relative()) p = base / p;
    m.split_paths[split_name] = p;
  }
  return m;
}

KeyValues TreebankMetadata::to_key_values() const {
  KeyValues kv;
  kv.set("name", name);
  kv.set("affixation", affixation_code(affixation));
  kv.set("synthesis", synthesis_name(synthesis));
  kv.set("split_policy", split_policy_name(policy));
  kv.set("split_seed", std::to_string(split_seed));
  for (const auto& [split_name, path] : split_paths) kv.set(split_name, path.generic_string());
  return kv;
}

Treebank load_treebank(const std::filesystem::path& metadata_path) {
  const TreebankMetadata meta = TreebankMetadata::from_key_values(
      KeyValues::load(metadata_path), metadata_path.parent_path());
  Treebank tb;
  tb.name = meta.name;
  tb.affixation = meta.affixation;
  tb.synthesis = meta.synthesis;
  for (const auto& [split_name, path] : meta.split_paths) {
    if (!std::filesystem::exists(path)) throw IoError("split file does not exist", path.string());
    auto sentences = load_conllu(path);
    normalize_forms(sentences);
    tb.splits[split_name] = std::move(sentences);
  }
  return make_splits(std::move(tb), meta.policy, meta.split_seed);
}

}  // namespace charprobe
