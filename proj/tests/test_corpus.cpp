#include <charprobe/corpus.hpp>
#include <charprobe/error.hpp>

#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace charprobe;

namespace {

const char* const kSample =
    "# sent_id = 1\n"
    "# text = The cats del\n"
    "1\tThe\tthe\tDET\t_\tDefinite=Def|PronType=Art\t2\tdet\t_\t_\n"
    "2\tcats\tcat\tNOUN\t_\tNumber=Plur\t0\troot\t_\t_\n"
    "3-4\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "3\tde\tde\tADP\t_\t_\t2\tcase\t_\t_\n"
    "4\tel\tel\tDET\t_\t_\t2\tdet\t_\t_\n"
    "4.1\tghost\t_\tNOUN\t_\t_\t_\t_\t2:dep\t_\n"
    "\n"
    "1\tmail\tmail\tVERB\t_\tMood=Ind\t0\troot\t_\t_\n"
    "2\tbob@example.com\t_\tPROPN\t_\t_\t1\tobj\t_\t_\n"
    "\n";

Sentence one(std::initializer_list<const char*> forms) {
  Sentence s;
  for (const char* f : forms) s.push_back(Token{f, "_", "X", {}});
  return s;
}

}  // namespace

TEST_CASE("parse a token line") {
  const auto s = parse_conllu("1\tcats\tcat\tNOUN\t_\tNumber=Plur\t0\troot\t_\t_\n");
  REQUIRE(s.size() == 1);
  REQUIRE(s[0].size() == 1);
  const Token& t = s[0][0];
  CHECK(t.form == "cats");
  CHECK(t.lemma == "cat");
  CHECK(t.upos == "NOUN");
  CHECK(t.feats == std::map<std::string, std::string>{{"Number", "Plur"}});
}

TEST_CASE("parse skips comments, ranges and empty nodes") {
  const auto s = parse_conllu(std::string(kSample));
  REQUIRE(s.size() == 2);
  REQUIRE(s[0].size() == 4);
  CHECK(s[0][2].form == "de");
  CHECK(s[0][3].form == "el");
  CHECK(s[0][2].feats.empty());
  CHECK(s[0][0].feats.size() == 2);
  CHECK(s[1][1].form == "bob@example.com");
}

TEST_CASE("parse errors carry the line number") {
  try {
    parse_conllu("# c\n1\tok\tok\tX\t_\t_\t0\troot\t_\t_\n2\tbad\tline\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_conllu("1\tx\tx\tX\t_\tNumber\t0\troot\t_\t_\n"), ParseError);
}

TEST_CASE("input without a trailing blank line still yields the last sentence") {
  const auto s = parse_conllu("1\ta\ta\tX\t_\t_\t0\troot\t_\t_");
  REQUIRE(s.size() == 1);
  CHECK(s[0][0].form == "a");
}

TEST_CASE("parse and serialize reach a fixed point") {
  const auto first = parse_conllu(std::string(kSample));
  const std::string text = serialize_conllu(first);
  const auto second = parse_conllu(text);
  CHECK(second == first);
  CHECK(serialize_conllu(second) == text);

  const auto dir = charprobe::test::scratch_dir("corpus-io");
  save_conllu(first, dir / "a.conllu");
  CHECK(load_conllu(dir / "a.conllu") == first);
  CHECK_THROWS_AS(load_conllu(dir / "missing.conllu"), IoError);
}

TEST_CASE("token normalization") {
  CHECK(normalize_token("http://example.org/a?b=1") == "URL");
  CHECK(normalize_token("bob@example.com") == "EMAIL");
  CHECK(normalize_token("cat") == "cat");
  CHECK(normalize_token("http://bob@host") == "URL");
  CHECK(normalize_token("HTTP://x") == "HTTP://x");
  CHECK(normalize_token("xhttpx") == "URL");
  for (const char* f : {"http://a", "a@b", "cat", "HTTP", "", "@"}) {
    CHECK(normalize_token(normalize_token(f)) == normalize_token(f));
  }
  std::vector<Sentence> s{one({"http://x", "a@b", "dog"})};
  normalize_forms(s);
  CHECK(s[0][0].form == "URL");
  CHECK(s[0][1].form == "EMAIL");
  CHECK(s[0][2].form == "dog");
}

TEST_CASE("inventories") {
  SUBCASE("charset from train forms plus the unknown slot") {
    const Inventories inv = build_inventories({one({"ab", "bc"})});
    CHECK(inv.charset.symbols() == std::vector<char32_t>{U'a', U'b', U'c'});
    CHECK(inv.charset.size() == 4);
    CHECK(inv.charset.index_of(U'z') == Charset::kUnknown);
  }
  SUBCASE("tagsets") {
    const auto train = parse_conllu(std::string(kSample));
    const Inventories inv = build_inventories(train);
    REQUIRE(!inv.attributes.empty());
    CHECK(inv.attributes[0].name == "POS");
    CHECK(inv.attributes[0].values ==
          std::vector<std::string>{"ADP", "DET", "NOUN", "PROPN", "VERB"});
    std::set<std::string> names;
    for (const Attribute& a : inv.attributes) {
      names.insert(a.name);
      if (a.name != "POS") CHECK(a.index_of("NONE") >= 0);
    }
    CHECK(names == std::set<std::string>{"Definite", "Mood", "Number", "POS", "PronType"});
    CHECK(attribute_value(train[0][2], "Number") == "NONE");
    CHECK(attribute_value(train[0][1], "Number") == "Plur");
    CHECK(attribute_value(train[0][1], "POS") == "NOUN");
  }
  SUBCASE("every normalized train token encodes without unknowns") {
    auto train = parse_conllu(std::string(kSample));
    normalize_forms(train);
    const Inventories inv = build_inventories(train);
    for (const Sentence& s : train) {
      for (const Token& t : s) {
        for (int c : inv.charset.encode(utf8_decode(t.form))) CHECK(c != Charset::kUnknown);
      }
    }
  }
  CHECK_THROWS_AS(build_inventories({}), DataError);
  CHECK_THROWS_AS(build_inventories({Sentence{}}), DataError);
}

TEST_CASE("charset rejects duplicates") {
  CHECK_THROWS_AS(Charset(std::vector<char32_t>{U'a', U'a'}), ConfigError);
}

TEST_CASE("split policies") {
  Treebank tb;
  tb.name = "toy";
  for (int k = 0; k < 1000; ++k) tb.splits["train"].push_back(one({std::to_string(k).c_str()}));

  SUBCASE("shuffle split gives 850/150 and is seeded") {
    const Treebank a = make_splits(tb, SplitPolicy::shuffle_split, 3);
    CHECK(a.split("train").size() == 850);
    CHECK(a.split("dev").size() == 150);
    CHECK(make_splits(tb, SplitPolicy::shuffle_split, 3).splits == a.splits);
    CHECK(make_splits(tb, SplitPolicy::shuffle_split, 4).splits != a.splits);
    std::set<std::string> all;
    for (const auto& [name, sentences] : a.splits) {
      for (const Sentence& s : sentences) all.insert(s[0].form);
    }
    CHECK(all.size() == 1000);
  }
  SUBCASE("test as dev") {
    Treebank t = tb;
    t.splits["test"] = {one({"x"}), one({"y"})};
    const Treebank a = make_splits(t, SplitPolicy::test_as_dev, 0);
    CHECK(a.split("dev") == a.split("test"));
    CHECK_THROWS_AS(make_splits(tb, SplitPolicy::test_as_dev, 0), DataError);
  }
  SUBCASE("standard needs dev") {
    CHECK_THROWS_AS(make_splits(tb, SplitPolicy::standard, 0), DataError);
  }
  CHECK_THROWS_AS(tb.split("dev"), DataError);
}

TEST_CASE("typology labels") {
  for (Affixation a : {Affixation::strong_suffix, Affixation::weak_suffix, Affixation::strong_prefix,
                       Affixation::weak_prefix, Affixation::equal, Affixation::little}) {
    CHECK(parse_affixation(affixation_code(a)) == a);
  }
  for (Synthesis s : {Synthesis::agglutinative, Synthesis::fusional, Synthesis::introflexive,
                      Synthesis::isolating}) {
    CHECK(parse_synthesis(synthesis_name(s)) == s);
  }
  CHECK(affixation_code(Affixation::strong_suffix) == "S");
  CHECK(affixation_code(Affixation::little) == "none");
  CHECK_THROWS_AS(parse_affixation("Q"), ConfigError);
  CHECK_THROWS_AS(parse_synthesis("polysynthetic"), ConfigError);
  CHECK_THROWS_AS(parse_split_policy("random"), ConfigError);
}

TEST_CASE("treebank metadata file") {
  const auto dir = charprobe::test::scratch_dir("corpus-meta");
  std::vector<Sentence> pool;
  for (int k = 0; k < 20; ++k) pool.push_back(one({"http://x", "w"}));
  save_conllu(pool, dir / "all.conllu");
  write_file(dir / "tb.kv",
             "name = toy\naffixation = p\nsynthesis = isolating\ntrain = all.conllu\n"
             "split_policy = shuffle_split\nsplit_seed = 9\n");
  const Treebank tb = load_treebank(dir / "tb.kv");
  CHECK(tb.name == "toy");
  CHECK(tb.affixation == Affixation::weak_prefix);
  CHECK(tb.synthesis == Synthesis::isolating);
  CHECK(tb.split("train").size() == 17);
  CHECK(tb.split("dev").size() == 3);
  CHECK(tb.split("train")[0][0].form == "URL");

  const TreebankMetadata meta = TreebankMetadata::from_key_values(KeyValues::load(dir / "tb.kv"), dir);
  const TreebankMetadata again = TreebankMetadata::from_key_values(meta.to_key_values(), dir);
  CHECK(again.split_paths == meta.split_paths);
  CHECK(again.policy == meta.policy);
  CHECK(again.split_seed == 9);

  write_file(dir / "bad.kv", "name = toy\ntrain = nowhere.conllu\ndev = nowhere.conllu\n");
  CHECK_THROWS_AS(load_treebank(dir / "bad.kv"), IoError);
}
