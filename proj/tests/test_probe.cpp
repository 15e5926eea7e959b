#include <charprobe/error.hpp>
#include <charprobe/probe.hpp>
#include <charprobe/synthlang.hpp>

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

using namespace charprobe;

namespace {

// Mutual information as H(T) + H(B) - H(T, B), accumulated in long double.
double entropy_oracle(const Matrix& counts) {
  long double total = 0;
  for (Eigen::Index k = 0; k < counts.size(); ++k) total += counts.data()[k];
  auto h = [&](const std::vector<long double>& mass) {
    long double s = 0;
    for (long double m : mass) {
      if (m > 0) s -= (m / total) * std::log(m / total);
    }
    return s;
  };
  std::vector<long double> rows(counts.rows(), 0), cols(counts.cols(), 0), cells;
  for (Eigen::Index t = 0; t < counts.rows(); ++t) {
    for (Eigen::Index b = 0; b < counts.cols(); ++b) {
      rows[t] += counts(t, b);
      cols[b] += counts(t, b);
      cells.push_back(counts(t, b));
    }
  }
  return static_cast<double>(h(rows) + h(cols) - h(cells));
}

Matrix random_counts(Eigen::Index t, Eigen::Index b, Rng& rng, double zero_share = 0.3) {
  Matrix m(t, b);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    m.data()[k] = rng.uniform() < zero_share ? 0.0 : static_cast<double>(rng.below(20));
  }
  if (m.sum() == 0.0) m(0, 0) = 1.0;
  return m;
}

Sentence tokens(std::initializer_list<std::pair<const char*, const char*>> words) {
  Sentence s;
  for (auto [form, pos] : words) s.push_back(Token{form, "_", pos, {}});
  return s;
}

std::vector<Sentence> repeat(const char* form, const char* pos, int n) {
  std::vector<Sentence> out;
  for (int k = 0; k < n; ++k) out.push_back(tokens({{form, pos}}));
  return out;
}

void append(std::vector<Sentence>& to, const std::vector<Sentence>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

}  // namespace

TEST_CASE("probe defaults") {
  const ProbeConfig c;
  CHECK(c.freq_threshold == 8);
  CHECK(c.unambiguity_threshold == 0.6);
  CHECK(c.bins == 16);
  CHECK(c.excluded_tags == std::set<std::string>{"INTJ", "NUM", "PROPN", "PUNCT", "SYM", "X"});
  CHECK(measure_range(BaseMeasure::avg_abs) == 1.0);
  CHECK(measure_range(BaseMeasure::mad) == 2.0);
  CHECK(c.bin_width() == 1.0 / 16);
}

TEST_CASE("probe config validation and key values") {
  ProbeConfig c;
  c.bins = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ProbeConfig{};
  c.unambiguity_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ProbeConfig{};
  c.freq_threshold = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_base_measure("avgabs") == BaseMeasure::avg_abs);
  CHECK(parse_base_measure("mad") == BaseMeasure::mad);
  CHECK_THROWS_AS(parse_base_measure("max"), ConfigError);

  c = ProbeConfig{};
  c.measure = BaseMeasure::mad;
  c.bins = 8;
  c.excluded_tags = {"X", "SYM"};
  c.token_weighting = true;
  const ProbeConfig back = ProbeConfig::from_key_values(c.to_key_values());
  CHECK(back.measure == c.measure);
  CHECK(back.bins == 8);
  CHECK(back.excluded_tags == c.excluded_tags);
  CHECK(back.token_weighting);
  KeyValues none;
  none.set("excluded_tags", "");
  CHECK(ProbeConfig::from_key_values(none).excluded_tags.empty());
}

TEST_CASE("word selection") {
  std::vector<Sentence> train;
  append(train, repeat("dog", "NOUN", 9));
  append(train, repeat("dog", "VERB", 1));
  append(train, repeat("rare", "NOUN", 7));
  append(train, repeat("Paris", "PROPN", 20));
  append(train, repeat("run", "VERB", 5));
  append(train, repeat("run", "NOUN", 5));
  append(train, repeat("odd", "ADJ", 5));
  append(train, repeat("odd", "NOUN", 3));
  const auto words = select_words(train, ProbeConfig{});
  REQUIRE(words.size() == 2);
  CHECK(words[0].form == "dog");
  CHECK(words[0].pos == "NOUN");
  CHECK(words[0].count == 10);
  CHECK(words[1].form == "odd");
  CHECK(words[1].pos == "ADJ");

  ProbeConfig lenient;
  lenient.unambiguity_threshold = 0.5;
  const auto tied = select_words(train, lenient);
  REQUIRE(tied.size() == 3);
  CHECK(tied[2].form == "run");
  CHECK(tied[2].pos == "NOUN");

  ProbeConfig strict;
  strict.unambiguity_threshold = 0.6;
  strict.freq_threshold = 11;
  CHECK_THROWS_AS(select_words(repeat("a", "NOUN", 10), strict), AnalysisError);
}

TEST_CASE("base measures") {
  Matrix t(3, 4);
  t << 0.5, -0.5, 0.5, -0.5,  //
      0.0, 1.0, 0.2, 0.0,     //
      0.3, 0.3, 0.3, 0.3;
  CHECK(base_avg_abs(t, 0) == 0.5);
  CHECK(base_avg_abs(Matrix::Zero(2, 3), 1) == 0.0);
  CHECK(base_mad(t.leftCols(3), 1) == 1.0);
  CHECK(base_mad(t, 2) == 0.0);
  CHECK(base_mad(t.leftCols(1), 0) == 0.0);
  CHECK(base_measure(t, 0, BaseMeasure::mad) == 1.0);
  CHECK_THROWS_AS(base_avg_abs(t, 3), IndexError);
  CHECK_THROWS_AS(base_mad(t, -1), IndexError);
  CHECK_THROWS_AS(base_avg_abs(Matrix(2, 0), 0), ContractError);
}

TEST_CASE("binning") {
  ProbeConfig avg;
  CHECK(bin_index(0.42, avg) == 6);
  CHECK(bin_index(0.0, avg) == 0);
  CHECK(bin_index(1.0, avg) == 15);
  CHECK(bin_index(5.0, avg) == 15);
  ProbeConfig mad;
  mad.measure = BaseMeasure::mad;
  CHECK(bin_index(1.999, mad) == 15);
  CHECK(bin_index(0.96, mad) == 7);
  CHECK_THROWS_AS(bin_index(-0.01, avg), ContractError);
  CHECK_THROWS_AS(bin_index(std::nan(""), avg), ContractError);

  const std::vector<double> values{0.1, 0.1, 0.9};
  const std::vector<int> tags{1, 1, 0};
  const JointHistogram h = bin_and_accumulate(values, tags, 2, avg);
  CHECK(h.counts(1, 1) == 2.0);
  CHECK(h.counts(0, 14) == 1.0);
  CHECK(h.total() == 3.0);
  const std::vector<double> w{2.0, 3.0, 1.0};
  CHECK(bin_and_accumulate(values, tags, 2, avg, w).counts(1, 1) == 5.0);
  CHECK_THROWS_AS(bin_and_accumulate(values, std::vector<int>{0, 2, 0}, 2, avg), IndexError);
  CHECK_THROWS_AS(bin_and_accumulate(values, std::vector<int>{0}, 2, avg), DimensionError);
}

TEST_CASE("joint distribution and marginals") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    JointHistogram h;
    h.counts = random_counts(4, 16, rng);
    const Matrix p = h.joint();
    CHECK(std::fabs(p.sum() - 1.0) < 1e-12);
    CHECK((h.tag_marginal() - p.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((h.bin_marginal() - p.colwise().sum().transpose()).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(JointHistogram(2, 2).joint(), AnalysisError);
}

TEST_CASE("pdi examples") {
  CHECK(pdi(Matrix::Ones(2, 2)) == 0.0);
  CHECK(pdi(Matrix::Identity(2, 2)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(pdi(Matrix::Identity(2, 2)) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK_THROWS_AS(pdi(Matrix::Zero(3, 3)), AnalysisError);
  Matrix neg = Matrix::Ones(2, 2);
  neg(0, 1) = -1.0;
  CHECK_THROWS_AS(pdi(neg), ContractError);
}

TEST_CASE("pdi matches an entropy oracle on random histograms") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix c = random_counts(5, 16, rng);
    CHECK(std::fabs(pdi(c) - entropy_oracle(c)) < 1e-12);
  }
}

TEST_CASE("pdi bounds and invariances") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index t = 2 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng.below(15));
    const Matrix c = random_counts(t, b, rng);
    const double v = pdi(c);
    CHECK(v >= 0.0);
    CHECK(v <= std::min(std::log(static_cast<double>(t)), std::log(static_cast<double>(b))) + 1e-12);

    std::vector<Eigen::Index> rp(t), cp(b);
    std::iota(rp.begin(), rp.end(), 0);
    std::iota(cp.begin(), cp.end(), 0);
    rng.shuffle(std::span<Eigen::Index>(rp));
    rng.shuffle(std::span<Eigen::Index>(cp));
    Matrix permuted(t, b);
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < b; ++j) permuted(i, j) = c(rp[i], cp[j]);
    }
    CHECK(std::fabs(pdi(permuted) - v) < 1e-12);

    const Eigen::Index j = static_cast<Eigen::Index>(rng.below(b - 1));
    Matrix collapsed(t, b - 1);
    collapsed << c.leftCols(j), c.col(j) + c.col(j + 1), c.rightCols(b - j - 2);
    CHECK(pdi(collapsed) <= v + 1e-12);
  }
}

TEST_CASE("summary examples") {
  using D = Direction;
  SUBCASE("equal scores split the head evenly") {
    const PdiSummary s = summarize({{0, D::forward, 0.2}, {1, D::backward, 0.2}, {2, D::forward, 0.2}, {3, D::backward, 0.2}});
    CHECK(s.mass == doctest::Approx(0.8));
    CHECK(s.median_index == 2);
    CHECK(s.head_size == 2);
    CHECK(s.head_forwardness == 0.5);
    CHECK(s.ranked[0].unit == 0);
    CHECK(s.ranked[1].unit == 1);
  }
  SUBCASE("a dominant top unit forms the head alone") {
    const PdiSummary s = summarize({{0, D::backward, 0.05}, {1, D::forward, 0.9}, {2, D::backward, 0.05}});
    CHECK(s.median_index == 0);
    CHECK(s.head_size == 1);
    CHECK(s.head_forwardness == 1.0);
    CHECK(s.ranked[0].unit == 1);
  }
  SUBCASE("all-zero scores") {
    const PdiSummary s = summarize({{0, D::backward, 0.0}, {1, D::forward, 0.0}});
    CHECK(s.mass == 0.0);
    CHECK(s.median_index == 2);
    CHECK(s.head_forwardness == 0.5);
  }
  CHECK_THROWS_AS(summarize({}), AnalysisError);
}

TEST_CASE("summary invariants on random scores") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<UnitScore> scores;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = rng.uniform() < 0.2 ? 0.1 : rng.uniform();
      sum += v;
      scores.push_back({i, rng.uniform() < 0.5 ? Direction::forward : Direction::backward, v});
    }
    const PdiSummary s = summarize(scores);
    CHECK(std::fabs(s.mass - sum) < 1e-9);
    CHECK((s.head_forwardness >= 0.0 && s.head_forwardness <= 1.0));
    CHECK((s.median_index >= 0 && s.median_index <= n));
    double cumulative = 0.0;
    for (int k = 0; k < s.median_index; ++k) cumulative += s.ranked[k].pdi;
    CHECK(cumulative <= s.mass / 2 + 1e-9);
    if (s.median_index < n) CHECK(cumulative + s.ranked[s.median_index].pdi > s.mass / 2 - 1e-9);
    for (int k = 1; k < n; ++k) {
      const UnitScore& a = s.ranked[k - 1];
      const UnitScore& b = s.ranked[k];
      CHECK((a.pdi > b.pdi || (a.pdi == b.pdi && a.unit < b.unit)));
    }
  }
}

TEST_CASE("a planted unit ranks first") {
  Rng rng(29);
  const int units = 8, planted = 5, n_tags = 4;
  std::vector<Matrix> traces;
  std::vector<int> tags;
  for (int w = 0; w < 400; ++w) {
    const int tag = static_cast<int>(rng.below(n_tags));
    const int len = 2 + static_cast<int>(rng.below(6));
    Matrix t = charprobe::test::random_matrix(units, len, rng, -0.99, 0.99);
    const double a = 0.1 + 0.2 * tag;
    for (int c = 0; c < len; ++c) t(planted, c) = c % 2 == 0 ? a : -a;
    traces.push_back(t);
    tags.push_back(tag);
  }
  std::vector<Direction> dirs(units, Direction::forward);
  for (int i = 4; i < units; ++i) dirs[i] = Direction::backward;
  // The planted unit maps tags to distinct bins under both measures, so its
  // PDI is the tag entropy.
  std::vector<double> per_tag(n_tags, 0.0);
  for (int t : tags) per_tag[t] += 1.0;
  double entropy = 0.0;
  for (double c : per_tag) entropy -= c / tags.size() * std::log(c / tags.size());
  for (BaseMeasure m : {BaseMeasure::avg_abs, BaseMeasure::mad}) {
    ProbeConfig cfg;
    cfg.measure = m;
    const PdiSummary s = probe_traces(traces, dirs, tags, n_tags, cfg);
    CHECK(s.ranked[0].unit == planted);
    CHECK(s.ranked[0].direction == Direction::backward);
    CHECK(s.ranked[0].pdi == doctest::Approx(entropy).epsilon(1e-12));
    CHECK(s.ranked[0].pdi > 5.0 * s.ranked[1].pdi);
  }
  CHECK_THROWS_AS(probe_traces(traces, std::vector<Direction>(3, Direction::forward), tags, n_tags, ProbeConfig{}),
                  DimensionError);
}

TEST_CASE("reports over a model") {
  TypologyProfile p;
  p.n_stems = 30;
  const Treebank tb = generate(p, 120, 2);
  ModelConfig arch;
  arch.char_emb_dim = 8;
  arch.fwd_units = 3;
  arch.bwd_units = 2;
  arch.word_hidden_total = 4;
  arch.word_layers = 1;
  Inventories inv = build_inventories(tb.split("train"));
  arch.charset = inv.charset;
  arch.attributes = inv.attributes;
  const Tagger tagger(arch, 4);

  const PdiReport a = compute_report(tagger, tb.split("train"), ProbeConfig{});
  const PdiReport b = compute_report(tagger, tb.split("train"), ProbeConfig{});
  CHECK(report_tsv(a) == report_tsv(b));
  CHECK(report_json(a) == report_json(b));
  CHECK(a.summary.ranked.size() == 5);
  CHECK(a.fwd_units == 3);
  CHECK(std::accumulate(a.words_per_tag.begin(), a.words_per_tag.end(), 0) == a.n_words);

  const std::string tsv = report_tsv(a);
  CHECK(tsv.starts_with("#charprobe-pdi-report v1\nrank\tunit\tdirection\tpdi\n"));
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 7);

  const auto j = nlohmann::json::parse(report_json(a));
  CHECK(j["format"] == "charprobe-pdi-report");
  CHECK(j["format_version"] == 1);
  CHECK(j["units"] == 5);
  CHECK(j["mass"].get<double>() == a.summary.mass);
  CHECK(j["config"]["bins"] == 16);
  CHECK(j["config"]["bin_width"].get<double>() == 1.0 / 16);

  ProbeConfig weighted;
  weighted.token_weighting = true;
  const PdiReport w = compute_report(tagger, tb.split("train"), weighted);
  CHECK(w.n_words == a.n_words);

  ProbeConfig none;
  none.freq_threshold = 1000000;
  CHECK_THROWS_AS(compute_report(tagger, tb.split("train"), none), AnalysisError);
}
