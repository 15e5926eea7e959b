#include <charprobe/probe.hpp>

#include <algorithm>
#include <map>

#include <json.hpp>

namespace charprobe {

std::string base_measure_name(BaseMeasure m) {
  return m == BaseMeasure::avg_abs ? "avg_abs" : "mad";
}

BaseMeasure parse_base_measure(const std::string& name) {
  if (name == "avg_abs" || name == "avgabs") return BaseMeasure::avg_abs;
  if (name == "mad") return BaseMeasure::mad;
  throw ConfigError("unknown base measure '" + name + "' (expected avgabs or mad)");
}

double measure_range(BaseMeasure m) { return m == BaseMeasure::avg_abs ? 1.0 : 2.0; }

void ProbeConfig::validate() const {
  if (freq_threshold < 1) throw ConfigError("freq_threshold must be positive");
  if (!(unambiguity_threshold > 0.0 && unambiguity_threshold <= 1.0)) {
    throw ConfigError("unambiguity_threshold must lie in (0, 1]");
  }
  if (bins < 2) throw ConfigError("bins must be at least 2");
}

KeyValues ProbeConfig::to_key_values() const {
  KeyValues kv;
  kv.set("freq_threshold", std::to_string(freq_threshold));
  kv.set("unambiguity_threshold", format_double(unambiguity_threshold));
  std::string tags;
  for (const std::string& t : excluded_tags) tags += (tags.empty() ? "" : ",") + t;
  kv.set("excluded_tags", tags);
  kv.set("bins", std::to_string(bins));
  kv.set("measure", base_measure_name(measure));
  kv.set("token_weighting", token_weighting ? "true" : "false");
  return kv;
}

ProbeConfig ProbeConfig::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, ProbeConfig{});
}

ProbeConfig ProbeConfig::from_key_values(const KeyValues& kv, ProbeConfig c) {
  c.freq_threshold = kv.get_int("freq_threshold", c.freq_threshold);
  c.unambiguity_threshold = kv.get_double("unambiguity_threshold", c.unambiguity_threshold);
  if (kv.has("excluded_tags")) {
    c.excluded_tags.clear();
    for (const std::string& t : split(kv.get("excluded_tags"), ',')) {
      const auto tag = trim(t);
      if (!tag.empty()) c.excluded_tags.emplace(tag);
    }
  }
  c.bins = kv.get_int("bins", c.bins);
  if (kv.has("measure")) c.measure = parse_base_measure(kv.get("measure"));
  if (kv.has("token_weighting")) {
    const std::string& v = kv.get("token_weighting");
    if (v != "true" && v != "false") throw ConfigError("token_weighting must be true or false");
    c.token_weighting = v == "true";
  }
  c.validate();
  return c;
}

std::vector<SelectedWord> select_words(const std::vector<Sentence>& sentences,
                                       const ProbeConfig& config) {
  config.validate();
  std::map<std::string, std::map<std::string, int>> tag_counts;
  for (const Sentence& s : sentences) {
    for (const Token& t : s) ++tag_counts[t.form][t.upos];
  }
  std::vector<SelectedWord> out;
  for (const auto& [form, tags] : tag_counts) {
    int total = 0;
    const std::pair<const std::string, int>* best = nullptr;
    for (const auto& entry : tags) {
      total += entry.second;
      if (best == nullptr || entry.second > best->second) best = &entry;
    }
    if (total < config.freq_threshold) continue;
    if (static_cast<double>(best->second) < config.unambiguity_threshold * total) continue;
    if (config.excluded_tags.contains(best->first)) continue;
    out.push_back({form, best->first, total});
  }
  if (out.empty()) {
    throw AnalysisError("no word type passes the frequency (" +
                        std::to_string(config.freq_threshold) + ") and unambiguity (" +
                        format_fixed(config.unambiguity_threshold, 2) +
                        ") thresholds; lower them or use a larger corpus");
  }
  return out;
}

int bin_index(double value, const ProbeConfig& config) {
  if (!(value >= 0.0)) throw ContractError("base measure value must be non-negative");
  const double b = std::floor(value / config.bin_width());
  return b >= config.bins - 1 ? config.bins - 1 : static_cast<int>(b);
}

Matrix JointHistogram::joint() const {
  const double n = total();
  if (!(n > 0.0)) throw AnalysisError("histogram is empty");
  return counts / n;
}

Vector JointHistogram::tag_marginal() const { return joint().rowwise().sum(); }

Vector JointHistogram::bin_marginal() const { return joint().colwise().sum().transpose(); }

JointHistogram bin_and_accumulate(std::span<const double> values, std::span<const int> tags,
                                  int n_tags, const ProbeConfig& config,
                                  std::span<const double> weights) {
  config.validate();
  if (values.size() != tags.size() || (!weights.empty() && weights.size() != values.size())) {
    throw DimensionError("values, tags and weights must have equal lengths");
  }
  JointHistogram h(n_tags, config.bins);
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (tags[k] < 0 || tags[k] >= n_tags) throw IndexError("tag index out of range");
    h.counts(tags[k], bin_index(values[k], config)) += weights.empty() ? 1.0 : weights[k];
  }
  return h;
}

PdiSummary summarize(std::vector<UnitScore> scores) {
  if (scores.empty()) throw AnalysisError("no units to summarize");
  std::sort(scores.begin(), scores.end(), [](const UnitScore& a, const UnitScore& b) {
    return a.pdi != b.pdi ? a.pdi > b.pdi : a.unit < b.unit;
  });
  PdiSummary s;
  for (const UnitScore& u : scores) s.mass += u.pdi;
  // Slack of a few ulps so equal scores split exactly at the half.
  const double half = s.mass / 2.0 + 1e-12 * s.mass;
  double cumulative = 0.0;
  for (const UnitScore& u : scores) {
    cumulative += u.pdi;
    if (cumulative > half) break;
    ++s.median_index;
  }
  s.head_size = std::max(s.median_index, 1);
  int forward = 0;
  for (int k = 0; k < s.head_size; ++k) forward += scores[k].direction == Direction::forward;
  s.head_forwardness = static_cast<double>(forward) / s.head_size;
  s.ranked = std::move(scores);
  return s;
}

PdiSummary probe_traces(std::span<const Matrix> traces, std::span<const Direction> directions,
                        std::span<const int> tags, int n_tags, const ProbeConfig& config,
                        std::span<const double> weights) {
  if (traces.empty()) throw AnalysisError("no traces to probe");
  if (traces.size() != tags.size()) throw DimensionError("one tag per trace is required");
  const auto units = static_cast<Eigen::Index>(directions.size());
  for (const Matrix& t : traces) {
    if (t.rows() != units) throw DimensionError("trace has " + std::to_string(t.rows()) +
                                                " units, expected " + std::to_string(units));
  }
  std::vector<UnitScore> scores;
  std::vector<double> values(traces.size());
  for (Eigen::Index i = 0; i < units; ++i) {
    for (std::size_t w = 0; w < traces.size(); ++w) values[w] = base_measure(traces[w], i, config.measure);
    const JointHistogram h = bin_and_accumulate(values, tags, n_tags, config, weights);
    scores.push_back({static_cast<int>(i), directions[i], pdi(h)});
  }
  return summarize(std::move(scores));
}

PdiReport compute_report(const Tagger& tagger, const std::vector<Sentence>& train,
                         const ProbeConfig& config) {
  const std::vector<SelectedWord> words = select_words(train, config);
  PdiReport r;
  r.config = config;
  r.fwd_units = tagger.config().fwd_units;
  r.bwd_units = tagger.config().bwd_units;

  std::map<std::string, int> tag_index;
  for (const SelectedWord& w : words) tag_index.emplace(w.pos, 0);
  for (auto& [tag, idx] : tag_index) {
    idx = static_cast<int>(r.tags.size());
    r.tags.push_back(tag);
  }
  r.words_per_tag.assign(r.tags.size(), 0);

  std::vector<Matrix> traces;
  std::vector<int> tags;
  std::vector<double> weights;
  std::vector<Direction> directions;
  for (const SelectedWord& w : words) {
    const auto enc = tagger.encode_word(utf8_decode(w.form), true);
    traces.push_back(enc.trace->values);
    if (directions.empty()) directions = enc.trace->directions;
    tags.push_back(tag_index.at(w.pos));
    ++r.words_per_tag[tags.back()];
    if (config.token_weighting) weights.push_back(w.count);
  }
  r.n_words = static_cast<int>(words.size());
  r.summary = probe_traces(traces, directions, tags, static_cast<int>(r.tags.size()), config,
                           weights);
  return r;
}

std::string report_tsv(const PdiReport& report) {
  std::string out = "#charprobe-pdi-report v" + std::to_string(kReportFormatVersion) + '\n';
  out += "rank\tunit\tdirection\tpdi\n";
  int rank = 1;
  for (const UnitScore& u : report.summary.ranked) {
    out += std::to_string(rank++) + '\t' + std::to_string(u.unit) + '\t' +
           direction_name(u.direction) + '\t' + format_double(u.pdi) + '\n';
  }
  return out;
}

std::string report_json(const PdiReport& report) {
  using nlohmann::ordered_json;
  const ProbeConfig& c = report.config;
  ordered_json config;
  config["freq_threshold"] = c.freq_threshold;
  config["unambiguity_threshold"] = c.unambiguity_threshold;
  config["excluded_tags"] = c.excluded_tags;
  config["bins"] = c.bins;
  config["measure"] = base_measure_name(c.measure);
  config["measure_range"] = measure_range(c.measure);
  config["bin_width"] = c.bin_width();
  config["token_weighting"] = c.token_weighting;
  ordered_json tags = ordered_json::object();
  for (std::size_t t = 0; t < report.tags.size(); ++t) tags[report.tags[t]] = report.words_per_tag[t];

  const PdiSummary& s = report.summary;
  int forward_total = 0;
  for (const UnitScore& u : s.ranked) forward_total += u.direction == Direction::forward;
  ordered_json j;
  j["format"] = "charprobe-pdi-report";
  j["format_version"] = kReportFormatVersion;
  j["treebank"] = report.treebank;
  j["seed"] = report.seed;
  j["fwd_units"] = report.fwd_units;
  j["bwd_units"] = report.bwd_units;
  j["measure"] = base_measure_name(report.config.measure);
  j["n_words"] = report.n_words;
  j["words_per_tag"] = tags;
  j["units"] = s.ranked.size();
  j["forward_units"] = forward_total;
  j["mass"] = s.mass;
  j["median_index"] = s.median_index;
  j["head_size"] = s.head_size;
  j["head_forwardness"] = s.head_forwardness;
  j["config"] = config;
  return j.dump(2) + '\n';
}

}  // namespace charprobe
