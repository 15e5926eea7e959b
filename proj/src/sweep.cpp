#include <charprobe/sweep.hpp>

#include <charprobe/error.hpp>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace charprobe {

UnitSplit parse_unit_split(const std::string& text) {
  const auto parts = split(text, '/');
  if (parts.size() != 2) throw ConfigError("split '" + text + "' must look like FWD/BWD");
  UnitSplit s{parse_int(std::string(trim(parts[0])), "forward units"),
              parse_int(std::string(trim(parts[1])), "backward units")};
  if (s.fwd < 0 || s.bwd < 0 || s.fwd + s.bwd == 0) {
    throw ConfigError("split '" + text + "' needs non-negative unit counts with a positive sum");
  }
  return s;
}

void SweepSpec::validate() const {
  if (splits.empty()) throw ConfigError("sweep needs at least one split");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (treebanks.empty()) throw ConfigError("sweep needs at least one treebank");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  balanced_index();
  train.validate();
}

int SweepSpec::balanced_index() const {
  int found = -1;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (!splits[i].balanced()) continue;
    if (found >= 0) throw ConfigError("sweep has more than one balanced split");
    found = static_cast<int>(i);
  }
  if (found < 0) throw ConfigError("sweep needs a balanced split (fwd == bwd) as the baseline");
  return found;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  const KeyValues kv = KeyValues::load(path);
  SweepSpec spec;
  KeyValues model_kv;
  KeyValues train_kv;
  bool splits_given = false;
  bool seeds_given = false;
  for (const auto& [k, v] : kv.entries()) {
    if (k == "split") {
      if (!splits_given) spec.splits.clear();
      splits_given = true;
      spec.splits.push_back(parse_unit_split(v));
    } else if (k == "seed") {
      if (!seeds_given) spec.seeds.clear();
      seeds_given = true;
      spec.seeds.push_back(parse_u64(v, "seed"));
    } else if (k == "treebank") {
      spec.treebanks.push_back(load_treebank(path.parent_path() / v));
    } else if (k == "threads") {
      spec.threads = parse_int(v, "threads");
    } else if (k.starts_with("model.")) {
      model_kv.append(k.substr(6), v);
    } else if (k.starts_with("train.")) {
      train_kv.append(k.substr(6), v);
    } else {
      throw ConfigError("unknown sweep key '" + k + "'");
    }
  }
  spec.model = model_config_from_key_values(model_kv);
  spec.train = train_config_from_key_values(train_kv);
  spec.validate();
  return spec;
}

std::vector<JobResult> run_jobs(const SweepSpec& spec, const JobCallback& on_job) {
  spec.validate();
  std::vector<JobResult> jobs;
  std::vector<const Treebank*> sources;
  for (const Treebank& tb : spec.treebanks) {
    for (const UnitSplit& s : spec.splits) {
      for (std::uint64_t seed : spec.seeds) {
        JobResult j;
        j.treebank = tb.name;
        j.affixation = tb.affixation;
        j.synthesis = tb.synthesis;
        j.split = s;
        j.seed = seed;
        jobs.push_back(std::move(j));
        sources.push_back(&tb);
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      JobResult& j = jobs[i];
      try {
        ModelConfig model = spec.model;
        model.fwd_units = j.split.fwd;
        model.bwd_units = j.split.bwd;
        TrainConfig train = spec.train;
        train.seed = j.seed;
        const TrainResult r = charprobe::train(*sources[i], model, train);
        j.ok = true;
        j.best_epoch = r.best_epoch;
        j.dev_pos_accuracy = r.log[r.best_epoch].dev_accuracy[0];
      } catch (const std::exception& e) {
        j.ok = false;
        j.error = e.what();
      }
      if (on_job) {
        std::lock_guard lock(callback_mutex);
        on_job(j);
      }
    }
  };
  const int n_threads = std::min<int>(spec.threads, static_cast<int>(jobs.size()));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  return jobs;
}

double paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += a[k] - b[k];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = a[k] - b[k] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const Affixation kAffixationOrder[] = {Affixation::strong_suffix, Affixation::weak_suffix,
                                       Affixation::equal,         Affixation::little,
                                       Affixation::weak_prefix,   Affixation::strong_prefix};
const Synthesis kSynthesisOrder[] = {Synthesis::introflexive, Synthesis::fusional,
                                     Synthesis::agglutinative, Synthesis::isolating};

struct Language {
  std::string name;
  Affixation affixation;
  Synthesis synthesis;
  // [split][seed] -> accuracy of successful jobs
  std::vector<std::map<std::uint64_t, double>> runs;
};

double mean_of(const std::map<std::uint64_t, double>& runs) {
  double sum = 0.0;
  for (const auto& [seed, acc] : runs) sum += acc;
  return sum / static_cast<double>(runs.size());
}

AggregateRow make_row(const std::string& group, const std::string& label,
                      const std::vector<const Language*>& members, std::size_t n_splits,
                      int balanced) {
  AggregateRow row{group, label, static_cast<int>(members.size()), {}};
  row.cells.resize(n_splits);
  for (std::size_t s = 0; s < n_splits; ++s) {
    CellStat& cell = row.cells[s];
    double sum = 0.0;
    int present = 0;
    for (const Language* l : members) {
      if (l->runs[s].empty()) continue;
      sum += mean_of(l->runs[s]);
      ++present;
    }
    cell.present = present > 0;
    if (cell.present) cell.mean = sum / present;

    std::vector<double> a;
    std::vector<double> b;
    for (const Language* l : members) {
      for (const auto& [seed, acc] : l->runs[s]) {
        const auto base = l->runs[balanced].find(seed);
        if (base == l->runs[balanced].end()) continue;
        a.push_back(acc);
        b.push_back(base->second);
      }
    }
    cell.pairs = static_cast<int>(a.size());
    cell.p_value = static_cast<int>(s) == balanced ? kNaN : paired_t_test(a, b);
  }
  const CellStat& base = row.cells[balanced];
  for (CellStat& cell : row.cells) {
    cell.delta = cell.present && base.present ? cell.mean - base.mean : kNaN;
  }
  return row;
}

}  // namespace

SweepTable aggregate(const std::vector<JobResult>& jobs, const std::vector<UnitSplit>& splits) {
  SweepTable table;
  table.splits = splits;
  SweepSpec shape;
  shape.splits = splits;
  table.balanced = shape.balanced_index();

  std::vector<Language> languages;
  std::map<std::string, std::size_t> by_name;
  for (const JobResult& j : jobs) {
    std::size_t split_idx = splits.size();
    for (std::size_t s = 0; s < splits.size(); ++s) {
      if (splits[s] == j.split) split_idx = s;
    }
    if (split_idx == splits.size()) {
      throw DataError("job " + j.treebank + " " + j.split.label() + " uses a split outside the table");
    }
    auto [it, inserted] = by_name.emplace(j.treebank, languages.size());
    if (inserted) {
      languages.push_back({j.treebank, j.affixation, j.synthesis,
                           std::vector<std::map<std::uint64_t, double>>(splits.size())});
    }
    Language& l = languages[it->second];
    if (!j.ok) {
      table.warnings.push_back("skipping failed job " + j.treebank + " " + j.split.label() +
                               " seed " + std::to_string(j.seed) + ": " + j.error);
      continue;
    }
    l.runs[split_idx][j.seed] = j.dev_pos_accuracy;
  }

  for (const Language& l : languages) {
    table.languages.push_back(make_row("language", l.name, {&l}, splits.size(), table.balanced));
    for (std::size_t s = 0; s < splits.size(); ++s) {
      if (l.runs[s].empty()) {
        table.warnings.push_back("no successful job for " + l.name + " " + splits[s].label());
      }
    }
  }
  for (Affixation a : kAffixationOrder) {
    std::vector<const Language*> members;
    for (const Language& l : languages) {
      if (l.affixation == a) members.push_back(&l);
    }
    if (!members.empty()) {
      table.categories.push_back(
          make_row("affixation", affixation_label(a), members, splits.size(), table.balanced));
    }
  }
  for (Synthesis syn : kSynthesisOrder) {
    std::vector<const Language*> members;
    for (const Language& l : languages) {
      if (l.synthesis == syn) members.push_back(&l);
    }
    if (!members.empty()) {
      table.categories.push_back(
          make_row("synthesis", synthesis_name(syn), members, splits.size(), table.balanced));
    }
  }
  std::vector<const Language*> all;
  for (const Language& l : languages) all.push_back(&l);
  if (!all.empty()) {
    table.categories.push_back(make_row("overall", "Overall", all, splits.size(), table.balanced));
  }
  return table;
}

std::string jobs_tsv(const std::vector<JobResult>& jobs) {
  std::string out = "#charprobe-sweep-raw v" + std::to_string(kSweepFormatVersion) + '\n';
  out += "treebank\taffixation\tsynthesis\tsplit\tseed\tstatus\tdev_pos_accuracy\tbest_epoch\terror\n";
  for (const JobResult& j : jobs) {
    std::string error = j.error;
    for (char& c : error) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    out += j.treebank + '\t' + affixation_code(j.affixation) + '\t' + synthesis_name(j.synthesis) +
           '\t' + j.split.label() + '\t' + std::to_string(j.seed) + '\t' +
           (j.ok ? "ok" : "failed") + '\t' + format_double(j.dev_pos_accuracy) + '\t' +
           std::to_string(j.best_epoch) + '\t' + error + '\n';
  }
  return out;
}

std::vector<JobResult> parse_jobs_tsv(std::string_view text) {
  std::vector<JobResult> jobs;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (const std::string& line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.starts_with("treebank\t")) continue;
    }
    const auto f = split(line, '\t');
    if (f.size() != 9) throw ParseError("expected 9 tab-separated fields", line_no);
    try {
      JobResult j;
      j.treebank = f[0];
      j.affixation = parse_affixation(f[1]);
      j.synthesis = parse_synthesis(f[2]);
      j.split = parse_unit_split(f[3]);
      j.seed = parse_u64(f[4], "seed");
      if (f[5] != "ok" && f[5] != "failed") throw ConfigError("status must be ok or failed");
      j.ok = f[5] == "ok";
      j.dev_pos_accuracy = parse_double(f[6], "dev_pos_accuracy");
      j.best_epoch = parse_int(f[7], "best_epoch");
      j.error = f[8];
      jobs.push_back(std::move(j));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return jobs;
}

std::vector<UnitSplit> splits_of(const std::vector<JobResult>& jobs) {
  std::vector<UnitSplit> out;
  for (const JobResult& j : jobs) {
    if (std::find(out.begin(), out.end(), j.split) == out.end()) out.push_back(j.split);
  }
  return out;
}

std::string table_tsv(const SweepTable& table) {
  std::string out = "#charprobe-sweep-table v" + std::to_string(kSweepFormatVersion) + '\n';
  out += "group\trow\tmembers\tsplit\tmean\tdelta\tp_value\tpairs\n";
  auto emit = [&](const AggregateRow& row) {
    for (std::size_t s = 0; s < row.cells.size(); ++s) {
      const CellStat& c = row.cells[s];
      out += row.group + '\t' + row.label + '\t' + std::to_string(row.members) + '\t' +
             table.splits[s].label() + '\t' + (c.present ? format_double(c.mean) : "nan") + '\t' +
             format_double(c.delta) + '\t' + format_double(c.p_value) + '\t' +
             std::to_string(c.pairs) + '\n';
    }
  };
  for (const AggregateRow& row : table.languages) emit(row);
  for (const AggregateRow& row : table.categories) emit(row);
  return out;
}

std::string table_json(const SweepTable& table) {
  using nlohmann::ordered_json;
  auto number = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
  auto rows = [&](const std::vector<AggregateRow>& src) {
    ordered_json out = ordered_json::array();
    for (const AggregateRow& row : src) {
      ordered_json r;
      r["group"] = row.group;
      r["row"] = row.label;
      r["members"] = row.members;
      ordered_json cells = ordered_json::array();
      for (std::size_t s = 0; s < row.cells.size(); ++s) {
        const CellStat& c = row.cells[s];
        cells.push_back({{"split", table.splits[s].label()},
                         {"mean", c.present ? number(c.mean) : ordered_json(nullptr)},
                         {"delta", number(c.delta)},
                         {"p_value", number(c.p_value)},
                         {"pairs", c.pairs}});
      }
      r["cells"] = std::move(cells);
      out.push_back(std::move(r));
    }
    return out;
  };
  ordered_json j;
  j["format"] = "charprobe-sweep-table";
  j["format_version"] = kSweepFormatVersion;
  ordered_json splits = ordered_json::array();
  for (const UnitSplit& s : table.splits) splits.push_back(s.label());
  j["splits"] = splits;
  j["balanced"] = table.splits[table.balanced].label();
  j["languages"] = rows(table.languages);
  j["categories"] = rows(table.categories);
  j["warnings"] = table.warnings;
  return j.dump(2) + '\n';
}

std::string table_text(const SweepTable& table) {
  std::ostringstream out;
  char buf[64];
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::size_t label_w = 16;
  for (const AggregateRow& row : table.languages) label_w = std::max(label_w, row.label.size() + 2);
  for (const AggregateRow& row : table.categories) label_w = std::max(label_w, row.label.size() + 2);
  auto header = [&](std::string first) {
    first.resize(label_w, ' ');
    out << first;
    for (std::size_t s = 0; s < table.splits.size(); ++s) {
      std::string h = table.splits[s].label();
      if (static_cast<int>(s) == table.balanced) h += " (base)";
      out << pad(h, 14);
    }
    out << '\n';
  };
  auto line = [&](const AggregateRow& row, bool deltas) {
    std::string label = row.label;
    label.resize(label_w, ' ');
    out << label;
    for (std::size_t s = 0; s < row.cells.size(); ++s) {
      const CellStat& c = row.cells[s];
      std::string cell;
      if (!c.present) {
        cell = "-";
      } else if (!deltas || static_cast<int>(s) == table.balanced) {
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * c.mean);
        cell = buf;
      } else {
        std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * c.delta);
        cell = buf;
        if (c.p_value < 0.05) cell += '*';
      }
      out << pad(cell, 14);
    }
    out << '\n';
  };
  header("Language");
  for (const AggregateRow& row : table.languages) line(row, false);
  out << '\n';
  header("Category");
  std::string group;
  for (const AggregateRow& row : table.categories) {
    if (row.group != group) {
      group = row.group;
      out << "-- " << group << '\n';
    }
    line(row, true);
  }
  out << "\n* p < 0.05, paired two-tailed t-test against the balanced split\n";
  for (const std::string& w : table.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace charprobe
