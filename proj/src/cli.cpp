#include <charprobe/cli.hpp>

#include <charprobe/corpus.hpp>
#include <charprobe/error.hpp>
#include <charprobe/model.hpp>
#include <charprobe/probe.hpp>
#include <charprobe/sweep.hpp>
#include <charprobe/svg.hpp>
#include <charprobe/synthlang.hpp>
#include <charprobe/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>

namespace charprobe {

namespace fs = std::filesystem;

namespace {

// Flags that override keys of a run configuration. Only flags given on the
// command line are applied, so config-file values survive otherwise.
class Overrides {
 public:
  void option(CLI::App* app, const std::string& flag, const std::string& key,
              const std::string& help) {
    auto [it, inserted] = storage_.emplace(key, std::string());
    options_.emplace_back(app->add_option(flag, it->second, help), key);
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key,
            const std::string& help) {
    flags_.emplace_back(app->add_flag(flag, help), key);
  }
  void apply(KeyValues& kv) const {
    for (const auto& [opt, key] : options_) {
      if (opt->count() > 0) kv.set(key, storage_.at(key));
    }
    for (const auto& [opt, key] : flags_) {
      if (opt->count() > 0) kv.set(key, "true");
    }
  }

 private:
  std::map<std::string, std::string> storage_;
  std::vector<std::pair<CLI::Option*, std::string>> options_;
  std::vector<std::pair<CLI::Option*, std::string>> flags_;
};

KeyValues load_or_empty(const std::string& path) {
  return path.empty() ? KeyValues{} : KeyValues::load(path);
}

KeyValues with_prefix(const std::string& prefix, const KeyValues& kv) {
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) out.append(prefix + k, v);
  return out;
}

KeyValues strip_prefix(const std::string& prefix, const KeyValues& kv) {
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) {
    if (k.starts_with(prefix)) out.append(k.substr(prefix.size()), v);
  }
  return out;
}

void check_keys(const KeyValues& kv, std::initializer_list<const char*> prefixes) {
  for (const auto& [k, v] : kv.entries()) {
    bool known = false;
    for (const char* p : prefixes) known = known || k.starts_with(p) || k == p;
    if (!known) throw ConfigError("unknown configuration key '" + k + "'");
  }
}

void append_all(KeyValues& dst, const KeyValues& src) {
  for (const auto& [k, v] : src.entries()) dst.append(k, v);
}

// Architecture keys only; charset and tagsets belong to trained models.
KeyValues architecture_key_values(const ModelConfig& c) {
  KeyValues out;
  const KeyValues all = model_config_to_key_values(c);
  for (const auto& [k, v] : all.entries()) {
    if (k != "charset" && k != "attribute") out.append(k, v);
  }
  return out;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

struct SynthArgs {
  std::string config;
  std::string out;
};

void cmd_synth(const SynthArgs& a, const Overrides& o, Context& ctx) {
  KeyValues kv = load_or_empty(a.config);
  o.apply(kv);
  const int sentences = kv.get_int("sentences", 2000);
  const std::uint64_t seed = kv.get_u64("seed", 1);
  KeyValues profile_kv;
  for (const auto& [k, v] : kv.entries()) {
    if (k != "sentences" && k != "seed") profile_kv.append(k, v);
  }
  const TypologyProfile profile = TypologyProfile::from_key_values(profile_kv);
  if (sentences < 2) throw ConfigError("sentences must be at least 2");
  const Treebank tb = generate(profile, sentences, seed);
  const fs::path meta = emit_conllu(tb, profile, a.out);
  KeyValues resolved = profile.to_key_values();
  resolved.set("sentences", std::to_string(sentences));
  resolved.set("seed", std::to_string(seed));
  write_file(fs::path(a.out) / "config.kv", resolved.to_string());
  ctx.out << "wrote " << tb.split("train").size() << " train and " << tb.split("dev").size()
          << " dev sentences; metadata " << meta.string() << '\n';
}

struct TrainArgs {
  std::string config;
  std::string treebank;
  std::string out;
};

void cmd_train(const TrainArgs& a, const Overrides& o, Context& ctx) {
  KeyValues kv = load_or_empty(a.config);
  check_keys(kv, {"model.", "train."});
  o.apply(kv);
  const ModelConfig model = model_config_from_key_values(strip_prefix("model.", kv));
  const TrainConfig train = train_config_from_key_values(strip_prefix("train.", kv));
  const Treebank tb = load_treebank(a.treebank);

  KeyValues resolved;
  resolved.set("treebank", fs::absolute(a.treebank).string());
  append_all(resolved, with_prefix("model.", architecture_key_values(model)));
  append_all(resolved, with_prefix("train.", train_config_to_key_values(train)));
  const fs::path out(a.out);
  write_file(out / "config.kv", resolved.to_string());

  const TrainResult r = charprobe::train(tb, model, train, [&](const EpochLog& e) {
    ctx.err << "epoch " << e.epoch << "  train_loss " << format_fixed(e.train_loss, 4)
            << "  dev_pos_acc " << format_fixed(e.dev_accuracy[0], 4) << '\n';
  });
  save_checkpoint(r.best, out / "model.ckpt");
  write_file(out / "train_log.tsv", epoch_log_tsv(r.log, r.best.config));
  ctx.out << "best epoch " << r.best_epoch << ", dev POS accuracy "
          << format_fixed(r.log[r.best_epoch].dev_accuracy[0], 4) << "; checkpoint "
          << (out / "model.ckpt").string() << '\n';
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string treebank;
  std::string split = "dev";
  std::string out;
};

void cmd_evaluate(const EvaluateArgs& a, Context& ctx) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Treebank tb = load_treebank(a.treebank);
  const Evaluation ev = evaluate(ckpt.tagger(), tb.split(a.split));
  std::string tsv = "attribute\taccuracy\n";
  for (std::size_t i = 0; i < ev.accuracy.size(); ++i) {
    tsv += ckpt.config.attributes[i].name + '\t' + format_double(ev.accuracy[i]) + '\n';
  }
  tsv += "#tokens\t" + std::to_string(ev.tokens) + "\n#mean_loss\t" + format_double(ev.mean_loss) + '\n';
  if (!a.out.empty()) write_file(a.out, tsv);
  ctx.out << tsv;
}

struct ProbeArgs {
  std::string config;
  std::string checkpoint;
  std::string treebank;
  std::string split = "train";
  std::string out;
  bool plot = false;
  std::vector<std::string> strip_words;
};

void cmd_probe(const ProbeArgs& a, const Overrides& o, Context& ctx) {
  KeyValues kv = load_or_empty(a.config);
  o.apply(kv);
  const ProbeConfig config = ProbeConfig::from_key_values(kv);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Treebank tb = load_treebank(a.treebank);
  const Tagger tagger = ckpt.tagger();

  PdiReport report = compute_report(tagger, tb.split(a.split), config);
  report.treebank = tb.name;
  report.seed = ckpt.metadata.get_or("seed", "");

  const fs::path out(a.out);
  KeyValues resolved = config.to_key_values();
  resolved.set("checkpoint", fs::absolute(a.checkpoint).string());
  resolved.set("treebank", fs::absolute(a.treebank).string());
  resolved.set("split", a.split);
  write_file(out / "config.kv", resolved.to_string());
  write_file(out / "pdi_report.tsv", report_tsv(report));
  write_file(out / "pdi_report.json", report_json(report));
  const std::string title = tb.name + " " + std::to_string(report.fwd_units) + "/" +
                            std::to_string(report.bwd_units) + ", " +
                            base_measure_name(config.measure);
  if (a.plot) write_file(out / "pdi.svg", pdi_bar_chart(report.summary, title));
  for (std::size_t k = 0; k < a.strip_words.size(); ++k) {
    const auto enc = tagger.encode_word(utf8_decode(normalize_token(a.strip_words[k])), true);
    write_file(out / ("strip-" + std::to_string(k + 1) + ".svg"),
               activation_strip(*enc.trace, {}, a.strip_words[k]));
  }
  ctx.out << report.n_words << " words, mass " << format_fixed(report.summary.mass, 4)
          << ", median index " << report.summary.median_index << ", head forwardness "
          << format_fixed(report.summary.head_forwardness, 4) << '\n';
}

struct SweepArgs {
  std::string spec;
  std::string out;
  int threads = 0;
};

void write_tables(const SweepTable& table, const fs::path& out) {
  write_file(out / "table.tsv", table_tsv(table));
  write_file(out / "table.json", table_json(table));
  write_file(out / "table.txt", table_text(table));
}

void cmd_sweep(const SweepArgs& a, Context& ctx) {
  SweepSpec spec = load_sweep_spec(a.spec);
  if (a.threads > 0) spec.threads = a.threads;
  const fs::path out(a.out);

  KeyValues resolved;
  for (const UnitSplit& s : spec.splits) resolved.append("split", s.label());
  for (std::uint64_t seed : spec.seeds) resolved.append("seed", std::to_string(seed));
  for (const Treebank& tb : spec.treebanks) resolved.append("treebank_name", tb.name);
  resolved.set("threads", std::to_string(spec.threads));
  append_all(resolved, with_prefix("model.", architecture_key_values(spec.model)));
  append_all(resolved, with_prefix("train.", train_config_to_key_values(spec.train)));
  write_file(out / "config.kv", resolved.to_string());

  const auto jobs = run_jobs(spec, [&](const JobResult& j) {
    ctx.err << j.treebank << ' ' << j.split.label() << " seed " << j.seed << ": "
            << (j.ok ? format_fixed(j.dev_pos_accuracy, 4) : "failed: " + j.error) << '\n';
  });
  write_file(out / "raw.tsv", jobs_tsv(jobs));
  const SweepTable table = aggregate(jobs, spec.splits);
  write_tables(table, out);
  ctx.out << table_text(table);
}

struct ReportArgs {
  std::string in;
  std::string out;
};

void cmd_report(const ReportArgs& a, Context& ctx) {
  const fs::path in(a.in);
  const fs::path out = a.out.empty() ? in / "report" : fs::path(a.out);
  bool found = false;
  if (fs::exists(in / "raw.tsv")) {
    found = true;
    const auto jobs = parse_jobs_tsv(read_file(in / "raw.tsv"));
    const SweepTable table = aggregate(jobs, splits_of(jobs));
    write_tables(table, out);
    ctx.out << table_text(table);
  }

  std::vector<fs::path> reports;
  for (const auto& entry : fs::recursive_directory_iterator(in)) {
    if (entry.is_regular_file() && entry.path().filename() == "pdi_report.json" &&
        !entry.path().string().starts_with(out.string())) {
      reports.push_back(entry.path());
    }
  }
  std::sort(reports.begin(), reports.end());
  if (!reports.empty()) {
    found = true;
    std::string tsv = "#charprobe-probe-summary v1\npath\ttreebank\tunits\tmeasure\tmass\tmedian_index\thead_forwardness\n";
    for (const fs::path& p : reports) {
      const auto j = nlohmann::json::parse(read_file(p));
      tsv += fs::relative(p.parent_path(), in).string() + '\t' + j.at("treebank").get<std::string>() +
             '\t' + std::to_string(j.at("fwd_units").get<int>()) + "/" +
             std::to_string(j.at("bwd_units").get<int>()) + '\t' +
             j.at("measure").get<std::string>() + '\t' + format_double(j.at("mass").get<double>()) +
             '\t' + std::to_string(j.at("median_index").get<int>()) + '\t' +
             format_double(j.at("head_forwardness").get<double>()) + '\n';
    }
    write_file(out / "probe_summary.tsv", tsv);
    ctx.out << '\n' << tsv;
  }
  if (!found) throw DataError("no raw.tsv or pdi_report.json under " + in.string());
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-level BiLSTM POS tagger with unit-level directionality probing"};
  app.name("charprobe");
  app.require_subcommand(1);
  Context ctx{out, err};

  SynthArgs synth;
  Overrides synth_o;
  auto* s = app.add_subcommand("synth", "Generate a synthetic CoNLL-U treebank");
  s->add_option("--config", synth.config, "Profile key-value file")->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output directory")->required();
  synth_o.option(s, "--position", "affix_position", "suffix, prefix or none");
  synth_o.option(s, "--synthesis", "synthesis", "agglutinative, fusional or isolating");
  synth_o.option(s, "--sentences", "sentences", "Number of sentences (default 2000)");
  synth_o.option(s, "--seed", "seed", "Generator seed (default 1)");
  synth_o.option(s, "--alphabet", "alphabet_size", "Alphabet size");
  synth_o.option(s, "--stems", "n_stems", "Number of stems");
  synth_o.option(s, "--noise", "label_noise", "Probability of a random POS label");
  synth_o.option(s, "--zipf", "zipf_exponent", "Stem frequency exponent");

  TrainArgs train;
  Overrides train_o;
  auto* t = app.add_subcommand("train", "Train a tagger");
  t->add_option("--config", train.config, "Run key-value file (model.* and train.* keys)")
      ->check(CLI::ExistingFile);
  t->add_option("--treebank", train.treebank, "Treebank metadata file")
      ->required()
      ->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory")->required();
  train_o.option(t, "--fwd-units", "model.fwd_units", "Forward character units (default 64)");
  train_o.option(t, "--bwd-units", "model.bwd_units", "Backward character units (default 64)");
  train_o.option(t, "--emb", "model.char_emb_dim", "Character embedding size (default 256)");
  train_o.option(t, "--word-layers", "model.word_layers", "Word BiLSTM layers (default 2)");
  train_o.option(t, "--dropout", "model.dropout_rate", "Word-layer dropout (default 0.5)");
  train_o.option(t, "--epochs", "train.max_epochs", "Maximum epochs (default 80)");
  train_o.option(t, "--lr", "train.learning_rate", "Learning rate (default 0.01)");
  train_o.option(t, "--momentum", "train.momentum", "Momentum (default 0.9)");
  train_o.option(t, "--seed", "train.seed", "Training seed (default 1)");
  train_o.option(t, "--clip", "train.clip_norm", "Gradient norm clip, 0 disables (default 5)");
  train_o.option(t, "--patience", "train.patience", "Early-stopping patience, 0 disables");
  train_o.option(t, "--target-accuracy", "train.target_accuracy",
                 "Stop once dev POS accuracy reaches this, 0 disables");

  EvaluateArgs eval;
  auto* e = app.add_subcommand("evaluate", "Per-attribute accuracy of a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--treebank", eval.treebank, "Treebank metadata file")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--split", eval.split, "Split to evaluate (default dev)");
  e->add_option("--out", eval.out, "Also write the table to this file");

  ProbeArgs probe;
  Overrides probe_o;
  auto* p = app.add_subcommand("probe", "PDI analysis of the character layer");
  p->add_option("--config", probe.config, "Probe key-value file")->check(CLI::ExistingFile);
  p->add_option("--checkpoint", probe.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  p->add_option("--treebank", probe.treebank, "Treebank metadata file")
      ->required()
      ->check(CLI::ExistingFile);
  p->add_option("--split", probe.split, "Split to select words from (default train)");
  p->add_option("--out", probe.out, "Output directory")->required();
  probe_o.option(p, "--measure", "measure", "avgabs or mad (default avgabs)");
  probe_o.option(p, "--bins", "bins", "Histogram bins (default 16)");
  probe_o.option(p, "--freq", "freq_threshold", "Minimum word frequency (default 8)");
  probe_o.option(p, "--unambiguity", "unambiguity_threshold",
                 "Minimum majority-tag share (default 0.6)");
  probe_o.option(p, "--exclude", "excluded_tags", "Comma-separated excluded tags");
  probe_o.flag(p, "--token-weighting", "token_weighting", "Weight word types by frequency");
  p->add_flag("--plot", probe.plot, "Write an SVG bar chart of the ranked units");
  p->add_option("--strip", probe.strip_words, "Write an activation heat strip for this word");

  SweepArgs sweep;
  auto* w = app.add_subcommand("sweep", "Directionality sweep over unit splits and seeds");
  w->add_option("--spec", sweep.spec, "Sweep spec file")->required()->check(CLI::ExistingFile);
  w->add_option("--out", sweep.out, "Output directory")->required();
  w->add_option("--threads", sweep.threads, "Worker threads (overrides the spec)")
      ->check(CLI::PositiveNumber);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Re-aggregate sweep results and collect probe reports");
  r->add_option("--in", report.in, "Directory with raw.tsv and/or pdi_report.json files")
      ->required()
      ->check(CLI::ExistingDirectory);
  r->add_option("--out", report.out, "Output directory (default IN/report)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) cmd_synth(synth, synth_o, ctx);
    if (t->parsed()) cmd_train(train, train_o, ctx);
    if (e->parsed()) cmd_evaluate(eval, ctx);
    if (p->parsed()) cmd_probe(probe, probe_o, ctx);
    if (w->parsed()) cmd_sweep(sweep, ctx);
    if (r->parsed()) cmd_report(report, ctx);
  } catch (const ConfigError& ex) {
    err << "configuration error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace charprobe
