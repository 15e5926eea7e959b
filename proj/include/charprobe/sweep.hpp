#pragma once

// Directionality sweep: trains every (treebank, fwd/bwd split, seed) job and
// aggregates dev POS accuracy per language and per typological category,
// with deltas against the balanced split and paired t-test p-values.

#include <charprobe/corpus.hpp>
#include <charprobe/model.hpp>
#include <charprobe/trainer.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace charprobe {

struct UnitSplit {
  int fwd = 64;
  int bwd = 64;

  std::string label() const { return std::to_string(fwd) + "/" + std::to_string(bwd); }
  bool balanced() const { return fwd == bwd; }
  bool operator==(const UnitSplit&) const = default;
};

// "96/32" -> {96, 32}.
UnitSplit parse_unit_split(const std::string& text);

struct SweepSpec {
  std::vector<UnitSplit> splits{{128, 0}, {96, 32}, {64, 64}, {32, 96}, {0, 128}};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Treebank> treebanks;
  ModelConfig model;  // unit counts are overridden per split
  TrainConfig train;  // seed is overridden per job
  int threads = 1;

  // Requires exactly one balanced split, at least one seed and one treebank.
  void validate() const;
  int balanced_index() const;
};

/// Reads a sweep spec file: repeated `split`, `seed` and `treebank` keys
/// (treebank paths relative to the file), `threads`, and `model.*` /
/// `train.*` overrides.
SweepSpec load_sweep_spec(const std::filesystem::path& path);

struct JobResult {
  std::string treebank;
  Affixation affixation = Affixation::little;
  Synthesis synthesis = Synthesis::isolating;
  UnitSplit split;
  std::uint64_t seed = 0;
  bool ok = false;
  double dev_pos_accuracy = 0.0;
  int best_epoch = 0;
  std::string error;
};

using JobCallback = std::function<void(const JobResult&)>;

/// Runs all jobs on `spec.threads` workers. Results are in job order
/// (treebank, split, seed) whatever the schedule; a failing job is recorded,
/// not rethrown. The callback is serialized.
std::vector<JobResult> run_jobs(const SweepSpec& spec, const JobCallback& on_job = {});

struct CellStat {
  bool present = false;   // at least one successful job
  double mean = 0.0;      // mean dev POS accuracy
  double delta = 0.0;     // mean minus the balanced column's mean
  double p_value = 0.0;   // paired two-tailed t-test vs balanced; NaN when undefined
  int pairs = 0;
};

struct AggregateRow {
  std::string group;  // language, affixation, synthesis or overall
  std::string label;
  int members = 0;    // languages in the row
  std::vector<CellStat> cells;  // one per split
};

struct SweepTable {
  std::vector<UnitSplit> splits;
  int balanced = 0;
  std::vector<AggregateRow> languages;   // one row per treebank, raw-results shape
  std::vector<AggregateRow> categories;  // affixation, synthesis, then overall
  std::vector<std::string> warnings;
};

/// Pure function of the job results. Category means are means of member
/// language means; p-values pair seeds within a language and (language,
/// seed) within a category.
SweepTable aggregate(const std::vector<JobResult>& jobs, const std::vector<UnitSplit>& splits);

/// Two-tailed p-value of a paired t-test on `a` - `b`. NaN with fewer than
/// two pairs; 1 for identical samples; 0 for a constant nonzero difference.
double paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

inline constexpr int kSweepFormatVersion = 1;

std::string jobs_tsv(const std::vector<JobResult>& jobs);
std::vector<JobResult> parse_jobs_tsv(std::string_view text);
// Distinct splits in order of first appearance.
std::vector<UnitSplit> splits_of(const std::vector<JobResult>& jobs);
std::string table_tsv(const SweepTable& table);
std::string table_json(const SweepTable& table);
// Human-readable rendering in percent, deltas signed, '*' marking p < 0.05.
std::string table_text(const SweepTable& table);

}  // namespace charprobe
