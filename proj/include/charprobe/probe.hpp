#pragma once

// POS discrimination analysis of character-layer units: word selection,
// per-word base measures, binned mutual information (PDI) and the mass /
// head-forwardness summary.

#include <charprobe/corpus.hpp>
#include <charprobe/error.hpp>
#include <charprobe/model.hpp>
#include <charprobe/tensor.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace charprobe {

enum class BaseMeasure { avg_abs, mad };

std::string base_measure_name(BaseMeasure m);
// Accepts "avg_abs", "avgabs" and "mad".
BaseMeasure parse_base_measure(const std::string& name);
// Upper edge of the measure's nominal half-open range [0, r).
double measure_range(BaseMeasure m);

struct ProbeConfig {
  int freq_threshold = 8;
  double unambiguity_threshold = 0.6;
  std::set<std::string> excluded_tags{"INTJ", "NUM", "PROPN", "PUNCT", "SYM", "X"};
  int bins = 16;
  BaseMeasure measure = BaseMeasure::avg_abs;
  // Weight each word type by its training frequency instead of counting it once.
  bool token_weighting = false;

  double bin_width() const { return measure_range(measure) / bins; }
  void validate() const;
  KeyValues to_key_values() const;
  static ProbeConfig from_key_values(const KeyValues& kv);
  static ProbeConfig from_key_values(const KeyValues& kv, ProbeConfig defaults);
};

struct SelectedWord {
  std::string form;
  std::string pos;  // majority tag
  int count = 0;    // occurrences in the split
};

/// Frequent, POS-unambiguous word types, sorted by form. Majority ties go to
/// the alphabetically first tag. Throws AnalysisError when nothing survives.
std::vector<SelectedWord> select_words(const std::vector<Sentence>& sentences,
                                       const ProbeConfig& config);

template <typename Derived>
void check_unit(const Eigen::MatrixBase<Derived>& trace, Eigen::Index unit) {
  if (unit < 0 || unit >= trace.rows()) {
    throw IndexError("unit " + std::to_string(unit) + " outside a trace of " +
                     std::to_string(trace.rows()) + " units");
  }
  if (trace.cols() < 1) throw ContractError("trace of an empty word");
}

/// Mean absolute activation of `unit` over the word (rows are units, columns
/// character positions).
template <typename Derived>
typename Derived::Scalar base_avg_abs(const Eigen::MatrixBase<Derived>& trace, Eigen::Index unit) {
  check_unit(trace, unit);
  return trace.row(unit).cwiseAbs().mean();
}

/// Largest absolute change of `unit` between adjacent characters; 0 for a
/// one-character word.
template <typename Derived>
typename Derived::Scalar base_mad(const Eigen::MatrixBase<Derived>& trace, Eigen::Index unit) {
  check_unit(trace, unit);
  const Eigen::Index n = trace.cols();
  if (n < 2) return typename Derived::Scalar(0);
  const auto row = trace.row(unit);
  return (row.tail(n - 1) - row.head(n - 1)).cwiseAbs().maxCoeff();
}

template <typename Derived>
typename Derived::Scalar base_measure(const Eigen::MatrixBase<Derived>& trace, Eigen::Index unit,
                                      BaseMeasure m) {
  return m == BaseMeasure::avg_abs ? base_avg_abs(trace, unit) : base_mad(trace, unit);
}

/// floor(value / width) clamped to the last bin. Negative or NaN values throw
/// ContractError.
int bin_index(double value, const ProbeConfig& config);

/// Tag-by-bin counts.
struct JointHistogram {
  Matrix counts;  // T x B

  JointHistogram() = default;
  JointHistogram(Eigen::Index tags, Eigen::Index bins) : counts(Matrix::Zero(tags, bins)) {}

  double total() const { return counts.sum(); }
  Matrix joint() const;          // counts / total
  Vector tag_marginal() const;   // length T
  Vector bin_marginal() const;   // length B
};

/// Bins `values[k]` under tag `tags[k]`, adding `weights[k]` (1 when
/// `weights` is empty).
JointHistogram bin_and_accumulate(std::span<const double> values, std::span<const int> tags,
                                  int n_tags, const ProbeConfig& config,
                                  std::span<const double> weights = {});

/// Mutual information in nats between rows and columns of a count matrix,
/// with 0 ln 0 = 0. Throws AnalysisError when the total is not positive.
template <typename Derived>
typename Derived::Scalar pdi(const Eigen::MatrixBase<Derived>& counts) {
  using Scalar = typename Derived::Scalar;
  if ((counts.array() < Scalar(0)).any()) throw ContractError("negative histogram count");
  const Scalar total = counts.sum();
  if (!(total > Scalar(0))) throw AnalysisError("histogram is empty");
  const MatrixX<Scalar> p = counts / total;
  const VectorX<Scalar> pt = p.rowwise().sum();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pb = p.colwise().sum();
  Scalar mi(0);
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
      const Scalar ptb = p(t, b);
      if (ptb > Scalar(0)) mi += ptb * (std::log(ptb) - std::log(pt(t)) - std::log(pb(b)));
    }
  }
  // Rounding can leave an independent table a few ulps below zero.
  return mi < Scalar(0) ? Scalar(0) : mi;
}

inline double pdi(const JointHistogram& h) { return pdi(h.counts); }

struct UnitScore {
  int unit = 0;
  Direction direction = Direction::forward;
  double pdi = 0.0;
};

struct PdiSummary {
  std::vector<UnitScore> ranked;  // descending PDI, ties by unit id
  double mass = 0.0;
  int median_index = 0;  // largest k with cumulative PDI of the top k <= mass / 2
  int head_size = 0;     // median_index, or 1 when that is 0
  double head_forwardness = 0.0;
};

/// Ranks units and computes mass, median index and head forwardness.
/// Throws AnalysisError for an empty list.
PdiSummary summarize(std::vector<UnitScore> scores);

/// PDI of every unit from precomputed traces (units x characters); `tags`
/// holds each word's tag index in [0, n_tags). Bypasses the model, so
/// surrogate activations can be injected.
PdiSummary probe_traces(std::span<const Matrix> traces, std::span<const Direction> directions,
                        std::span<const int> tags, int n_tags, const ProbeConfig& config,
                        std::span<const double> weights = {});

struct PdiReport {
  ProbeConfig config;
  std::string treebank;
  std::string seed;  // training seed from checkpoint metadata, if any
  int fwd_units = 0;
  int bwd_units = 0;
  std::vector<std::string> tags;  // retained POS tags
  std::vector<int> words_per_tag;
  int n_words = 0;
  PdiSummary summary;
};

inline constexpr int kReportFormatVersion = 1;

/// Traces every selected word of `train` through the character layer and
/// scores each unit.
PdiReport compute_report(const Tagger& tagger, const std::vector<Sentence>& train,
                         const ProbeConfig& config);

// One row per unit: rank, unit, direction, pdi.
std::string report_tsv(const PdiReport& report);
// Summary and configuration.
std::string report_json(const PdiReport& report);

}  // namespace charprobe
