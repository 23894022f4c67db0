#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spoof/dataio.hpp"
#include "spoof/spoofnet.hpp"
#include "spoof/training.hpp"

namespace spoof {

struct ScoredSample {
  SampleRecord record;
  LivenessScore score;
  bool is_attack = false;
};

ScoredSample make_scored(const SampleRecord& record, const LivenessScore& score);

struct ErrorCounts {
  std::size_t n_attack = 0;
  std::size_t attack_accepted = 0;  // score >= threshold
  std::size_t n_bonafide = 0;
  std::size_t bonafide_rejected = 0;  // score < threshold
  ErrorCounts& operator+=(const ErrorCounts& o);
};

ErrorCounts count_errors(std::span<const ScoredSample> scored, double threshold);

/// Percent of attack samples accepted as bonafide. Throws without attacks.
double apcer(std::span<const ScoredSample> scored, double threshold);
/// Percent of bonafide samples rejected. Throws without bonafide samples.
double bpcer(std::span<const ScoredSample> scored, double threshold);

inline const std::vector<double> kDefaultThresholds{30, 40, 50, 70, 80, 90};

struct SweepRow {
  double threshold = 0;
  double apcer = 0;
  double bpcer = 0;
};

/// Thresholds must be ascending.
std::vector<SweepRow> threshold_sweep(std::span<const ScoredSample> scored,
                                      std::span<const double> thresholds);

struct ReportRow {
  std::string dataset;  // or "combined"
  double threshold = 0;
  /// Empty when the row has no samples of that class.
  std::optional<double> apcer;
  std::optional<double> bpcer;
  ErrorCounts counts;
  /// APCER restricted to one attack species; JSON only.
  std::map<std::string, double> apcer_by_species;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  const ReportRow* find(const std::string& dataset, double threshold) const;
};

inline constexpr const char* kCombined = "combined";

/// One row block per dataset (first-appearance order), then, with
/// `with_combined`, a block computed on the pooled samples. With
/// `require_both_classes` a dataset lacking attacks or bonafide samples is an
/// error; otherwise the undefined rate is left empty.
EvalReport build_report(std::span<const ScoredSample> scored, std::span<const double> thresholds,
                        bool with_combined = true, bool require_both_classes = true);

/// Scores every record once; results keep the record order.
std::vector<ScoredSample> score_samples(const CascadeModel& model, const Manifest& manifest,
                                        std::span<const SampleRecord> records,
                                        CascadeCounters* counters = nullptr);

/// Scores the test-subset records and builds the report. `scored_out`
/// receives the per-sample scores when given.
EvalReport evaluate(const CascadeModel& model, const Manifest& manifest,
                    std::span<const double> thresholds,
                    std::vector<ScoredSample>* scored_out = nullptr);

struct CrossFold {
  std::string held_out;
  std::set<std::string> train_paths;  // both halves of the fold's split
  std::set<std::string> eval_paths;
  std::vector<ScoredSample> scored;
  CascadeTraining training;
};

struct CrossResult {
  EvalReport report;
  std::vector<CrossFold> folds;
};

/// Leave-one-dataset-out: per dataset D, a fresh cascade trained on the
/// train subsets of every other dataset is evaluated on D's test subset.
CrossResult cross_dataset_run(const Manifest& manifest, const HyperParams& hp,
                              std::span<const double> thresholds,
                              const CascadeOptions& options = {});

void validate_thresholds(std::span<const double> thresholds, bool require_ascending);

inline constexpr std::string_view kScoreDumpHeader = "image_path,dataset,label,score,stage2_ran";
inline constexpr std::string_view kReportHeader =
    "dataset,threshold,apcer,bpcer,n_attack,n_bonafide";

std::string format_score_dump(std::span<const ScoredSample> scored);
/// Subset is not part of the dump; parsed records are tagged Test.
std::vector<ScoredSample> parse_score_dump(std::string_view text);
std::string format_report_csv(const EvalReport& report);
/// `meta` is stored verbatim under "run".
nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& meta);

}  // namespace spoof
