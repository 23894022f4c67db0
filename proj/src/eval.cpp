#include "spoof/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <stdexcept>

#include "spoof/fsutil.hpp"

namespace spoof {

namespace {

std::string num(double v) { return format_double(v); }

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

nlohmann::json json_rate(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

double percent(std::size_t k, std::size_t n) {
  return 100.0 * static_cast<double>(k) / static_cast<double>(n);
}

ReportRow make_row(std::string dataset, double threshold, std::span<const ScoredSample> scored,
                   bool require_both) {
  ReportRow row;
  row.dataset = std::move(dataset);
  row.threshold = threshold;
  row.counts = count_errors(scored, threshold);
  if (require_both && row.counts.n_attack == 0)
    throw std::invalid_argument("dataset '" + row.dataset + "' has no attack samples");
  if (require_both && row.counts.n_bonafide == 0)
    throw std::invalid_argument("dataset '" + row.dataset + "' has no bonafide samples");
  if (row.counts.n_attack > 0) row.apcer = percent(row.counts.attack_accepted, row.counts.n_attack);
  if (row.counts.n_bonafide > 0)
    row.bpcer = percent(row.counts.bonafide_rejected, row.counts.n_bonafide);
  for (Label species : {Label::Printed, Label::Contact}) {
    std::size_t n = 0, accepted = 0;
    for (const auto& s : scored)
      if (s.record.label == species) {
        ++n;
        if (s.score.value >= threshold) ++accepted;
      }
    if (n > 0) row.apcer_by_species[std::string(to_string(species))] = percent(accepted, n);
  }
  return row;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view text, std::size_t line) {
  double v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size())
    throw DataError("score dump line " + std::to_string(line) + ": bad number '" +
                    std::string(text) + "'");
  return v;
}

}  // namespace

ScoredSample make_scored(const SampleRecord& record, const LivenessScore& score) {
  return {record, score, is_attack(record.label)};
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  n_attack += o.n_attack;
  attack_accepted += o.attack_accepted;
  n_bonafide += o.n_bonafide;
  bonafide_rejected += o.bonafide_rejected;
  return *this;
}

ErrorCounts count_errors(std::span<const ScoredSample> scored, double threshold) {
  ErrorCounts c;
  for (const auto& s : scored) {
    const bool accepted = classify(s.score.value, threshold) == Decision::Bonafide;
    if (s.is_attack) {
      ++c.n_attack;
      if (accepted) ++c.attack_accepted;
    } else {
      ++c.n_bonafide;
      if (!accepted) ++c.bonafide_rejected;
    }
  }
  return c;
}

double apcer(std::span<const ScoredSample> scored, double threshold) {
  const auto c = count_errors(scored, threshold);
  if (c.n_attack == 0) throw std::invalid_argument("apcer: no attack samples");
  return percent(c.attack_accepted, c.n_attack);
}

double bpcer(std::span<const ScoredSample> scored, double threshold) {
  const auto c = count_errors(scored, threshold);
  if (c.n_bonafide == 0) throw std::invalid_argument("bpcer: no bonafide samples");
  return percent(c.bonafide_rejected, c.n_bonafide);
}

void validate_thresholds(std::span<const double> thresholds, bool require_ascending) {
  if (thresholds.empty()) throw std::invalid_argument("threshold list is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0 && thresholds[i] <= 100))
      throw std::invalid_argument("threshold " + num(thresholds[i]) + " outside [0, 100]");
    if (require_ascending && i > 0 && !(thresholds[i - 1] < thresholds[i]))
      throw std::invalid_argument("thresholds must be strictly ascending");
  }
}

std::vector<SweepRow> threshold_sweep(std::span<const ScoredSample> scored,
                                      std::span<const double> thresholds) {
  validate_thresholds(thresholds, true);
  std::vector<SweepRow> rows;
  for (double t : thresholds) rows.push_back({t, apcer(scored, t), bpcer(scored, t)});
  return rows;
}

const ReportRow* EvalReport::find(const std::string& dataset, double threshold) const {
  for (const auto& r : rows)
    if (r.dataset == dataset && r.threshold == threshold) return &r;
  return nullptr;
}

EvalReport build_report(std::span<const ScoredSample> scored, std::span<const double> thresholds,
                        bool with_combined, bool require_both_classes) {
  validate_thresholds(thresholds, false);
  if (scored.empty()) throw std::invalid_argument("no scored samples to report on");
  std::vector<std::string> order;
  std::map<std::string, std::vector<ScoredSample>> by_dataset;
  for (const auto& s : scored) {
    auto [it, fresh] = by_dataset.try_emplace(s.record.dataset);
    if (fresh) order.push_back(s.record.dataset);
    it->second.push_back(s);
  }
  EvalReport report;
  for (const auto& name : order)
    for (double t : thresholds) report.rows.push_back(make_row(name, t, by_dataset[name], require_both_classes));
  if (with_combined)
    for (double t : thresholds) report.rows.push_back(make_row(kCombined, t, scored, require_both_classes));
  return report;
}

std::vector<ScoredSample> score_samples(const CascadeModel& model, const Manifest& manifest,
                                        std::span<const SampleRecord> records,
                                        CascadeCounters* counters) {
  std::vector<ScoredSample> out(records.size());
  std::vector<std::string> errors(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    try {
      const auto image = load_gray_image(manifest.resolve(r));
      out[static_cast<std::size_t>(i)] = make_scored(r, cascade_score(model, image, r.bbox, counters));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = r.image_path + ": " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
  return out;
}

EvalReport evaluate(const CascadeModel& model, const Manifest& manifest,
                    std::span<const double> thresholds, std::vector<ScoredSample>* scored_out) {
  validate_thresholds(thresholds, false);
  const auto test = manifest.subset(Subset::Test);
  if (test.empty()) throw std::invalid_argument("manifest has no test-subset records");
  auto scored = score_samples(model, manifest, test);
  auto report = build_report(scored, thresholds, true);
  if (scored_out) *scored_out = std::move(scored);
  return report;
}

CrossResult cross_dataset_run(const Manifest& manifest, const HyperParams& hp,
                              std::span<const double> thresholds, const CascadeOptions& options) {
  validate_thresholds(thresholds, false);
  const auto names = manifest.datasets();
  if (names.size() < 2)
    throw std::invalid_argument("cross-dataset run needs at least 2 datasets, found " +
                                std::to_string(names.size()));
  CrossResult result;
  for (std::size_t f = 0; f < names.size(); ++f) {
    const auto& held = names[f];
    std::vector<SampleRecord> pool, eval;
    for (const auto& r : manifest.records) {
      if (r.dataset != held && r.subset == Subset::Train) pool.push_back(r);
      if (r.dataset == held && r.subset == Subset::Test) eval.push_back(r);
    }
    if (eval.empty())
      throw std::invalid_argument("dataset '" + held + "' has no test-subset records");
    if (options.log) options.log("fold " + std::to_string(f + 1) + ": holding out " + held);

    CrossFold fold;
    fold.held_out = held;
    HyperParams fold_hp = hp;
    fold_hp.seed = hp.seed + f;
    try {
      fold.training = train_cascade(manifest, pool, fold_hp, options);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("fold holding out '" + held + "': " + e.what());
    }
    for (const auto* part : {&fold.training.split.train, &fold.training.split.val})
      for (const auto& r : *part) fold.train_paths.insert(r.image_path);
    for (const auto& r : eval) fold.eval_paths.insert(r.image_path);
    fold.scored = score_samples(fold.training.model, manifest, eval);
    auto block = build_report(fold.scored, thresholds, false);
    result.report.rows.insert(result.report.rows.end(), block.rows.begin(), block.rows.end());
    result.folds.push_back(std::move(fold));
  }
  return result;
}

// ---- serialization ---------------------------------------------------------

std::string format_score_dump(std::span<const ScoredSample> scored) {
  std::string out(kScoreDumpHeader);
  out += '\n';
  for (const auto& s : scored) {
    out += s.record.image_path + ',' + s.record.dataset + ',' +
           std::string(to_string(s.record.label)) + ',' + num(s.score.value) + ',' +
           (s.score.stage2_ran ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<ScoredSample> parse_score_dump(std::string_view text) {
  std::vector<ScoredSample> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kScoreDumpHeader)
        throw DataError("score dump: expected header '" + std::string(kScoreDumpHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 5)
      throw DataError("score dump line " + std::to_string(line_no) + ": expected 5 fields");
    SampleRecord r;
    r.image_path = std::string(f[0]);
    r.dataset = std::string(f[1]);
    try {
      r.label = parse_label(f[2]);
    } catch (const std::exception& e) {
      throw DataError("score dump line " + std::to_string(line_no) + ": " + e.what());
    }
    r.subset = Subset::Test;
    LivenessScore s;
    s.value = parse_double(f[3], line_no);
    if (!(s.value >= 0 && s.value <= 100))
      throw DataError("score dump line " + std::to_string(line_no) + ": score outside [0, 100]");
    if (f[4] != "0" && f[4] != "1")
      throw DataError("score dump line " + std::to_string(line_no) + ": stage2_ran must be 0 or 1");
    s.stage2_ran = f[4] == "1";
    out.push_back(make_scored(r, s));
  }
  if (!header_seen) throw DataError("score dump is empty");
  return out;
}

std::string format_report_csv(const EvalReport& report) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : report.rows)
    out += r.dataset + ',' + num(r.threshold) + ',' + num(r.apcer) + ',' + num(r.bpcer) + ',' +
           std::to_string(r.counts.n_attack) + ',' + std::to_string(r.counts.n_bonafide) + '\n';
  return out;
}

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& meta) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"dataset", r.dataset},
                    {"threshold", r.threshold},
                    {"apcer", json_rate(r.apcer)},
                    {"bpcer", json_rate(r.bpcer)},
                    {"n_attack", r.counts.n_attack},
                    {"n_bonafide", r.counts.n_bonafide},
                    {"attack_accepted", r.counts.attack_accepted},
                    {"bonafide_rejected", r.counts.bonafide_rejected},
                    {"apcer_by_species", r.apcer_by_species}});
  }
  return {{"run", meta}, {"rows", rows}};
}

}  // namespace spoof
