// spoofnet: synthesize data, train, evaluate, sweep, cross-validate, verify.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// single "error: <kind>: <message>" line on stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "run_config.hpp"
#include "spoof/eval.hpp"
#include "spoof/fsutil.hpp"
#include "spoof/synth.hpp"
#include "spoof/training.hpp"
#include "spoof/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spoof;
using spoof::cli::UsageError;

namespace {

std::string one_line(std::string text) {
  for (auto& c : text)
    if (c == '\n' || c == '\r') c = ' ';
  return text;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void log_line(const std::string& line) { std::cerr << line << std::endl; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---- shared flag groups ----------------------------------------------------

struct TrainFlags {
  HyperParams hp;
  std::size_t input_size = 96;
  std::string channels = "16,32,48,64";
  double gate = 0.5;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.hp.max_epochs, "Maximum epochs per stage");
  cmd->add_option("--batch-size", f.hp.batch_size, "Mini-batch size");
  cmd->add_option("--lr", f.hp.learning_rate, "SGD learning rate");
  cmd->add_option("--weight-decay", f.hp.weight_decay, "Coupled L2 weight decay (biases exempt)");
  cmd->add_option("--momentum", f.hp.momentum, "SGD momentum");
  cmd->add_option("--patience", f.hp.patience, "Early-stopping patience in epochs");
  cmd->add_option("--min-delta", f.hp.min_delta, "Smallest val-loss drop counted as improvement");
  cmd->add_option("--dropout", f.hp.dropout_rate, "Dropout rate before the output layer");
  cmd->add_option("--split", f.hp.split_ratio, "Per-class fraction of training records used to fit");
  cmd->add_option("--seed", f.hp.seed, "Seed for split, shuffling, init and dropout");
  cmd->add_option("--input-size", f.input_size, "Side length S of both networks' S x S input");
  cmd->add_option("--channels", f.channels, "Output channels of the four conv layers, a,b,c,d");
  cmd->add_option("--gate", f.gate, "Stage-1 probability below which stage 2 is skipped");
}

NetworkSpec make_spec(const TrainFlags& f) {
  const auto ch = cli::parse_count_list(f.channels, ',', 4, "--channels");
  NetworkSpec spec;
  spec.input_size = f.input_size;
  spec.dropout = f.hp.dropout_rate;
  for (std::size_t i = 0; i < 4; ++i) spec.conv_stack[i].out_channels = ch[i];
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw UsageError(std::string("network shape: ") + e.what());
  }
  return spec;
}

void validate_train_flags(const TrainFlags& f) {
  try {
    f.hp.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!(f.gate > 0 && f.gate < 1)) throw UsageError("--gate must lie in (0, 1)");
  (void)make_spec(f);
}

json hyperparams_json(const TrainFlags& f) {
  const auto& hp = f.hp;
  return {{"max_epochs", hp.max_epochs},  {"batch_size", hp.batch_size},
          {"learning_rate", hp.learning_rate}, {"weight_decay", hp.weight_decay},
          {"momentum", hp.momentum},      {"patience", hp.patience},
          {"min_delta", hp.min_delta},    {"dropout", hp.dropout_rate},
          {"split_ratio", hp.split_ratio}, {"input_size", f.input_size},
          {"channels", f.channels},       {"gate", f.gate}};
}

std::vector<double> thresholds_from(const std::string& text) {
  auto t = cli::parse_number_list(text, "--thresholds");
  try {
    validate_thresholds(t, false);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

void echo_config(const CLI::App* cmd, const fs::path& dir) {
  fs::create_directories(dir);
  write_file_atomic(dir / (cmd->get_name() + "_config.ini"), cli::format_resolved(*cmd));
}

std::string history_file(const TrainHistory& h) { return format_history(h); }

json history_summary(const TrainHistory& h) {
  return {{"stopped_epoch", h.stopped_epoch}, {"best_epoch", h.best_epoch}};
}

/// Trains, stamps metadata into the model, and writes model + histories.
CascadeTraining train_and_save(const Manifest& manifest, std::span<const SampleRecord> records,
                               const TrainFlags& f, const fs::path& dir) {
  CascadeOptions opts;
  opts.spec = make_spec(f);
  opts.gate = f.gate;
  opts.log = log_line;
  auto result = train_cascade(manifest, records, f.hp, opts);
  result.model.metadata = json{{"seed", f.hp.seed},
                               {"hyperparameters", hyperparams_json(f)},
                               {"stage1", history_summary(result.stage1)},
                               {"stage2", history_summary(result.stage2)},
                               {"stage1_train_size", result.stage1_train_size},
                               {"stage2_train_size", result.stage2_train_size}}
                              .dump();
  fs::create_directories(dir);
  save_model(result.model, dir / "model.spnf");
  write_file_atomic(dir / "history_stage1.csv", history_file(result.stage1));
  write_file_atomic(dir / "history_stage2.csv", history_file(result.stage2));
  return result;
}

json model_meta(const fs::path& model_path, const CascadeModel& model) {
  json meta = {{"model", model_path.filename().string()},
               {"model_checksum", hex64(fnv1a64(read_file_bytes(model_path)))},
               {"gate", model.gate}};
  if (!model.metadata.empty()) {
    const auto m = json::parse(model.metadata, nullptr, false);
    if (!m.is_discarded()) meta["training"] = m;
  }
  return meta;
}

// ---- commands ---------------------------------------------------------------

struct SynthFlags {
  std::string out;
  std::string counts = "200:200:200";
  std::string test_counts = "0:0:0";
  std::size_t datasets = 1;
  std::size_t width = 640;
  std::size_t height = 480;
  std::uint64_t seed = 1;
};

int run_synth(const CLI::App* cmd, const SynthFlags& f) {
  SynthConfig cfg;
  const auto train = cli::parse_count_list(f.counts, ':', 3, "--counts");
  const auto test = cli::parse_count_list(f.test_counts, ':', 3, "--test-counts");
  cfg.train = {train[0], train[1], train[2]};
  cfg.test = {test[0], test[1], test[2]};
  if (cfg.train.total() + cfg.test.total() == 0) throw UsageError("nothing to generate");
  if (f.datasets < 1) throw UsageError("--datasets must be at least 1");
  if (f.width < 64 || f.height < 64) throw UsageError("--width and --height must be at least 64");
  cfg.out_dir = f.out;
  cfg.datasets = f.datasets;
  cfg.width = f.width;
  cfg.height = f.height;
  cfg.seed = f.seed;

  echo_config(cmd, cfg.out_dir);
  const auto manifest = synth_generate(cfg);
  log_line("wrote " + std::to_string(manifest.records.size()) + " images and " +
           (cfg.out_dir / "manifest.csv").string());
  return 0;
}

struct DataFlags {
  std::string manifest;
  std::string model;
  std::string out;
  std::string thresholds = "30,40,50,70,80,90";
  bool strict = false;
};

int run_train(const CLI::App* cmd, const DataFlags& d, const TrainFlags& f) {
  validate_train_flags(f);
  echo_config(cmd, d.out);
  const auto manifest = load_manifest(d.manifest, d.strict);
  const auto result = train_and_save(manifest, manifest.records, f, d.out);
  json summary = json::parse(result.model.metadata);
  summary["model_checksum"] = hex64(fnv1a64(read_file_bytes(fs::path(d.out) / "model.spnf")));
  write_json(fs::path(d.out) / "train_summary.json", summary);
  log_line("model written to " + (fs::path(d.out) / "model.spnf").string());
  return 0;
}

int run_eval(const CLI::App* cmd, const DataFlags& d) {
  const auto thresholds = thresholds_from(d.thresholds);
  echo_config(cmd, d.out);
  const auto model = load_model(d.model);
  const auto manifest = load_manifest(d.manifest, d.strict);
  std::vector<ScoredSample> scored;
  const auto report = evaluate(model, manifest, thresholds, &scored);
  const fs::path out(d.out);
  write_file_atomic(out / "scores.csv", format_score_dump(scored));
  write_file_atomic(out / "report.csv", format_report_csv(report));
  json meta = model_meta(d.model, model);
  meta["command"] = "eval";
  meta["thresholds"] = thresholds;
  write_json(out / "report.json", report_to_json(report, meta));
  for (const auto& r : report.rows)
    if (r.dataset == kCombined)
      log_line("threshold " + std::to_string(r.threshold) + ": APCER " +
               std::to_string(r.apcer.value_or(0)) + "%  BPCER " +
               std::to_string(r.bpcer.value_or(0)) + "%");
  return 0;
}

struct SweepFlags {
  std::string scores;
  std::string out;
  std::string thresholds = "30,40,50,70,80,90";
};

int run_sweep(const CLI::App* cmd, const SweepFlags& f) {
  const auto thresholds = thresholds_from(f.thresholds);
  try {
    validate_thresholds(thresholds, true);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  echo_config(cmd, f.out);
  const auto text = read_file_text(f.scores);
  const auto scored = parse_score_dump(text);
  if (scored.empty()) throw DataError("score dump has no samples");
  const auto report = build_report(scored, thresholds, true, false);
  const fs::path out(f.out);
  write_file_atomic(out / "sweep.csv", format_report_csv(report));
  json meta = {{"command", "sweep"},
               {"scores", fs::path(f.scores).filename().string()},
               {"scores_checksum",
                hex64(fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}))},
               {"thresholds", thresholds}};
  write_json(out / "sweep.json", report_to_json(report, meta));
  return 0;
}

int run_cross(const CLI::App* cmd, const DataFlags& d, const TrainFlags& f) {
  validate_train_flags(f);
  const auto thresholds = thresholds_from(d.thresholds);
  echo_config(cmd, d.out);
  const auto manifest = load_manifest(d.manifest, d.strict);
  CascadeOptions opts;
  opts.spec = make_spec(f);
  opts.gate = f.gate;
  opts.log = log_line;
  auto result = cross_dataset_run(manifest, f.hp, thresholds, opts);

  const fs::path out(d.out);
  json folds = json::array();
  for (std::size_t i = 0; i < result.folds.size(); ++i) {
    auto& fold = result.folds[i];
    const fs::path dir = out / ("fold_" + fold.held_out);
    fs::create_directories(dir);
    fold.training.model.metadata = json{{"seed", f.hp.seed + i},
                                        {"hyperparameters", hyperparams_json(f)},
                                        {"held_out", fold.held_out}}
                                       .dump();
    save_model(fold.training.model, dir / "model.spnf");
    write_file_atomic(dir / "history_stage1.csv", history_file(fold.training.stage1));
    write_file_atomic(dir / "history_stage2.csv", history_file(fold.training.stage2));
    write_file_atomic(dir / "scores.csv", format_score_dump(fold.scored));
    std::string train_list;
    for (const auto& p : fold.train_paths) train_list += p + "\n";
    write_file_atomic(dir / "train_images.txt", train_list);
    std::size_t overlap = 0;
    for (const auto& p : fold.eval_paths) overlap += fold.train_paths.count(p);
    folds.push_back({{"held_out", fold.held_out},
                     {"train_images", fold.train_paths.size()},
                     {"eval_images", fold.eval_paths.size()},
                     {"shared_images", overlap},
                     {"model_checksum", hex64(fnv1a64(read_file_bytes(dir / "model.spnf")))}});
  }
  write_file_atomic(out / "cross_report.csv", format_report_csv(result.report));
  json meta = {{"command", "cross"},
               {"seed", f.hp.seed},
               {"hyperparameters", hyperparams_json(f)},
               {"thresholds", thresholds},
               {"folds", folds}};
  write_json(out / "cross_report.json", report_to_json(result.report, meta));
  return 0;
}

struct VerifyFlags {
  VerifyOptions options;
  std::string out;
};

int run_verify(const CLI::App* cmd, const VerifyFlags& f) {
  if (f.options.grad_cases < 1) throw UsageError("--grad-cases must be at least 1");
  const auto suites = run_verification(f.options);
  std::size_t passed = 0;
  json results = json::array();
  for (const auto& s : suites) {
    passed += s.passed ? 1 : 0;
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << ": " << s.detail << "\n";
    results.push_back({{"suite", s.name}, {"passed", s.passed}, {"cases", s.cases},
                       {"points", s.points}, {"skipped", s.skipped}, {"max_error", s.max_error}});
  }
  std::cout << passed << "/" << suites.size() << " suites passed" << std::endl;
  if (!f.out.empty()) {
    echo_config(cmd, f.out);
    write_json(fs::path(f.out) / "verify.json",
               {{"seed", f.options.seed}, {"passed", passed}, {"total", suites.size()},
                {"suites", results}});
  }
  return passed == suites.size() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    args = cli::expand_config_args(args);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << std::endl;
    return 2;
  }

  CLI::App app{"Cascade SpoofNet iris presentation-attack detection: synthesize, train, evaluate."};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto add_config = [](CLI::App* cmd) {
    cmd->add_option("--config", "Flat key = value file; its keys mirror flag names and flags win")
        ->check(CLI::ExistingFile);
  };

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic iris spoof dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--counts", synth.counts, "Train images per class, live:printed:contact");
  synth_cmd->add_option("--test-counts", synth.test_counts, "Test images per class, live:printed:contact");
  synth_cmd->add_option("--datasets", synth.datasets, "Number of parameter-varied pseudo-datasets");
  synth_cmd->add_option("--width", synth.width, "Image width in pixels");
  synth_cmd->add_option("--height", synth.height, "Image height in pixels");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  add_config(synth_cmd);

  DataFlags data;
  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train both cascade stages on a manifest's train subset");
  train_cmd->add_option("--manifest", data.manifest, "Manifest CSV")->required();
  train_cmd->add_option("--out", data.out, "Output directory for model.spnf and histories")->required();
  train_cmd->add_flag("--strict", data.strict, "Check every image and bbox before training");
  add_train_flags(train_cmd, train);
  add_config(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Score a manifest's test subset and report APCER/BPCER");
  eval_cmd->add_option("--manifest", data.manifest, "Manifest CSV")->required();
  eval_cmd->add_option("--model", data.model, "Model file written by train")->required();
  eval_cmd->add_option("--out", data.out, "Output directory for report and score dump")->required();
  eval_cmd->add_option("--thresholds", data.thresholds, "Comma-separated thresholds in [0, 100]");
  eval_cmd->add_flag("--strict", data.strict, "Check every image and bbox before scoring");
  add_config(eval_cmd);

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Recompute APCER/BPCER from an existing score dump");
  sweep_cmd->add_option("--scores", sweep.scores, "Score dump written by eval")->required();
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--thresholds", sweep.thresholds, "Ascending comma-separated thresholds");
  add_config(sweep_cmd);

  auto* cross_cmd = app.add_subcommand("cross", "Leave-one-dataset-out training and evaluation");
  cross_cmd->add_option("--manifest", data.manifest, "Manifest CSV with at least two datasets")->required();
  cross_cmd->add_option("--out", data.out, "Output directory")->required();
  cross_cmd->add_option("--thresholds", data.thresholds, "Comma-separated thresholds in [0, 100]");
  cross_cmd->add_flag("--strict", data.strict, "Check every image and bbox before training");
  add_train_flags(cross_cmd, train);
  add_config(cross_cmd);

  VerifyFlags verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run gradient checks and metric oracles");
  verify_cmd->add_option("--seed", verify.options.seed, "Seed for the generated cases");
  verify_cmd->add_option("--grad-cases", verify.options.grad_cases, "Seeded shapes per gradient suite");
  verify_cmd->add_option("--out", verify.out, "Optional directory for verify.json");
  add_config(verify_cmd);

  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    const auto selected = app.get_subcommands();
    std::cerr << (selected.empty() ? app.help() : selected.front()->help());
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_cmd, synth);
    if (train_cmd->parsed()) return run_train(train_cmd, data, train);
    if (eval_cmd->parsed()) return run_eval(eval_cmd, data);
    if (sweep_cmd->parsed()) return run_sweep(sweep_cmd, sweep);
    if (cross_cmd->parsed()) return run_cross(cross_cmd, data, train);
    if (verify_cmd->parsed()) return run_verify(verify_cmd, verify);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << std::endl;
    return 1;
  }
  return 2;
}
