// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [--criterion N] [--work DIR]
//
// Criteria 5, 8 and 9 drive the spoofnet binary; 7 and 9 reuse the
// criterion-5 run under DIR/c5 when it is complete.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spoof/eval.hpp"
#include "spoof/fsutil.hpp"
#include "spoof/layers.hpp"
#include "spoof/synth.hpp"
#include "spoof/training.hpp"

namespace fs = std::filesystem;
using namespace spoof;
using nlohmann::json;

namespace {

// ---- pinned tolerances and budgets -------------------------------------------

constexpr double kFdEpsilon = 1e-4;
constexpr double kGradTolerance = 1e-5;
constexpr std::size_t kGradShapes = 20;
constexpr double kGradSeconds = 120;
constexpr std::size_t kConvConfigs = 50;
constexpr double kConvFloatTolerance = 1e-6;
constexpr std::size_t kMetricScores = 10000;
constexpr std::size_t kMonotoneSets = 100;
constexpr double kOverfitLoss = 0.05;
constexpr double kOverfitSeconds = 120;
constexpr double kPipelineRate = 5.0;  // percent, at threshold 50
constexpr double kPipelineSeconds = 900;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

fs::path g_work;

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SPOOFNET_BIN) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1: finite differences against every backward ----------------------------

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void fill_normal(Tensor<double>& t, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  for (auto& v : t.data()) v = d(rng);
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_err(double a, double n) {
  const double scale = std::max(std::abs(a), std::abs(n));
  return scale < 1e-8 ? std::abs(a - n) : std::abs(a - n) / scale;
}

struct FdStats {
  double max_err = 0;
  std::size_t points = 0;
  std::size_t skipped = 0;
};

// Central differences of `loss` w.r.t. up to 64 entries of `theta`. A point is
// skipped when `pattern` (piecewise-linear region id) changes within +-eps.
void fd_compare(Tensor<double>& theta, const Tensor<double>& analytic,
                const std::function<double()>& loss, FdStats& st, Rng& rng,
                const std::function<std::uint64_t()>& pattern = {}) {
  std::vector<std::size_t> idx(theta.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min<std::size_t>(idx.size(), 64));
  const std::uint64_t base = pattern ? (loss(), pattern()) : 0;
  for (std::size_t i : idx) {
    const double v = theta[i];
    theta[i] = v + kFdEpsilon;
    const double lp = loss();
    const bool moved_p = pattern && pattern() != base;
    theta[i] = v - kFdEpsilon;
    const double lm = loss();
    const bool moved_m = pattern && pattern() != base;
    theta[i] = v;
    if (moved_p || moved_m) {
      ++st.skipped;
      continue;
    }
    st.max_err = std::max(st.max_err, rel_err(analytic[i], (lp - lm) / (2 * kFdEpsilon)));
    ++st.points;
  }
}

ConvConfig random_conv(Rng& rng, std::size_t& h, std::size_t& w) {
  ConvConfig cfg;
  cfg.out_channels = pick(rng, 1, 4);
  const std::size_t k = pick(rng, 1, 3);
  cfg.kernel = {k, k};
  cfg.stride = {pick(rng, 1, 2), pick(rng, 1, 2)};
  cfg.padding = {pick(rng, 0, k - 1), pick(rng, 0, k - 1)};
  h = pick(rng, k, 7);
  w = pick(rng, k, 7);
  // make the windows tile exactly
  while ((h + 2 * cfg.padding.h - k) % cfg.stride.h) ++h;
  while ((w + 2 * cfg.padding.w - k) % cfg.stride.w) ++w;
  return cfg;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::map<std::string, FdStats> stats;

  for (std::size_t c = 0; c < kGradShapes; ++c) {
    // conv
    {
      std::size_t h, w;
      const auto cfg = random_conv(rng, h, w);
      const std::size_t ch = pick(rng, 1, 3);
      Conv2d<double> conv(ch, cfg);
      Tensor<double> x({pick(rng, 1, 2), ch, h, w});
      fill_normal(x, rng);
      fill_normal(conv.weight, rng);
      fill_normal(conv.bias, rng);
      auto y = conv.forward(x);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = conv.backward(r);
      const auto dw = conv.d_weight, db = conv.d_bias;
      auto loss = [&] { return dot(conv.infer(x), r); };
      fd_compare(x, dx, loss, stats["conv"], rng);
      fd_compare(conv.weight, dw, loss, stats["conv"], rng);
      fd_compare(conv.bias, db, loss, stats["conv"], rng);
    }
    // max-pool on distinct values spaced well beyond eps, windows may overlap
    {
      const std::size_t win = pick(rng, 2, 3), stride = pick(rng, 1, 2);
      std::size_t side = pick(rng, win, 7);
      while ((side - win) % stride) ++side;
      MaxPool2d<double> pool(PoolConfig{{win, win}, {stride, stride}, {0, 0}});
      Tensor<double> x({1, pick(rng, 1, 3), side, side});
      std::vector<double> values(x.size());
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.05 * static_cast<double>(i);
      std::shuffle(values.begin(), values.end(), rng);
      std::copy(values.begin(), values.end(), x.data().begin());
      auto y = pool.forward(x);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = pool.backward(r);
      fd_compare(x, dx, [&] { return dot(pool.infer(x), r); }, stats["maxpool"], rng);
    }
    // affine
    {
      const std::size_t n = pick(rng, 1, 4), d = pick(rng, 1, 8), m = pick(rng, 1, 4);
      Affine<double> fc(d, m);
      Tensor<double> x({n, d});
      fill_normal(x, rng);
      fill_normal(fc.weight, rng);
      fill_normal(fc.bias, rng);
      auto y = fc.forward(x);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = fc.backward(r);
      const auto dw = fc.d_weight, db = fc.d_bias;
      auto loss = [&] { return dot(fc.infer(x), r); };
      fd_compare(x, dx, loss, stats["affine"], rng);
      fd_compare(fc.weight, dw, loss, stats["affine"], rng);
      fd_compare(fc.bias, db, loss, stats["affine"], rng);
    }
    // relu, inputs kept at least 0.01 from the kink
    {
      Relu<double> relu;
      Tensor<double> x({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)});
      fill_normal(x, rng);
      for (auto& v : x.data())
        if (std::abs(v) < 0.01) v = v < 0 ? -0.01 - std::abs(v) : 0.01 + v;
      auto y = relu.forward(x);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = relu.backward(r);
      fd_compare(x, dx, [&] { return dot(relu.infer(x), r); }, stats["relu"], rng);
    }
    // inception
    {
      const InceptionSpec spec{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3),
                               pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
      const std::size_t ch = pick(rng, 1, 3), side = pick(rng, 3, 6);
      Inception<double> block(ch, spec);
      for (auto* conv : block.convs()) {
        fill_normal(conv->weight, rng, 0.7);
        fill_normal(conv->bias, rng, 0.3);
      }
      Tensor<double> x({1, ch, side, side});
      fill_normal(x, rng);
      auto y = block.forward(x);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = block.backward(r);
      std::vector<Tensor<double>> dws;
      for (auto* conv : block.convs()) dws.push_back(conv->d_weight);
      auto loss = [&] { return dot(block.forward(x), r); };
      auto pattern = [&] { return block.pattern_hash(); };
      fd_compare(x, dx, loss, stats["inception"], rng, pattern);
      auto convs = block.convs();
      const std::size_t which = pick(rng, 0, convs.size() - 1);
      fd_compare(convs[which]->weight, dws[which], loss, stats["inception"], rng, pattern);
    }
    // dropout with its mask frozen
    {
      Dropout<double> drop(0.3, 1000 + c);
      Tensor<double> x({pick(rng, 1, 4), pick(rng, 2, 9)});
      fill_normal(x, rng);
      auto y = drop.forward(x, Mode::Train);
      Tensor<double> r(y.shape());
      fill_normal(r, rng);
      const auto dx = drop.backward(r);
      fd_compare(x, dx, [&] { return dot(drop.apply_mask(x), r); }, stats["dropout"], rng);
    }
    // sigmoid + binary cross-entropy
    {
      Tensor<double> z({pick(rng, 1, 16)});
      fill_normal(z, rng, 3.0);
      std::vector<double> y(z.size());
      for (auto& v : y) v = static_cast<double>(rng() % 2);
      const auto res = bce_with_logits<double>(z, y);
      fd_compare(z, res.d_logits, [&] { return bce_with_logits<double>(z, y).loss; }, stats["bce"], rng);
    }
  }

  const double secs = seconds_since(t0);
  bool ok = secs < kGradSeconds;
  std::ostringstream os;
  for (const auto& [name, st] : stats) {
    ok = ok && st.max_err < kGradTolerance && st.points > 0;
    os << name << " " << fmt(st.max_err, 2) << (st.skipped ? " (" + std::to_string(st.skipped) + " kink skips)" : "")
       << ", ";
  }
  os << kGradShapes << " shapes each, " << fmt(secs, 3) << " s";
  return {ok, "max rel err " + os.str()};
}

// ---- 2: six-loop convolution oracle -------------------------------------------

template <typename T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, const ConvConfig& cfg) {
  const long N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = k.dim(0);
  const long kh = cfg.kernel.h, kw = cfg.kernel.w, sh = cfg.stride.h, sw = cfg.stride.w;
  const long ph = cfg.padding.h, pw = cfg.padding.w;
  const long Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(K), static_cast<std::size_t>(Ho),
                 static_cast<std::size_t>(Wo)});
  for (long n = 0; n < N; ++n)
    for (long o = 0; o < K; ++o)
      for (long y = 0; y < Ho; ++y)
        for (long xo = 0; xo < Wo; ++xo) {
          T acc = b[o];
          for (long c = 0; c < C; ++c)
            for (long i = 0; i < kh; ++i)
              for (long j = 0; j < kw; ++j) {
                const long iy = y * sh + i - ph, ix = xo * sw + j - pw;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                acc += x.at(n, c, iy, ix) * k.at(o, c, i, j);
              }
          out.at(n, o, y, xo) = acc;
        }
  return out;
}

Outcome criterion2() {
  Rng rng(202);
  double float_err = 0;
  std::size_t double_mismatch = 0;
  for (std::size_t c = 0; c < kConvConfigs; ++c) {
    std::size_t h, w;
    ConvConfig cfg = random_conv(rng, h, w);
    cfg.out_channels = pick(rng, 1, 6);
    h += pick(rng, 0, 4) * cfg.stride.h;
    w += pick(rng, 0, 4) * cfg.stride.w;
    const std::size_t ch = pick(rng, 1, 5);
    Tensor<double> x({pick(rng, 1, 3), ch, h, w}), k({cfg.out_channels, ch, cfg.kernel.h, cfg.kernel.w}),
        b({cfg.out_channels});
    fill_normal(x, rng);
    fill_normal(k, rng);
    fill_normal(b, rng);
    double_mismatch += !(conv2d_forward(x, k, b, cfg) == naive_conv(x, k, b, cfg));
    const auto xf = x.cast<float>(), kf = k.cast<float>(), bf = b.cast<float>();
    const auto fast = conv2d_forward(xf, kf, bf, cfg), slow = naive_conv(xf, kf, bf, cfg);
    for (std::size_t i = 0; i < fast.size(); ++i)
      float_err = std::max(float_err, static_cast<double>(std::abs(fast[i] - slow[i])));
  }
  return {float_err <= kConvFloatTolerance && double_mismatch == 0,
          std::to_string(kConvConfigs) + " configs, float max abs diff " + fmt(float_err, 3) + ", " +
              std::to_string(double_mismatch) + " double mismatches"};
}

// ---- 3: counting oracle and monotonicity ---------------------------------------

std::vector<ScoredSample> seeded_scores(Rng& rng, std::size_t n) {
  std::vector<ScoredSample> out;
  std::uniform_real_distribution<double> u(0, 100);
  for (std::size_t i = 0; i < n; ++i) {
    LivenessScore s;
    s.value = rng() % 5 == 0 ? static_cast<double>(rng() % 101) : u(rng);
    const Label l = static_cast<Label>(rng() % 3);
    out.push_back(make_scored({"s" + std::to_string(i), l, "d", Subset::Test, std::nullopt}, s));
  }
  return out;
}

Outcome criterion3() {
  Rng rng(303);
  const auto scored = seeded_scores(rng, kMetricScores);
  std::vector<double> thresholds;
  for (int t = 0; t <= 100; ++t) thresholds.push_back(t);
  const auto sweep = threshold_sweep(scored, thresholds);
  std::size_t mismatches = 0;
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double t = thresholds[ti];
    std::size_t na = 0, acc = 0, nb = 0, rej = 0;
    for (const auto& s : scored) {
      if (s.record.label == Label::Live) {
        ++nb;
        rej += s.score.value < t;
      } else {
        ++na;
        acc += s.score.value >= t;
      }
    }
    const double want_a = 100.0 * static_cast<double>(acc) / static_cast<double>(na);
    const double want_b = 100.0 * static_cast<double>(rej) / static_cast<double>(nb);
    mismatches += apcer(scored, t) != want_a;
    mismatches += bpcer(scored, t) != want_b;
    mismatches += sweep[ti].apcer != want_a || sweep[ti].bpcer != want_b;
  }

  std::size_t violations = 0;
  for (std::size_t set = 0; set < kMonotoneSets; ++set) {
    auto s = seeded_scores(rng, pick(rng, 2, 400));
    s[0].record.label = Label::Live;
    s[0].is_attack = false;
    s[1].record.label = Label::Printed;
    s[1].is_attack = true;
    const auto rows = threshold_sweep(s, thresholds);
    for (std::size_t i = 1; i < rows.size(); ++i)
      violations += rows[i].apcer > rows[i - 1].apcer || rows[i].bpcer < rows[i - 1].bpcer;
  }
  return {mismatches == 0 && violations == 0,
          std::to_string(kMetricScores) + " scores x 101 thresholds, " + std::to_string(mismatches) +
              " oracle mismatches; " + std::to_string(kMonotoneSets) + " sets, " +
              std::to_string(violations) + " monotonicity violations"};
}

// ---- 4: overfit sanity -------------------------------------------------------

Outcome criterion4() {
  const auto t0 = Clock::now();
  const fs::path dir = g_work / "c4";
  fs::remove_all(dir);
  SynthConfig sc;
  sc.out_dir = dir;
  sc.train = {22, 21, 21};
  sc.seed = 4;
  const auto manifest = synth_generate(sc);

  HyperParams hp;
  hp.max_epochs = 200;
  hp.learning_rate = 1e-2;
  NetworkSpec spec;
  spec.input_size = 16;

  bool ok = true;
  std::ostringstream os;
  for (Stage stage : {Stage::One, Stage::Two}) {
    const auto data = build_stage_data(manifest, manifest.records, stage, spec.input_size);
    NetworkSpec s = spec;
    const auto st = input_statistics(data);
    s.input_mean = st.mean;
    s.input_scale = 1.0 / st.stddev;
    auto net = build_spoofnet<float>(s, stage == Stage::One ? 1 : 2);
    hp.seed = stage == Stage::One ? 11 : 12;
    const auto history = train_stage(net, data, data, hp);
    const auto m = evaluate_stage(net, data);
    ok = ok && m.accuracy == 1.0 && m.loss < kOverfitLoss;
    os << "stage " << (stage == Stage::One ? 1 : 2) << " (" << data.size() << " images) acc "
       << fmt(m.accuracy) << " loss " << fmt(m.loss, 3) << " best epoch " << history.best_epoch << "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < kOverfitSeconds;
  os << fmt(secs, 3) << " s";
  fs::remove_all(dir);
  return {ok, os.str()};
}

// ---- 5 and 9: the CLI pipeline ------------------------------------------------

struct PipelineRun {
  bool ok = false;
  double seconds = 0;
  fs::path dir;
  std::string error;
};

PipelineRun run_pipeline(const fs::path& dir) {
  PipelineRun run;
  run.dir = dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "pipeline.log";
  const auto t0 = Clock::now();
  const std::string data = (dir / "data").string();
  const std::vector<std::pair<std::string, std::string>> steps{
      {"synth", "synth --out " + data + " --counts 200:200:200 --test-counts 100:100:100 --seed 1"},
      // default hyperparameters, spelled out
      {"train", "train --manifest " + data + "/manifest.csv --out " + (dir / "model").string() +
                    " --epochs 20 --batch-size 8 --lr 1e-5 --weight-decay 1e-4 --patience 5"
                    " --dropout 0.2 --seed 42"},
      {"eval", "eval --manifest " + data + "/manifest.csv --model " + (dir / "model/model.spnf").string() +
                   " --out " + (dir / "eval").string()}};
  for (const auto& [name, args] : steps) {
    const int code = run_cli(args, log);
    if (code != 0) {
      run.error = name + " exited " + std::to_string(code) + " (see " + log.string() + ")";
      return run;
    }
  }
  run.seconds = seconds_since(t0);
  run.ok = true;
  std::ofstream(dir / "complete") << run.seconds << "\n";
  return run;
}

PipelineRun reuse_or_run_c5() {
  const fs::path dir = g_work / "c5";
  if (fs::exists(dir / "complete")) {
    PipelineRun run;
    run.ok = true;
    run.dir = dir;
    std::ifstream(dir / "complete") >> run.seconds;
    return run;
  }
  return run_pipeline(dir);
}

const json* combined_row(const json& report, double threshold) {
  for (const auto& row : report["rows"])
    if (row["dataset"] == kCombined && row["threshold"].get<double>() == threshold) return &row;
  return nullptr;
}

Outcome criterion5() {
  const auto run = run_pipeline(g_work / "c5");
  if (!run.ok) return {false, run.error};
  const auto report = json::parse(slurp(run.dir / "eval/report.json"));
  const json* row = combined_row(report, 50);
  if (!row) return {false, "no combined row at threshold 50"};
  const double a = (*row)["apcer"].get<double>(), b = (*row)["bpcer"].get<double>();
  const bool ok = a <= kPipelineRate && b <= kPipelineRate && run.seconds < kPipelineSeconds;
  const auto training = report["run"]["training"];
  return {ok, "APCER " + fmt(a) + "% BPCER " + fmt(b) + "% at threshold 50 (" +
                  std::to_string((*row)["n_attack"].get<int>()) + " attacks, " +
                  std::to_string((*row)["n_bonafide"].get<int>()) + " bonafide); stage epochs " +
                  training["stage1"]["stopped_epoch"].dump() + "/" +
                  training["stage2"]["stopped_epoch"].dump() + "; " + fmt(run.seconds, 4) + " s"};
}

Outcome criterion9() {
  const auto first = reuse_or_run_c5();
  if (!first.ok) return {false, "first run: " + first.error};
  const auto second = run_pipeline(g_work / "c9");
  if (!second.ok) return {false, "second run: " + second.error};
  std::vector<std::string> differing;
  const char* files[] = {"data/manifest.csv", "model/model.spnf", "model/history_stage1.csv",
                         "eval/scores.csv",   "eval/report.csv",  "eval/report.json"};
  std::size_t compared = 0;
  for (const char* f : files) {
    std::string a = slurp(first.dir / f), b = slurp(second.dir / f);
    if (std::string(f).find("history") != std::string::npos) {
      // wall-clock seconds are the only non-deterministic column
      auto strip = [](const std::string& text) {
        std::string out;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
        return out;
      };
      a = strip(a);
      b = strip(b);
    }
    ++compared;
    if (a.empty() || a != b) differing.push_back(f);
  }
  std::string detail = std::to_string(compared - differing.size()) + "/" + std::to_string(compared) +
                       " artifacts bitwise identical";
  for (const auto& f : differing) detail += "; differs: " + f;
  fs::remove_all(second.dir);
  return {differing.empty(), detail};
}

// ---- 6: early stopping ---------------------------------------------------------

Outcome criterion6() {
  const fs::path dir = g_work / "c6";
  fs::remove_all(dir);
  SynthConfig sc;
  sc.out_dir = dir;
  sc.train = {8, 8, 8};
  sc.width = 96;
  sc.height = 72;
  sc.seed = 6;
  const auto manifest = synth_generate(sc);
  const auto data = build_stage_data(manifest, manifest.records, Stage::One, 16);

  const std::vector<double> injected{1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99};
  StageOptions opts;
  opts.val_loss_override = [&](std::size_t epoch) { return injected.at(epoch - 1); };
  HyperParams hp;
  hp.patience = 5;
  hp.max_epochs = 20;
  NetworkSpec spec;
  spec.input_size = 16;
  auto net = build_spoofnet<float>(spec, 6);
  const auto h = train_stage(net, data, data, hp, opts);
  fs::remove_all(dir);

  const bool restored = h.epochs.size() >= 2 && net.fingerprint() == h.epochs[1].weights_fingerprint;
  const bool moved = h.epochs.size() == 7 && h.epochs[6].weights_fingerprint != h.epochs[1].weights_fingerprint;
  return {h.stopped_epoch == 7 && h.best_epoch == 2 && restored && moved,
          "stopped after epoch " + std::to_string(h.stopped_epoch) + ", best epoch " +
              std::to_string(h.best_epoch) + ", final weights " +
              (restored ? "match" : "do not match") + " the epoch-2 fingerprint"};
}

// ---- 7: cascade gate -------------------------------------------------------------

Outcome criterion7() {
  const auto run = reuse_or_run_c5();
  if (!run.ok) return {false, run.error};
  const auto model = load_model(run.dir / "model/model.spnf");
  const auto manifest = load_manifest(run.dir / "data/manifest.csv");
  const auto test = manifest.subset(Subset::Test);
  CascadeCounters counters;
  const auto scored = score_samples(model, manifest, test, &counters);
  std::size_t passing = 0, bad = 0;
  for (const auto& s : scored) {
    const bool gate_passes = s.score.p1 >= model.gate;
    passing += gate_passes;
    bad += gate_passes != s.score.stage2_ran;
    if (!gate_passes) bad += s.score.p2.has_value();
  }
  const bool ok = bad == 0 && counters.stage2.load() == passing && counters.stage1.load() == scored.size();
  return {ok, std::to_string(scored.size()) + " samples, " + std::to_string(passing) +
                  " pass the gate, stage-2 counter " + std::to_string(counters.stage2.load()) + ", " +
                  std::to_string(bad) + " inconsistent samples"};
}

// ---- 8: cross-dataset protocol --------------------------------------------------

Outcome criterion8() {
  const fs::path dir = g_work / "c8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "cross.log";
  const std::string data = (dir / "data").string();
  if (run_cli("synth --out " + data + " --datasets 4 --counts 30:30:30 --test-counts 15:15:15 --seed 8", log))
    return {false, "synth failed (see " + log.string() + ")"};
  if (run_cli("cross --manifest " + data + "/manifest.csv --out " + (dir / "cross").string() +
                  " --input-size 48",
              log))
    return {false, "cross failed (see " + log.string() + ")"};

  const auto manifest = load_manifest(dir / "data/manifest.csv");
  std::map<std::string, std::string> dataset_of;
  for (const auto& r : manifest.records) dataset_of[r.image_path] = r.dataset;

  std::size_t models = 0, shared = 0, leaked = 0;
  for (const auto& name : manifest.datasets()) {
    const fs::path fold = dir / "cross" / ("fold_" + name);
    if (fs::exists(fold / "model.spnf")) {
      (void)load_model(fold / "model.spnf");
      ++models;
    }
    std::set<std::string> train;
    std::istringstream in(slurp(fold / "train_images.txt"));
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) train.insert(line);
    for (const auto& p : train) leaked += dataset_of[p] == name;
    const auto scored = parse_score_dump(slurp(fold / "scores.csv"));
    for (const auto& s : scored) shared += train.count(s.record.image_path);
    if (train.empty() || scored.empty()) ++leaked;
  }

  const auto report = json::parse(slurp(dir / "cross/cross_report.json"));
  std::map<std::string, std::set<double>> blocks;
  for (const auto& row : report["rows"]) blocks[row["dataset"]].insert(row["threshold"].get<double>());
  bool shape_ok = blocks.size() == 4 && report["rows"].size() == 24;
  for (const auto& [name, ts] : blocks) shape_ok = shape_ok && ts.size() == 6;

  // Directional expectation, logged only.
  std::string direction = "within-dataset reference unavailable";
  if (fs::exists(g_work / "c5/eval/report.json")) {
    const auto within = json::parse(slurp(g_work / "c5/eval/report.json"));
    std::vector<std::string> notes;
    std::size_t holds = 0, total = 0;
    for (double t : kDefaultThresholds) {
      const json* w = combined_row(within, t);
      if (!w) continue;
      double sum = 0;
      std::size_t n = 0;
      for (const auto& row : report["rows"])
        if (row["threshold"].get<double>() == t && row["apcer"].is_number()) {
          sum += row["apcer"].get<double>();
          ++n;
        }
      if (n == 0) continue;
      ++total;
      holds += sum / static_cast<double>(n) >= (*w)["apcer"].get<double>();
    }
    direction = "mean cross APCER >= within-dataset APCER at " + std::to_string(holds) + "/" +
                std::to_string(total) + " thresholds";
  }

  const bool ok = models == 4 && shared == 0 && leaked == 0 && shape_ok;
  return {ok, std::to_string(models) + " models, " + std::to_string(shared) +
                  " shared train/eval paths, " + std::to_string(leaked) + " held-out leaks, " +
                  std::to_string(report["rows"].size()) + " report rows; " + direction};
}

// ---- 10: split arithmetic ---------------------------------------------------------

Outcome criterion10() {
  std::vector<SampleRecord> recs;
  const std::pair<Label, std::size_t> counts[] = {{Label::Live, 2469}, {Label::Printed, 1346}, {Label::Contact, 1122}};
  for (const auto& [label, n] : counts)
    for (std::size_t i = 0; i < n; ++i)
      recs.push_back({std::string(to_string(label)) + std::to_string(i), label, "clarkson", Subset::Train,
                      std::nullopt});
  const auto split = stratified_split(recs, 0.8, 42);
  std::map<Label, std::size_t> train;
  for (const auto& r : split.train) ++train[r.label];
  std::multiset<std::string> all;
  for (const auto* half : {&split.train, &split.val})
    for (const auto& r : *half) all.insert(r.image_path);
  std::set<std::string> expected;
  for (const auto& r : recs) expected.insert(r.image_path);
  const bool union_ok = all.size() == recs.size() && std::set<std::string>(all.begin(), all.end()) == expected;
  const bool sizes_ok = train[Label::Live] == 1975 && train[Label::Printed] == 1076 && train[Label::Contact] == 897;
  return {union_ok && sizes_ok, "train sizes (" + std::to_string(train[Label::Live]) + ", " +
                                    std::to_string(train[Label::Printed]) + ", " +
                                    std::to_string(train[Label::Contact]) + "), disjoint union " +
                                    (union_ok ? "holds" : "violated")};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient fidelity", criterion1},   {2, "convolution oracle", criterion2},
    {3, "metric oracle", criterion3},       {4, "overfit sanity", criterion4},
    {5, "end-to-end pipeline", criterion5}, {6, "early stopping", criterion6},
    {7, "cascade gate", criterion7},        {8, "cross-dataset protocol", criterion8},
    {9, "determinism", criterion9},         {10, "split arithmetic", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  g_work = fs::current_path() / "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (arg == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--criterion N] [--work DIR]\n";
      return 2;
    }
  }
  fs::create_directories(g_work);

  bool all = true;
  for (const auto& c : kCriteria) {
    if (only && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " c" << c.id << " " << c.name << ": " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
