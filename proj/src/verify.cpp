#include "spoof/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spoof/eval.hpp"
#include "spoof/kernels.hpp"
#include "spoof/layers.hpp"
#include "spoof/spoofnet.hpp"

namespace spoof {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Distinct values spaced 0.05 apart in shuffled order: no ties, and no
/// argmax can change under a 1e-4 perturbation.
Tensor<double> spaced_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  std::vector<double> values(t.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.05 * static_cast<double>(i) - 1.0;
  std::shuffle(values.begin(), values.end(), rng);
  std::copy(values.begin(), values.end(), t.raw());
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::uint64_t hash_indices(const std::vector<std::size_t>& idx) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto v : idx) h = (h ^ v) * 1099511628211ULL;
  return h;
}

/// In-extent such that (in + 2*pad - window) divides evenly by stride.
std::size_t fitting_extent(Rng& rng, std::size_t window, std::size_t stride, std::size_t pad,
                           std::size_t max_steps) {
  const std::size_t base = window > 2 * pad ? window - 2 * pad : 1;
  std::size_t in = base + stride * pick(rng, 0, max_steps);
  while ((in + 2 * pad - window) % stride != 0) ++in;
  return in;
}

void finish(SuiteResult& r, double tolerance) {
  r.passed = r.passed && r.max_error < tolerance && r.points > 0;
  std::ostringstream os;
  os << r.cases << " cases, " << r.points << " points, " << r.skipped
     << " skipped at kinks, max relative error " << r.max_error;
  r.detail = os.str();
}

void init_conv(Conv2d<double>& conv, Rng& rng) {
  conv.weight = random_tensor(conv.weight.shape(), rng, std::sqrt(2.0 / conv.fan_in()));
  conv.bias = random_tensor(conv.bias.shape(), rng, 0.1);
}

}  // namespace

double relative_error(double analytic, double numeric, double abs_guard) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_guard) return diff;
  return diff / scale;
}

void gradient_check(const std::function<Evaluation()>& objective, std::vector<Probe>& probes,
                    const GradCheckOptions& options, std::mt19937_64& rng, SuiteResult& result) {
  const Evaluation base = objective();
  const double eps = options.epsilon;
  for (auto& probe : probes) {
    auto& values = *probe.value;
    if (values.shape() != probe.analytic.shape())
      throw ShapeError("gradient_check: analytic gradient shape mismatch");
    std::vector<std::size_t> points(values.size());
    std::iota(points.begin(), points.end(), 0);
    if (points.size() > options.max_points_per_tensor) {
      std::shuffle(points.begin(), points.end(), rng);
      points.resize(options.max_points_per_tensor);
    }
    for (auto i : points) {
      const double original = values[i];
      values[i] = original + eps;
      const Evaluation plus = objective();
      values[i] = original - eps;
      const Evaluation minus = objective();
      values[i] = original;
      if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2 * eps);
      const double err = relative_error(probe.analytic[i], numeric, options.abs_guard);
      result.max_error = std::max(result.max_error, err);
      ++result.points;
    }
  }
}

SuiteResult check_conv_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "conv2d gradient";
  Rng rng(options.seed ^ 0x1);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    ConvConfig cfg;
    cfg.out_channels = pick(rng, 1, 3);
    cfg.kernel = {pick(rng, 1, 3), pick(rng, 1, 3)};
    cfg.stride = {pick(rng, 1, 2), pick(rng, 1, 2)};
    cfg.padding = {pick(rng, 0, cfg.kernel.h - 1), pick(rng, 0, cfg.kernel.w - 1)};
    const std::size_t h = fitting_extent(rng, cfg.kernel.h, cfg.stride.h, cfg.padding.h, 3);
    const std::size_t w = fitting_extent(rng, cfg.kernel.w, cfg.stride.w, cfg.padding.w, 3);
    const std::size_t n = pick(rng, 1, 2), ch = pick(rng, 1, 3);
    auto x = random_tensor({n, ch, h, w}, rng);
    auto k = random_tensor({cfg.out_channels, ch, cfg.kernel.h, cfg.kernel.w}, rng);
    auto b = random_tensor({cfg.out_channels}, rng);
    const auto out_shape = conv2d_forward(x, k, b, cfg).shape();
    const auto up = random_tensor(out_shape, rng);
    auto g = conv2d_backward(x, k, cfg, up);
    std::vector<Probe> probes{{&x, g.d_input}, {&k, g.d_kernels}, {&b, g.d_bias}};
    gradient_check([&] { return Evaluation{dot(conv2d_forward(x, k, b, cfg), up)}; }, probes,
                   options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_pool_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "maxpool gradient";
  Rng rng(options.seed ^ 0x2);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    PoolConfig cfg;
    cfg.window = {pick(rng, 2, 3), pick(rng, 2, 3)};
    cfg.stride = {pick(rng, 1, 3), pick(rng, 1, 3)};
    cfg.padding = {pick(rng, 0, 1), pick(rng, 0, 1)};
    const std::size_t h = fitting_extent(rng, cfg.window.h, cfg.stride.h, cfg.padding.h, 3);
    const std::size_t w = fitting_extent(rng, cfg.window.w, cfg.stride.w, cfg.padding.w, 3);
    auto x = spaced_tensor({pick(rng, 1, 2), pick(rng, 1, 3), h, w}, rng);
    const auto fwd = maxpool_forward(x, cfg);
    const auto up = random_tensor(fwd.output.shape(), rng);
    std::vector<Probe> probes{{&x, maxpool_backward<double>(fwd.argmax, up, x.shape())}};
    gradient_check(
        [&] {
          const auto p = maxpool_forward(x, cfg);
          return Evaluation{dot(p.output, up), hash_indices(p.argmax)};
        },
        probes, options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_affine_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "affine gradient";
  Rng rng(options.seed ^ 0x3);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    const std::size_t n = pick(rng, 1, 4), d = pick(rng, 1, 8), m = pick(rng, 1, 5);
    auto x = random_tensor({n, d}, rng);
    auto w = random_tensor({d, m}, rng);
    auto b = random_tensor({m}, rng);
    const auto up = random_tensor({n, m}, rng);
    auto g = affine_backward(x, w, up);
    std::vector<Probe> probes{{&x, g.d_input}, {&w, g.d_weights}, {&b, g.d_bias}};
    gradient_check([&] { return Evaluation{dot(affine_forward(x, w, b), up)}; }, probes,
                   options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_relu_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "relu gradient";
  Rng rng(options.seed ^ 0x4);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    auto x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    Relu<double> relu;
    const auto up = random_tensor(x.shape(), rng);
    relu.forward(x);
    std::vector<Probe> probes{{&x, relu.backward(up)}};
    gradient_check(
        [&] {
          Relu<double> probe;
          const double loss = dot(probe.forward(x), up);
          return Evaluation{loss, probe.pattern_hash()};
        },
        probes, options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_inception_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "inception gradient";
  Rng rng(options.seed ^ 0x5);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    InceptionSpec spec{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3),
                       pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
    const std::size_t ch = pick(rng, 1, 3);
    Inception<double> block(ch, spec);
    for (auto* conv : block.convs()) init_conv(*conv, rng);
    auto x = random_tensor({pick(rng, 1, 2), ch, pick(rng, 2, 6), pick(rng, 2, 6)}, rng);
    const auto out = block.forward(x);
    const auto up = random_tensor(out.shape(), rng);
    std::vector<Probe> probes{{&x, block.backward(up)}};
    for (auto* conv : block.convs()) {
      probes.push_back({&conv->weight, conv->d_weight});
      probes.push_back({&conv->bias, conv->d_bias});
    }
    gradient_check(
        [&] {
          const double loss = dot(block.forward(x), up);
          return Evaluation{loss, block.pattern_hash()};
        },
        probes, options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_dropout_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "dropout gradient";
  Rng rng(options.seed ^ 0x6);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    const double rate = std::uniform_real_distribution<double>(0.05, 0.7)(rng);
    Dropout<double> drop(rate, rng());
    auto x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 16)}, rng);
    drop.forward(x, Mode::Train);
    const auto up = random_tensor(x.shape(), rng);
    std::vector<Probe> probes{{&x, drop.backward(up)}};
    gradient_check([&] { return Evaluation{dot(drop.apply_mask(x), up)}; }, probes, options.grad,
                   rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_bce_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "sigmoid+bce gradient";
  Rng rng(options.seed ^ 0x7);
  for (std::size_t c = 0; c < options.grad_cases; ++c) {
    const std::size_t n = pick(rng, 1, 8);
    auto z = random_tensor({n}, rng, 3.0);
    std::vector<double> labels(n);
    for (auto& l : labels) l = static_cast<double>(pick(rng, 0, 1));
    std::vector<Probe> probes{{&z, bce_with_logits<double>(z, labels).d_logits}};
    gradient_check([&] { return Evaluation{bce_with_logits<double>(z, labels).loss}; }, probes,
                   options.grad, rng, r);
    ++r.cases;
  }
  finish(r, options.grad.tolerance);
  return r;
}

SuiteResult check_network_gradients(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "spoofnet gradient";
  Rng rng(options.seed ^ 0x8);
  const std::size_t cases = std::max<std::size_t>(1, options.grad_cases / 4);
  GradCheckOptions grad = options.grad;
  grad.max_points_per_tensor = std::min<std::size_t>(grad.max_points_per_tensor, 6);
  for (std::size_t c = 0; c < cases; ++c) {
    NetworkSpec spec;
    spec.input_size = 16;
    for (auto& conv : spec.conv_stack) conv.out_channels = pick(rng, 2, 4);
    spec.inception = {2, 2, 2, 2, 2, 2};
    spec.dropout = 0.0;
    auto net = build_spoofnet<double>(spec, rng());
    const std::size_t n = pick(rng, 1, 3);
    auto x = random_tensor({n, 1, 16, 16}, rng);
    std::vector<double> labels(n);
    for (auto& l : labels) l = static_cast<double>(pick(rng, 0, 1));
    const auto logits = net.forward(x, Mode::Train);
    net.backward(bce_with_logits<double>(logits, labels).d_logits);
    std::vector<Probe> probes;
    for (const auto& p : net.params()) probes.push_back({p.value, *p.grad});
    gradient_check(
        [&] {
          const double loss = bce_with_logits<double>(net.forward(x, Mode::Train), labels).loss;
          return Evaluation{loss, net.pattern_hash()};
        },
        probes, grad, rng, r);
    ++r.cases;
  }
  finish(r, grad.tolerance);
  return r;
}

SuiteResult check_conv_oracle(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "conv2d reference oracle";
  Rng rng(options.seed ^ 0x9);
  double float_err = 0;
  bool double_exact = true;
  for (std::size_t c = 0; c < options.conv_oracle_cases; ++c) {
    ConvConfig cfg;
    cfg.out_channels = pick(rng, 1, 8);
    const std::size_t k = pick(rng, 1, 5);
    cfg.kernel = {k, k};
    cfg.stride = {pick(rng, 1, 2), pick(rng, 1, 2)};
    cfg.padding = {pick(rng, 0, (k - 1) / 2 + 1), pick(rng, 0, (k - 1) / 2 + 1)};
    cfg.padding = {std::min(cfg.padding.h, k - 1), std::min(cfg.padding.w, k - 1)};
    const std::size_t h = fitting_extent(rng, k, cfg.stride.h, cfg.padding.h, 12);
    const std::size_t w = fitting_extent(rng, k, cfg.stride.w, cfg.padding.w, 12);
    const std::size_t ch = pick(rng, 1, 6);
    const auto x = random_tensor({pick(rng, 1, 3), ch, h, w}, rng);
    const auto kern = random_tensor({cfg.out_channels, ch, k, k}, rng);
    const auto b = random_tensor({cfg.out_channels}, rng);

    double_exact = double_exact &&
                   conv2d_forward(x, kern, b, cfg) == reference::conv2d_forward(x, kern, b, cfg);
    const auto xf = x.cast<float>(), kf = kern.cast<float>(), bf = b.cast<float>();
    const auto fast = conv2d_forward(xf, kf, bf, cfg);
    const auto slow = reference::conv2d_forward(xf, kf, bf, cfg);
    for (std::size_t i = 0; i < fast.size(); ++i)
      float_err = std::max(float_err, static_cast<double>(std::abs(fast[i] - slow[i])));
    ++r.cases;
    r.points += fast.size();
  }
  r.max_error = float_err;
  r.passed = double_exact && float_err <= 1e-6;
  std::ostringstream os;
  os << r.cases << " configurations, float max abs diff " << float_err << ", double "
     << (double_exact ? "bitwise equal" : "NOT bitwise equal");
  r.detail = os.str();
  return r;
}

namespace {

std::vector<ScoredSample> random_scores(Rng& rng, std::size_t n) {
  std::vector<ScoredSample> out(n);
  std::uniform_real_distribution<double> score(0.0, 100.0);
  for (auto& s : out) {
    // Integer-valued scores exercise the tie rule at integer thresholds.
    s.score.value = pick(rng, 0, 4) == 0 ? static_cast<double>(pick(rng, 0, 100)) : score(rng);
    s.record.label = static_cast<Label>(pick(rng, 0, 2));
    s.is_attack = is_attack(s.record.label);
  }
  return out;
}

}  // namespace

SuiteResult check_metric_oracle(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "apcer/bpcer counting oracle";
  Rng rng(options.seed ^ 0xA);
  const auto scored = random_scores(rng, options.metric_scores);
  std::vector<double> attack, bonafide;
  for (const auto& s : scored) (s.is_attack ? attack : bonafide).push_back(s.score.value);
  std::sort(attack.begin(), attack.end());
  std::sort(bonafide.begin(), bonafide.end());

  std::vector<double> thresholds(101);
  std::iota(thresholds.begin(), thresholds.end(), 0.0);
  const auto sweep = threshold_sweep(scored, thresholds);
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const double tau = thresholds[t];
    const auto accepted = attack.end() - std::lower_bound(attack.begin(), attack.end(), tau);
    const auto rejected = std::lower_bound(bonafide.begin(), bonafide.end(), tau) - bonafide.begin();
    const double want_a = 100.0 * static_cast<double>(accepted) / static_cast<double>(attack.size());
    const double want_b = 100.0 * static_cast<double>(rejected) / static_cast<double>(bonafide.size());
    if (apcer(scored, tau) != want_a || bpcer(scored, tau) != want_b) ++mismatches;
    if (sweep[t].apcer != want_a || sweep[t].bpcer != want_b || sweep[t].threshold != tau)
      ++mismatches;
    ++r.points;
  }
  r.cases = scored.size();
  r.max_error = static_cast<double>(mismatches);
  r.passed = mismatches == 0;
  r.detail = std::to_string(r.cases) + " scores x " + std::to_string(r.points) +
             " thresholds, " + std::to_string(mismatches) + " mismatches";
  return r;
}

SuiteResult check_metric_monotonicity(const VerifyOptions& options) {
  SuiteResult r;
  r.name = "apcer/bpcer monotonicity";
  Rng rng(options.seed ^ 0xB);
  std::vector<double> thresholds(101);
  std::iota(thresholds.begin(), thresholds.end(), 0.0);
  std::size_t violations = 0;
  for (std::size_t c = 0; c < options.monotonic_sets; ++c) {
    auto scored = random_scores(rng, pick(rng, 2, 400));
    // Both classes must be present.
    scored[0].record.label = Label::Live;
    scored[0].is_attack = false;
    scored[1].record.label = Label::Printed;
    scored[1].is_attack = true;
    const auto sweep = threshold_sweep(scored, thresholds);
    for (std::size_t t = 1; t < sweep.size(); ++t) {
      if (sweep[t].apcer > sweep[t - 1].apcer) ++violations;
      if (sweep[t].bpcer < sweep[t - 1].bpcer) ++violations;
    }
    ++r.cases;
    r.points += sweep.size();
  }
  r.max_error = static_cast<double>(violations);
  r.passed = violations == 0;
  r.detail = std::to_string(r.cases) + " score sets, " + std::to_string(violations) + " violations";
  return r;
}

std::vector<SuiteResult> run_verification(const VerifyOptions& options) {
  return {check_conv_gradients(options),      check_pool_gradients(options),
          check_affine_gradients(options),    check_relu_gradients(options),
          check_inception_gradients(options), check_dropout_gradients(options),
          check_bce_gradients(options),       check_network_gradients(options),
          check_conv_oracle(options),         check_metric_oracle(options),
          check_metric_monotonicity(options)};
}

}  // namespace spoof
