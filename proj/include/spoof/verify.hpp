#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "spoof/tensor.hpp"

namespace spoof {

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-5;  // max relative error
  /// Points where both derivatives are below this are compared absolutely.
  double abs_guard = 1e-8;
  std::size_t max_points_per_tensor = 48;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t points = 0;
  std::size_t skipped = 0;  // finite difference crossed a kink
  double max_error = 0.0;
  bool passed = true;
  std::string detail;
};

/// |a - n| / max(|a|, |n|), or |a - n| when both are below `abs_guard`.
double relative_error(double analytic, double numeric, double abs_guard);

/// A tensor to perturb and the analytic gradient of the objective with
/// respect to it.
struct Probe {
  Tensor<double>* value;
  Tensor<double> analytic;
};

/// Objective value and an activation-pattern hash of one evaluation.
struct Evaluation {
  double loss;
  std::uint64_t pattern = 0;
};

/// Central differences on up to max_points_per_tensor elements of each
/// probe. Points whose perturbed evaluations change the pattern hash are
/// counted as skipped instead of compared.
void gradient_check(const std::function<Evaluation()>& objective, std::vector<Probe>& probes,
                    const GradCheckOptions& options, std::mt19937_64& rng, SuiteResult& result);

struct VerifyOptions {
  std::uint64_t seed = 2024;
  std::size_t grad_cases = 20;
  std::size_t conv_oracle_cases = 50;
  std::size_t metric_scores = 10000;
  std::size_t monotonic_sets = 100;
  GradCheckOptions grad{};
};

SuiteResult check_conv_gradients(const VerifyOptions& options);
SuiteResult check_pool_gradients(const VerifyOptions& options);
SuiteResult check_affine_gradients(const VerifyOptions& options);
SuiteResult check_relu_gradients(const VerifyOptions& options);
SuiteResult check_inception_gradients(const VerifyOptions& options);
SuiteResult check_dropout_gradients(const VerifyOptions& options);
SuiteResult check_bce_gradients(const VerifyOptions& options);
SuiteResult check_network_gradients(const VerifyOptions& options);
/// Parallel conv2d_forward against the serial reference: float within 1e-6,
/// double bitwise.
SuiteResult check_conv_oracle(const VerifyOptions& options);
/// apcer/bpcer/threshold_sweep against a sort-and-search counter on integer
/// thresholds 0..100.
SuiteResult check_metric_oracle(const VerifyOptions& options);
SuiteResult check_metric_monotonicity(const VerifyOptions& options);

std::vector<SuiteResult> run_verification(const VerifyOptions& options = {});

}  // namespace spoof
