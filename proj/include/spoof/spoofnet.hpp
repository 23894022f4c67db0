#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spoof/dataio.hpp"
#include "spoof/layers.hpp"

namespace spoof {

/// Four conv layers (each ReLU + max-pool), one inception block, then
/// global average pool -> dropout -> affine to a single logit.
struct NetworkSpec {
  std::size_t input_size = 96;
  std::size_t input_channels = 1;
  std::array<ConvConfig, 4> conv_stack{{
      {16, {3, 3}, {1, 1}, {1, 1}},
      {32, {3, 3}, {1, 1}, {1, 1}},
      {48, {3, 3}, {1, 1}, {1, 1}},
      {64, {3, 3}, {1, 1}, {1, 1}},
  }};
  PoolConfig pool{{2, 2}, {2, 2}, {0, 0}};
  InceptionSpec inception{};
  double dropout = 0.2;
  /// Inputs enter the first conv as (x - input_mean) * input_scale.
  double input_mean = 0.0;
  double input_scale = 1.0;

  /// Static shape computation for a batch of one: the input shape followed
  /// by the output shape of every conv, pool, inception, pooled feature and
  /// logit stage. Throws ShapeError on inexact arithmetic.
  std::vector<Shape> shape_walk() const;
  void validate() const { (void)shape_walk(); }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// One SpoofNet: its layer stack and learned parameters.
template <typename T>
class SpoofNet {
 public:
  SpoofNet() = default;
  explicit SpoofNet(const NetworkSpec& spec, std::uint64_t dropout_seed = 0);

  /// [N,C,S,S] -> logits [N]. Train mode samples dropout masks and caches
  /// activations for backward().
  Tensor<T> forward(const Tensor<T>& batch, Mode mode);
  Tensor<T> infer(const Tensor<T>& batch) const;
  /// Fills every parameter's gradient slot from d(loss)/d(logits).
  void backward(const Tensor<T>& d_logits);

  std::vector<ParamRef<T>> params();
  std::vector<const Tensor<T>*> param_values() const;
  std::size_t param_count() const;
  /// FNV-1a over the raw parameter bytes.
  std::uint64_t fingerprint() const;
  /// Activation pattern (ReLU on/off, pool argmax) of the last forward.
  std::uint64_t pattern_hash() const;

  const NetworkSpec& spec() const noexcept { return spec_; }
  Dropout<T>& dropout() noexcept { return dropout_; }

 private:
  Tensor<T> prepare_input(const Tensor<T>& batch) const;

  NetworkSpec spec_;
  std::array<Conv2d<T>, 4> convs_;
  std::array<Relu<T>, 4> relus_;
  std::array<MaxPool2d<T>, 4> pools_;
  Inception<T> inception_;
  GlobalAvgPool<T> gap_;
  Dropout<T> dropout_;
  Affine<T> head_;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
template <typename T = float>
SpoofNet<T> build_spoofnet(const NetworkSpec& spec, std::uint64_t init_seed);

struct LivenessScore {
  double value = 0.0;  // [0, 100], 100 = bonafide
  bool stage2_ran = false;
  double p1 = 0.0;
  std::optional<double> p2;
};

enum class Decision { Bonafide, Attack };

/// Stage 1 separates printed from non-printed on the full frame; stage 2
/// separates live from textured lens on the iris crop.
struct CascadeModel {
  SpoofNet<float> net1;
  SpoofNet<float> net2;
  double gate = 0.5;
  /// Free-form JSON recorded at training time (seed, hyperparameters).
  std::string metadata;

  void validate() const;
};

struct CascadeCounters {
  std::atomic<std::size_t> stage1{0};
  std::atomic<std::size_t> stage2{0};
};

/// The cascade's control flow on precomputed probabilities: below the gate
/// stage 2 is skipped and the score is 100*p1, otherwise 100*p1*p2.
LivenessScore combine_stages(double p1, double gate, const std::function<double()>& stage2);

/// Scores a [1,1,H,W] grayscale frame.
LivenessScore cascade_score(const CascadeModel& model, const Tensor<float>& full_image,
                            const std::optional<BBox>& iris_bbox,
                            CascadeCounters* counters = nullptr);

/// Bonafide iff score >= threshold. Threshold must lie in [0, 100].
Decision classify(double score, double threshold);
inline Decision classify(const LivenessScore& score, double threshold) {
  return classify(score.value, threshold);
}

class ModelFormatError : public std::runtime_error {
 public:
  enum class Kind { Magic, Version, Checksum, Truncated, Structure };
  ModelFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const CascadeModel& model);
CascadeModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const CascadeModel& model, const std::filesystem::path& path);
CascadeModel load_model(const std::filesystem::path& path);

extern template class SpoofNet<float>;
extern template class SpoofNet<double>;
extern template SpoofNet<float> build_spoofnet<float>(const NetworkSpec&, std::uint64_t);
extern template SpoofNet<double> build_spoofnet<double>(const NetworkSpec&, std::uint64_t);

}  // namespace spoof
