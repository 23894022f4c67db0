#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spoof/kernels.hpp"
#include "spoof/tensor.hpp"

namespace spoof {

enum class Mode { Train, Infer };

/// Handle to one learnable tensor and its gradient slot.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
  bool decay;  // false for biases
};

/// Stateful layers cache what their backward pass needs during forward().
/// infer() is const and keeps no state, so one trained layer can serve
/// concurrent callers. A single instance must not run two forward passes at
/// once.

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, const ConvConfig& cfg);

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream);
  void collect(std::vector<ParamRef<T>>& out, const std::string& prefix);

  const ConvConfig& config() const noexcept { return cfg_; }
  std::size_t fan_in() const noexcept { return weight.dim(1) * cfg_.kernel.h * cfg_.kernel.w; }

  Tensor<T> weight, bias;
  Tensor<T> d_weight, d_bias;

 private:
  ConvConfig cfg_;
  Tensor<T> input_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream) const;
  /// Bits of the last forward's on/off pattern, for kink detection.
  std::uint64_t pattern_hash() const noexcept;

 private:
  Shape shape_;
  std::vector<std::uint8_t> active_;
};

template <typename T>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  explicit MaxPool2d(const PoolConfig& cfg) : cfg_(cfg) {}

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream) const;
  std::uint64_t pattern_hash() const noexcept;
  const PoolConfig& config() const noexcept { return cfg_; }

 private:
  PoolConfig cfg_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
/// inference is the identity.
template <typename T>
class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  /// Applies the mask drawn by the last training forward without resampling.
  Tensor<T> apply_mask(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream) const;
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  double rate() const noexcept { return rate_; }
  std::span<const T> mask() const noexcept { return mask_; }

 private:
  double rate_ = 0.0;
  std::mt19937_64 rng_;
  bool masked_ = false;
  std::vector<T> mask_;
};

template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const { return global_avg_pool_forward(input); }
  Tensor<T> backward(const Tensor<T>& upstream) const;

 private:
  Shape input_shape_;
};

template <typename T>
class Affine {
 public:
  Affine() = default;
  Affine(std::size_t in_features, std::size_t out_features);

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream);
  void collect(std::vector<ParamRef<T>>& out, const std::string& prefix);

  Tensor<T> weight, bias;
  Tensor<T> d_weight, d_bias;

 private:
  Tensor<T> input_;
};

/// Channel counts of the four parallel branches.
struct InceptionSpec {
  std::size_t b1_out = 16;
  std::size_t b2_reduce = 8;
  std::size_t b2_out = 16;
  std::size_t b3_reduce = 8;
  std::size_t b3_out = 16;
  std::size_t b4_out = 16;

  std::size_t out_channels() const noexcept { return b1_out + b2_out + b3_out + b4_out; }
  void validate() const;
  friend bool operator==(const InceptionSpec&, const InceptionSpec&) = default;
};

/// 1x1 | 1x1->3x3 | 1x1->5x5 | 3x3 maxpool->1x1, each conv followed by ReLU,
/// joined along channels. Spatial extent is preserved.
template <typename T>
class Inception {
 public:
  Inception() = default;
  Inception(std::size_t in_channels, const InceptionSpec& spec);

  Tensor<T> forward(const Tensor<T>& input);
  Tensor<T> infer(const Tensor<T>& input) const;
  Tensor<T> backward(const Tensor<T>& upstream);
  void collect(std::vector<ParamRef<T>>& out, const std::string& prefix);
  std::vector<Conv2d<T>*> convs();
  std::uint64_t pattern_hash() const noexcept;

  const InceptionSpec& spec() const noexcept { return spec_; }

 private:
  void check_spatial(const Tensor<T>& input, const Tensor<T>& output) const;

  InceptionSpec spec_;
  Conv2d<T> b1_, b2_reduce_, b2_, b3_reduce_, b3_, b4_;
  Relu<T> r1_, r2a_, r2b_, r3a_, r3b_, r4_;
  MaxPool2d<T> pool_;
};

template <typename T>
T sigmoid(T logit) noexcept;

template <typename T>
struct BceResult {
  T loss;
  Tensor<T> d_logits;  // (sigmoid(z) - y) / N, same shape as the logits
};

/// Mean binary cross-entropy of sigmoid(logits) against {0,1} labels,
/// evaluated in logit space. Throws std::invalid_argument on other labels.
template <typename T>
BceResult<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels);

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class Relu<float>;
extern template class Relu<double>;
extern template class MaxPool2d<float>;
extern template class MaxPool2d<double>;
extern template class Dropout<float>;
extern template class Dropout<double>;
extern template class GlobalAvgPool<float>;
extern template class GlobalAvgPool<double>;
extern template class Affine<float>;
extern template class Affine<double>;
extern template class Inception<float>;
extern template class Inception<double>;

}  // namespace spoof
