#include "spoof/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spoof {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xFF;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, const ConvConfig& cfg)
    : weight({cfg.out_channels, in_channels, cfg.kernel.h, cfg.kernel.w}),
      bias({cfg.out_channels}),
      d_weight(weight.shape()),
      d_bias(bias.shape()),
      cfg_(cfg) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& input) {
  input_ = input;
  return conv2d_forward(input, weight, bias, cfg_);
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& input) const {
  return conv2d_forward(input, weight, bias, cfg_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& upstream) {
  auto g = conv2d_backward(input_, weight, cfg_, upstream);
  d_weight = std::move(g.d_kernels);
  d_bias = std::move(g.d_bias);
  return std::move(g.d_input);
}

template <typename T>
void Conv2d<T>::collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &d_weight, true});
  out.push_back({prefix + ".bias", &bias, &d_bias, false});
}

// ---- Relu -----------------------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& input) {
  shape_ = input.shape();
  active_.resize(input.size());
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    active_[i] = input[i] > T{0};
    out[i] = active_[i] ? input[i] : T{0};
  }
  return out;
}

template <typename T>
Tensor<T> Relu<T>::infer(const Tensor<T>& input) const {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& upstream) const {
  if (upstream.shape() != shape_) throw ShapeError("relu backward: shape mismatch");
  Tensor<T> out(upstream.shape());
  for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = active_[i] ? upstream[i] : T{0};
  return out;
}

template <typename T>
std::uint64_t Relu<T>::pattern_hash() const noexcept {
  std::uint64_t h = kFnvOffset;
  for (auto a : active_) h = (h ^ a) * kFnvPrime;
  return h;
}

// ---- MaxPool2d ------------------------------------------------------------

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& input) {
  auto res = maxpool_forward(input, cfg_);
  input_shape_ = input.shape();
  argmax_ = std::move(res.argmax);
  return std::move(res.output);
}

template <typename T>
Tensor<T> MaxPool2d<T>::infer(const Tensor<T>& input) const {
  return maxpool_forward(input, cfg_).output;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& upstream) const {
  return maxpool_backward<T>(argmax_, upstream, input_shape_);
}

template <typename T>
std::uint64_t MaxPool2d<T>::pattern_hash() const noexcept {
  std::uint64_t h = kFnvOffset;
  for (auto a : argmax_) h = mix(h, a);
  return h;
}

// ---- Dropout --------------------------------------------------------------

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& input, Mode mode) {
  if (mode == Mode::Infer || rate_ == 0.0) {
    masked_ = false;
    mask_.clear();
    return input;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  mask_.resize(input.size());
  for (auto& m : mask_) {
    // 53-bit uniform in [0,1): independent of the standard library's
    // distribution implementation.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    m = u < rate_ ? T{0} : scale;
  }
  masked_ = true;
  return apply_mask(input);
}

template <typename T>
Tensor<T> Dropout<T>::apply_mask(const Tensor<T>& input) const {
  if (!masked_) return input;
  if (input.size() != mask_.size()) throw ShapeError("dropout: input does not match stored mask");
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * mask_[i];
  return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& upstream) const {
  return apply_mask(upstream);
}

// ---- GlobalAvgPool / Affine ----------------------------------------------

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& input) {
  input_shape_ = input.shape();
  return global_avg_pool_forward(input);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& upstream) const {
  return global_avg_pool_backward(upstream, input_shape_);
}

template <typename T>
Affine<T>::Affine(std::size_t in_features, std::size_t out_features)
    : weight({in_features, out_features}),
      bias({out_features}),
      d_weight(weight.shape()),
      d_bias(bias.shape()) {}

template <typename T>
Tensor<T> Affine<T>::forward(const Tensor<T>& input) {
  input_ = input;
  return affine_forward(input, weight, bias);
}

template <typename T>
Tensor<T> Affine<T>::infer(const Tensor<T>& input) const {
  return affine_forward(input, weight, bias);
}

template <typename T>
Tensor<T> Affine<T>::backward(const Tensor<T>& upstream) {
  auto g = affine_backward(input_, weight, upstream);
  d_weight = std::move(g.d_weights);
  d_bias = std::move(g.d_bias);
  return std::move(g.d_input);
}

template <typename T>
void Affine<T>::collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &d_weight, true});
  out.push_back({prefix + ".bias", &bias, &d_bias, false});
}

// ---- Inception ------------------------------------------------------------

void InceptionSpec::validate() const {
  if (b1_out == 0 || b2_reduce == 0 || b2_out == 0 || b3_reduce == 0 || b3_out == 0 ||
      b4_out == 0)
    throw std::invalid_argument("inception branch channel counts must all be positive");
}

namespace {
ConvConfig square_conv(std::size_t out, std::size_t k) {
  return ConvConfig{out, {k, k}, {1, 1}, {k / 2, k / 2}};
}
}  // namespace

template <typename T>
Inception<T>::Inception(std::size_t in_channels, const InceptionSpec& spec)
    : spec_(spec),
      b1_(in_channels, square_conv(spec.b1_out, 1)),
      b2_reduce_(in_channels, square_conv(spec.b2_reduce, 1)),
      b2_(spec.b2_reduce, square_conv(spec.b2_out, 3)),
      b3_reduce_(in_channels, square_conv(spec.b3_reduce, 1)),
      b3_(spec.b3_reduce, square_conv(spec.b3_out, 5)),
      b4_(in_channels, square_conv(spec.b4_out, 1)),
      pool_(PoolConfig{{3, 3}, {1, 1}, {1, 1}}) {
  spec.validate();
}

template <typename T>
void Inception<T>::check_spatial(const Tensor<T>& input, const Tensor<T>& output) const {
  if (output.dim(2) != input.dim(2) || output.dim(3) != input.dim(3))
    throw ShapeError("inception: branch changed spatial extent " + to_string(input.shape()) +
                     " -> " + to_string(output.shape()));
}

template <typename T>
Tensor<T> Inception<T>::forward(const Tensor<T>& input) {
  require_rank(input, 4, "inception");
  const auto a = r1_.forward(b1_.forward(input));
  const auto b = r2b_.forward(b2_.forward(r2a_.forward(b2_reduce_.forward(input))));
  const auto c = r3b_.forward(b3_.forward(r3a_.forward(b3_reduce_.forward(input))));
  const auto d = r4_.forward(b4_.forward(pool_.forward(input)));
  for (const auto* t : {&a, &b, &c, &d}) check_spatial(input, *t);
  return channel_concat<T>({&a, &b, &c, &d});
}

template <typename T>
Tensor<T> Inception<T>::infer(const Tensor<T>& input) const {
  require_rank(input, 4, "inception");
  const auto a = r1_.infer(b1_.infer(input));
  const auto b = r2b_.infer(b2_.infer(r2a_.infer(b2_reduce_.infer(input))));
  const auto c = r3b_.infer(b3_.infer(r3a_.infer(b3_reduce_.infer(input))));
  const auto d = r4_.infer(b4_.infer(pool_.infer(input)));
  for (const auto* t : {&a, &b, &c, &d}) check_spatial(input, *t);
  return channel_concat<T>({&a, &b, &c, &d});
}

template <typename T>
Tensor<T> Inception<T>::backward(const Tensor<T>& upstream) {
  const std::size_t channels[] = {spec_.b1_out, spec_.b2_out, spec_.b3_out, spec_.b4_out};
  auto parts = channel_split<T>(upstream, channels);
  auto dx = b1_.backward(r1_.backward(parts[0]));
  const auto db = b2_reduce_.backward(r2a_.backward(b2_.backward(r2b_.backward(parts[1]))));
  const auto dc = b3_reduce_.backward(r3a_.backward(b3_.backward(r3b_.backward(parts[2]))));
  const auto dd = pool_.backward(b4_.backward(r4_.backward(parts[3])));
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = ((dx[i] + db[i]) + dc[i]) + dd[i];
  return dx;
}

template <typename T>
void Inception<T>::collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
  b1_.collect(out, prefix + ".b1");
  b2_reduce_.collect(out, prefix + ".b2_reduce");
  b2_.collect(out, prefix + ".b2");
  b3_reduce_.collect(out, prefix + ".b3_reduce");
  b3_.collect(out, prefix + ".b3");
  b4_.collect(out, prefix + ".b4");
}

template <typename T>
std::vector<Conv2d<T>*> Inception<T>::convs() {
  return {&b1_, &b2_reduce_, &b2_, &b3_reduce_, &b3_, &b4_};
}

template <typename T>
std::uint64_t Inception<T>::pattern_hash() const noexcept {
  std::uint64_t h = kFnvOffset;
  for (const auto* r : {&r1_, &r2a_, &r2b_, &r3a_, &r3b_, &r4_}) h = mix(h, r->pattern_hash());
  return mix(h, pool_.pattern_hash());
}

// ---- Loss -----------------------------------------------------------------

template <typename T>
T sigmoid(T logit) noexcept {
  if (logit >= T{0}) return T{1} / (T{1} + std::exp(-logit));
  const T e = std::exp(logit);
  return e / (T{1} + e);
}

template <typename T>
BceResult<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels) {
  if (logits.size() != labels.size())
    throw ShapeError("bce_with_logits: " + std::to_string(logits.size()) + " logits but " +
                     std::to_string(labels.size()) + " labels");
  if (logits.empty()) throw ShapeError("bce_with_logits: empty batch");
  const T inv_n = T{1} / static_cast<T>(labels.size());
  BceResult<T> res{T{0}, Tensor<T>(logits.shape())};
  T total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T y = labels[i];
    if (y != T{0} && y != T{1})
      throw std::invalid_argument("bce_with_logits: label must be 0 or 1");
    const T z = logits[i];
    total += std::log1p(std::exp(-std::abs(z))) + std::max(z, T{0}) - z * y;
    res.d_logits[i] = (sigmoid(z) - y) * inv_n;
  }
  res.loss = total * inv_n;
  return res;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2d<float>;
template class MaxPool2d<double>;
template class Dropout<float>;
template class Dropout<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Affine<float>;
template class Affine<double>;
template class Inception<float>;
template class Inception<double>;
template float sigmoid(float) noexcept;
template double sigmoid(double) noexcept;
template BceResult<float> bce_with_logits(const Tensor<float>&, std::span<const float>);
template BceResult<double> bce_with_logits(const Tensor<double>&, std::span<const double>);

}  // namespace spoof
