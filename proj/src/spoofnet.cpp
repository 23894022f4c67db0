#include "spoof/spoofnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "spoof/fsutil.hpp"

namespace spoof {

std::vector<Shape> NetworkSpec::shape_walk() const {
  if (input_size == 0 || input_channels == 0)
    throw ShapeError("network spec: input extent must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("network spec: dropout must lie in [0, 1)");
  if (!std::isfinite(input_mean) || !(input_scale > 0) || !std::isfinite(input_scale))
    throw std::invalid_argument("network spec: input_mean must be finite and input_scale positive");
  inception.validate();
  std::vector<Shape> walk;
  std::size_t c = input_channels, s = input_size;
  walk.push_back({1, c, s, s});
  for (const auto& conv : conv_stack) {
    if (conv.out_channels == 0) throw ShapeError("network spec: conv with zero output channels");
    if (conv.kernel.h != conv.kernel.w || conv.stride.h != conv.stride.w ||
        conv.padding.h != conv.padding.w)
      throw ShapeError("network spec: conv layers must be square");
    s = window_out_extent(s, conv.kernel.h, conv.stride.h, conv.padding.h, "network spec conv");
    c = conv.out_channels;
    walk.push_back({1, c, s, s});
    s = window_out_extent(s, pool.window.h, pool.stride.h, pool.padding.h, "network spec pool");
    walk.push_back({1, c, s, s});
  }
  c = inception.out_channels();
  walk.push_back({1, c, s, s});
  walk.push_back({1, c});
  walk.push_back({1, 1});
  return walk;
}

template <typename T>
SpoofNet<T>::SpoofNet(const NetworkSpec& spec, std::uint64_t dropout_seed)
    : spec_(spec), dropout_(spec.dropout, dropout_seed) {
  spec_.validate();
  std::size_t c = spec.input_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    convs_[i] = Conv2d<T>(c, spec.conv_stack[i]);
    pools_[i] = MaxPool2d<T>(spec.pool);
    c = spec.conv_stack[i].out_channels;
  }
  inception_ = Inception<T>(c, spec.inception);
  head_ = Affine<T>(spec.inception.out_channels(), 1);
}

template <typename T>
Tensor<T> SpoofNet<T>::prepare_input(const Tensor<T>& batch) const {
  require_rank(batch, 4, "spoofnet");
  if (batch.dim(1) != spec_.input_channels || batch.dim(2) != spec_.input_size ||
      batch.dim(3) != spec_.input_size)
    throw ShapeError("spoofnet: expected [N," + std::to_string(spec_.input_channels) + "," +
                     std::to_string(spec_.input_size) + "," + std::to_string(spec_.input_size) +
                     "] input, got " + to_string(batch.shape()));
  if (spec_.input_mean == 0.0 && spec_.input_scale == 1.0) return batch;
  Tensor<T> x = batch;
  for (auto& v : x.data())
    v = static_cast<T>((static_cast<double>(v) - spec_.input_mean) * spec_.input_scale);
  return x;
}

template <typename T>
Tensor<T> SpoofNet<T>::forward(const Tensor<T>& batch, Mode mode) {
  Tensor<T> x = prepare_input(batch);
  for (std::size_t i = 0; i < 4; ++i) x = pools_[i].forward(relus_[i].forward(convs_[i].forward(x)));
  x = inception_.forward(x);
  x = dropout_.forward(gap_.forward(x), mode);
  x = head_.forward(x);
  return x.reshaped({batch.dim(0)});
}

template <typename T>
Tensor<T> SpoofNet<T>::infer(const Tensor<T>& batch) const {
  Tensor<T> x = prepare_input(batch);
  for (std::size_t i = 0; i < 4; ++i) x = pools_[i].infer(relus_[i].infer(convs_[i].infer(x)));
  x = head_.infer(gap_.infer(inception_.infer(x)));
  return x.reshaped({batch.dim(0)});
}

template <typename T>
void SpoofNet<T>::backward(const Tensor<T>& d_logits) {
  Tensor<T> g = d_logits.reshaped({d_logits.size(), 1});
  g = gap_.backward(dropout_.backward(head_.backward(g)));
  g = inception_.backward(g);
  for (std::size_t i = 4; i-- > 0;) g = convs_[i].backward(relus_[i].backward(pools_[i].backward(g)));
}

template <typename T>
std::vector<ParamRef<T>> SpoofNet<T>::params() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < 4; ++i) convs_[i].collect(out, "conv" + std::to_string(i + 1));
  inception_.collect(out, "inception");
  head_.collect(out, "head");
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> SpoofNet<T>::param_values() const {
  std::vector<const Tensor<T>*> out;
  for (auto& p : const_cast<SpoofNet*>(this)->params()) out.push_back(p.value);
  return out;
}

template <typename T>
std::size_t SpoofNet<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* t : param_values()) n += t->size();
  return n;
}

template <typename T>
std::uint64_t SpoofNet<T>::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* t : param_values()) {
    const auto bytes = std::as_bytes(t->data());
    h = fnv1a64({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()}, h);
  }
  return h;
}

template <typename T>
std::uint64_t SpoofNet<T>::pattern_hash() const {
  std::uint64_t h = inception_.pattern_hash();
  for (std::size_t i = 0; i < 4; ++i) h = h * 1099511628211ULL ^ relus_[i].pattern_hash();
  for (std::size_t i = 0; i < 4; ++i) h = h * 1099511628211ULL ^ pools_[i].pattern_hash();
  return h;
}

template <typename T>
SpoofNet<T> build_spoofnet(const NetworkSpec& spec, std::uint64_t init_seed) {
  SpoofNet<T> net(spec, init_seed ^ 0xD1B54A32D192ED03ULL);
  std::mt19937_64 rng(init_seed);
  for (auto& p : net.params()) {
    if (!p.decay) {
      p.value->fill(T{0});
      continue;
    }
    // conv weights [K,C,kh,kw] and affine weights [D,M]: fan_in is every
    // axis but the first for conv, the first for affine.
    const Shape& s = p.value->shape();
    const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& w : p.value->data()) w = static_cast<T>(dist(rng));
  }
  return net;
}

// ---- cascade --------------------------------------------------------------

void CascadeModel::validate() const {
  if (!(gate > 0.0 && gate < 1.0)) throw std::invalid_argument("cascade gate must lie in (0, 1)");
  net1.spec().validate();
  net2.spec().validate();
}

LivenessScore combine_stages(double p1, double gate, const std::function<double()>& stage2) {
  LivenessScore s;
  s.p1 = p1;
  if (p1 < gate) {
    s.value = 100.0 * p1;
  } else {
    s.p2 = stage2();
    s.stage2_ran = true;
    s.value = 100.0 * p1 * *s.p2;
  }
  s.value = std::clamp(s.value, 0.0, 100.0);
  return s;
}

LivenessScore cascade_score(const CascadeModel& model, const Tensor<float>& full_image,
                            const std::optional<BBox>& iris_bbox, CascadeCounters* counters) {
  if (full_image.rank() != 4 || full_image.dim(0) != 1 || full_image.dim(1) != 1)
    throw ShapeError("cascade_score: expected a [1,1,H,W] grayscale image, got " +
                     to_string(full_image.shape()));
  if (iris_bbox && !iris_bbox->fits(full_image.dim(3), full_image.dim(2)))
    throw DataError("cascade_score: iris bbox outside the image");

  const auto s1 = model.net1.spec().input_size;
  const auto logit1 = model.net1.infer(crop_resize(full_image, std::nullopt, s1));
  if (counters) ++counters->stage1;
  const double p1 = sigmoid(static_cast<double>(logit1[0]));

  return combine_stages(p1, model.gate, [&] {
    if (counters) ++counters->stage2;
    const auto s2 = model.net2.spec().input_size;
    const auto logit2 = model.net2.infer(crop_resize(full_image, iris_bbox, s2));
    return sigmoid(static_cast<double>(logit2[0]));
  });
}

Decision classify(double score, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 100.0))
    throw std::invalid_argument("threshold must lie in [0, 100]");
  return score >= threshold ? Decision::Bonafide : Decision::Attack;
}

template class SpoofNet<float>;
template class SpoofNet<double>;
template SpoofNet<float> build_spoofnet<float>(const NetworkSpec&, std::uint64_t);
template SpoofNet<double> build_spoofnet<double>(const NetworkSpec&, std::uint64_t);

}  // namespace spoof
