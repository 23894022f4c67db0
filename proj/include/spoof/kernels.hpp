#pragma once

// Dense primitives with exact backward passes.
//
// The functions in namespace spoof are the OpenMP kernels used for training
// and inference. Namespace spoof::reference holds straightforward serial
// loop nests with the same contracts; they exist for testing and
// benchmarking and are never called on the hot path.
//
// Every reduction runs in a fixed order, so results do not depend on the
// number of threads.

#include <cstddef>
#include <span>
#include <vector>

#include "spoof/tensor.hpp"

namespace spoof {

struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct ConvConfig {
  std::size_t out_channels = 1;
  Extent2 kernel{3, 3};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  friend bool operator==(const ConvConfig&, const ConvConfig&) = default;
};

struct PoolConfig {
  Extent2 window{2, 2};
  Extent2 stride{2, 2};
  Extent2 padding{0, 0};
  friend bool operator==(const PoolConfig&, const PoolConfig&) = default;
};

/// (in + 2*pad - window) / stride + 1, throwing ShapeError unless the
/// division is exact and the result positive.
std::size_t window_out_extent(std::size_t in, std::size_t window, std::size_t stride,
                              std::size_t pad, const char* op);

template <typename T>
struct ConvGrads {
  Tensor<T> d_input;
  Tensor<T> d_kernels;
  Tensor<T> d_bias;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat index into the input tensor for every output cell.
  std::vector<std::size_t> argmax;
};

template <typename T>
struct AffineGrads {
  Tensor<T> d_input;
  Tensor<T> d_weights;
  Tensor<T> d_bias;
};

/// input [N,C,H,W], kernels [K,C,kh,kw], bias [K] -> [N,K,H',W'].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         const ConvConfig& cfg);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const ConvConfig& cfg, const Tensor<T>& upstream);

/// Ties resolve to the first maximum in row-major window order. Padding
/// cells never win.
template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolConfig& cfg);

template <typename T>
Tensor<T> maxpool_backward(std::span<const std::size_t> argmax, const Tensor<T>& upstream,
                           const Shape& input_shape);

/// input [N,D], weights [D,M], bias [M] -> [N,M].
template <typename T>
Tensor<T> affine_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& upstream);

/// Stacks [N,Ci,H,W] inputs along the channel axis in argument order.
template <typename T>
Tensor<T> channel_concat(const std::vector<const Tensor<T>*>& inputs);

/// Inverse of channel_concat: splits [N,sum(Ci),H,W] by channel counts.
template <typename T>
std::vector<Tensor<T>> channel_split(const Tensor<T>& joined,
                                     std::span<const std::size_t> channels);

/// [N,C,H,W] -> [N,C] mean over the spatial extent.
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& upstream, const Shape& input_shape);

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         const ConvConfig& cfg);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const ConvConfig& cfg, const Tensor<T>& upstream);

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolConfig& cfg);

template <typename T>
Tensor<T> maxpool_backward(std::span<const std::size_t> argmax, const Tensor<T>& upstream,
                           const Shape& input_shape);

template <typename T>
Tensor<T> affine_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& upstream);

}  // namespace reference

}  // namespace spoof
