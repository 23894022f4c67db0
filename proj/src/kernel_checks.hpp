#pragma once

#include <string>

#include "spoof/kernels.hpp"

namespace spoof::detail {

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t k, kh, kw;
  std::size_t ho, wo;
};

inline ConvGeometry conv_geometry(const Shape& input, const Shape& kernels,
                                  const ConvConfig& cfg, const char* op) {
  if (input.size() != 4) throw ShapeError(std::string(op) + ": input must be rank 4");
  if (kernels.size() != 4) throw ShapeError(std::string(op) + ": kernels must be rank 4");
  if (cfg.stride.h == 0 || cfg.stride.w == 0 || cfg.kernel.h == 0 || cfg.kernel.w == 0)
    throw ShapeError(std::string(op) + ": kernel and stride extents must be >= 1");
  if (kernels[1] != input[1])
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input[1]) +
                     " channels, kernels expect " + std::to_string(kernels[1]));
  if (kernels[2] != cfg.kernel.h || kernels[3] != cfg.kernel.w)
    throw ShapeError(std::string(op) + ": kernel tensor " + to_string(kernels) +
                     " disagrees with configured window");
  ConvGeometry g{input[0], input[1], input[2], input[3], kernels[0], kernels[2], kernels[3], 0, 0};
  g.ho = window_out_extent(g.h, g.kh, cfg.stride.h, cfg.padding.h, op);
  g.wo = window_out_extent(g.w, g.kw, cfg.stride.w, cfg.padding.w, op);
  return g;
}

struct PoolGeometry {
  std::size_t n, c, h, w;
  std::size_t ho, wo;
};

inline PoolGeometry pool_geometry(const Shape& input, const PoolConfig& cfg, const char* op) {
  if (input.size() != 4) throw ShapeError(std::string(op) + ": input must be rank 4");
  if (cfg.stride.h == 0 || cfg.stride.w == 0 || cfg.window.h == 0 || cfg.window.w == 0)
    throw ShapeError(std::string(op) + ": window and stride extents must be >= 1");
  if (cfg.padding.h >= cfg.window.h || cfg.padding.w >= cfg.window.w)
    throw ShapeError(std::string(op) + ": padding must be smaller than the window");
  PoolGeometry g{input[0], input[1], input[2], input[3], 0, 0};
  g.ho = window_out_extent(g.h, cfg.window.h, cfg.stride.h, cfg.padding.h, op);
  g.wo = window_out_extent(g.w, cfg.window.w, cfg.stride.w, cfg.padding.w, op);
  return g;
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t expected, const char* op) {
  if (bias.rank() != 1 || bias.dim(0) != expected)
    throw ShapeError(std::string(op) + ": bias must have shape [" + std::to_string(expected) +
                     "], got " + to_string(bias.shape()));
}

struct AffineGeometry {
  std::size_t n, d, m;
};

inline AffineGeometry affine_geometry(const Shape& input, const Shape& weights, const char* op) {
  if (input.size() != 2 || weights.size() != 2)
    throw ShapeError(std::string(op) + ": input and weights must be rank 2");
  if (input[1] != weights[0])
    throw ShapeError(std::string(op) + ": input " + to_string(input) +
                     " incompatible with weights " + to_string(weights));
  return {input[0], input[1], weights[1]};
}

}  // namespace spoof::detail
