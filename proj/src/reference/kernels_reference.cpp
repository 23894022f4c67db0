// Serial loop-nest versions of the primitives, written directly from their
// defining sums. Used as the comparison baseline in tests and benchmarks.

#include <cstddef>
#include <stdexcept>

#include "../kernel_checks.hpp"
#include "spoof/kernels.hpp"

namespace spoof::reference {

using std::ptrdiff_t;
using std::size_t;

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         const ConvConfig& cfg) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), cfg, "conv2d_forward");
  detail::check_bias(bias, g.k, "conv2d_forward");
  Tensor<T> out({g.n, g.k, g.ho, g.wo});
  for (size_t n = 0; n < g.n; ++n)
    for (size_t k = 0; k < g.k; ++k)
      for (size_t y = 0; y < g.ho; ++y)
        for (size_t x = 0; x < g.wo; ++x) {
          T acc = bias[k];
          for (size_t c = 0; c < g.c; ++c)
            for (size_t i = 0; i < g.kh; ++i)
              for (size_t j = 0; j < g.kw; ++j) {
                const ptrdiff_t iy = static_cast<ptrdiff_t>(y * cfg.stride.h + i) -
                                     static_cast<ptrdiff_t>(cfg.padding.h);
                const ptrdiff_t ix = static_cast<ptrdiff_t>(x * cfg.stride.w + j) -
                                     static_cast<ptrdiff_t>(cfg.padding.w);
                if (iy < 0 || ix < 0 || iy >= static_cast<ptrdiff_t>(g.h) ||
                    ix >= static_cast<ptrdiff_t>(g.w))
                  continue;
                acc += input.at(n, c, iy, ix) * kernels.at(k, c, i, j);
              }
          out.at(n, k, y, x) = acc;
        }
  require_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const ConvConfig& cfg, const Tensor<T>& upstream) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), cfg, "conv2d_backward");
  if (upstream.shape() != Shape{g.n, g.k, g.ho, g.wo})
    throw ShapeError("conv2d_backward: upstream gradient shape mismatch");
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), Tensor<T>({g.k})};
  const auto sh = static_cast<ptrdiff_t>(cfg.stride.h), sw = static_cast<ptrdiff_t>(cfg.stride.w);
  const auto ph = static_cast<ptrdiff_t>(cfg.padding.h), pw = static_cast<ptrdiff_t>(cfg.padding.w);

  for (size_t k = 0; k < g.k; ++k) {
    T acc = 0;
    for (size_t n = 0; n < g.n; ++n)
      for (size_t y = 0; y < g.ho; ++y)
        for (size_t x = 0; x < g.wo; ++x) acc += upstream.at(n, k, y, x);
    grads.d_bias[k] = acc;
  }

  for (size_t k = 0; k < g.k; ++k)
    for (size_t c = 0; c < g.c; ++c)
      for (size_t i = 0; i < g.kh; ++i)
        for (size_t j = 0; j < g.kw; ++j) {
          T acc = 0;
          for (size_t n = 0; n < g.n; ++n)
            for (size_t y = 0; y < g.ho; ++y)
              for (size_t x = 0; x < g.wo; ++x) {
                const ptrdiff_t iy = static_cast<ptrdiff_t>(y) * sh + i - ph;
                const ptrdiff_t ix = static_cast<ptrdiff_t>(x) * sw + j - pw;
                if (iy < 0 || ix < 0 || iy >= static_cast<ptrdiff_t>(g.h) ||
                    ix >= static_cast<ptrdiff_t>(g.w))
                  continue;
                acc += upstream.at(n, k, y, x) * input.at(n, c, iy, ix);
              }
          grads.d_kernels.at(k, c, i, j) = acc;
        }

  // Gather form: each input cell collects from the outputs whose window
  // covers it.
  for (size_t n = 0; n < g.n; ++n)
    for (size_t c = 0; c < g.c; ++c)
      for (size_t h = 0; h < g.h; ++h)
        for (size_t w = 0; w < g.w; ++w) {
          T acc = 0;
          for (size_t k = 0; k < g.k; ++k)
            for (size_t i = 0; i < g.kh; ++i)
              for (size_t j = 0; j < g.kw; ++j) {
                const ptrdiff_t ty = static_cast<ptrdiff_t>(h) + ph - static_cast<ptrdiff_t>(i);
                const ptrdiff_t tx = static_cast<ptrdiff_t>(w) + pw - static_cast<ptrdiff_t>(j);
                if (ty < 0 || tx < 0 || ty % sh != 0 || tx % sw != 0) continue;
                const ptrdiff_t y = ty / sh, x = tx / sw;
                if (y >= static_cast<ptrdiff_t>(g.ho) || x >= static_cast<ptrdiff_t>(g.wo)) continue;
                acc += upstream.at(n, k, y, x) * kernels.at(k, c, i, j);
              }
          grads.d_input.at(n, c, h, w) = acc;
        }
  return grads;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolConfig& cfg) {
  const auto g = detail::pool_geometry(input.shape(), cfg, "maxpool_forward");
  PoolResult<T> res{Tensor<T>({g.n, g.c, g.ho, g.wo}), {}};
  res.argmax.reserve(res.output.size());
  for (size_t n = 0; n < g.n; ++n)
    for (size_t c = 0; c < g.c; ++c)
      for (size_t y = 0; y < g.ho; ++y)
        for (size_t x = 0; x < g.wo; ++x) {
          bool found = false;
          T best{};
          size_t best_idx = 0;
          for (size_t i = 0; i < cfg.window.h; ++i)
            for (size_t j = 0; j < cfg.window.w; ++j) {
              const ptrdiff_t iy = static_cast<ptrdiff_t>(y * cfg.stride.h + i) -
                                   static_cast<ptrdiff_t>(cfg.padding.h);
              const ptrdiff_t ix = static_cast<ptrdiff_t>(x * cfg.stride.w + j) -
                                   static_cast<ptrdiff_t>(cfg.padding.w);
              if (iy < 0 || ix < 0 || iy >= static_cast<ptrdiff_t>(g.h) ||
                  ix >= static_cast<ptrdiff_t>(g.w))
                continue;
              const T v = input.at(n, c, iy, ix);
              if (!found || v > best) {
                found = true;
                best = v;
                best_idx = ((n * g.c + c) * g.h + iy) * g.w + ix;
              }
            }
          res.output.at(n, c, y, x) = best;
          res.argmax.push_back(best_idx);
        }
  return res;
}

template <typename T>
Tensor<T> maxpool_backward(std::span<const size_t> argmax, const Tensor<T>& upstream,
                           const Shape& input_shape) {
  if (argmax.size() != upstream.size())
    throw ShapeError("maxpool_backward: argmax length does not match upstream gradient");
  Tensor<T> d_input(input_shape);
  for (size_t q = 0; q < argmax.size(); ++q) {
    if (argmax[q] >= d_input.size())
      throw std::out_of_range("maxpool_backward: argmax index out of range");
    d_input[argmax[q]] += upstream[q];
  }
  return d_input;
}

template <typename T>
Tensor<T> affine_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const auto g = detail::affine_geometry(input.shape(), weights.shape(), "affine_forward");
  detail::check_bias(bias, g.m, "affine_forward");
  Tensor<T> out({g.n, g.m});
  for (size_t n = 0; n < g.n; ++n)
    for (size_t m = 0; m < g.m; ++m) {
      T acc = bias[m];
      for (size_t d = 0; d < g.d; ++d) acc += input[n * g.d + d] * weights[d * g.m + m];
      out[n * g.m + m] = acc;
    }
  return out;
}

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& upstream) {
  const auto g = detail::affine_geometry(input.shape(), weights.shape(), "affine_backward");
  if (upstream.shape() != Shape{g.n, g.m})
    throw ShapeError("affine_backward: upstream shape mismatch");
  AffineGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({g.m})};
  for (size_t n = 0; n < g.n; ++n)
    for (size_t m = 0; m < g.m; ++m) {
      const T up = upstream[n * g.m + m];
      grads.d_bias[m] += up;
      for (size_t d = 0; d < g.d; ++d) {
        grads.d_weights[d * g.m + m] += input[n * g.d + d] * up;
        grads.d_input[n * g.d + d] += weights[d * g.m + m] * up;
      }
    }
  return grads;
}

#define SPOOF_INSTANTIATE_REFERENCE(T)                                                         \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                    const ConvConfig&);                                        \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvConfig&, \
                                        const Tensor<T>&);                                     \
  template PoolResult<T> maxpool_forward(const Tensor<T>&, const PoolConfig&);                 \
  template Tensor<T> maxpool_backward(std::span<const size_t>, const Tensor<T>&, const Shape&); \
  template Tensor<T> affine_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template AffineGrads<T> affine_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

SPOOF_INSTANTIATE_REFERENCE(float)
SPOOF_INSTANTIATE_REFERENCE(double)

}  // namespace spoof::reference
