#include "spoof/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>

#include "kernel_checks.hpp"

namespace spoof {

using std::ptrdiff_t;
using std::size_t;

size_t window_out_extent(size_t in, size_t window, size_t stride, size_t pad, const char* op) {
  const size_t padded = in + 2 * pad;
  if (stride == 0 || padded < window)
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) +
                     " does not fit extent " + std::to_string(in) + " with padding " +
                     std::to_string(pad));
  if ((padded - window) % stride != 0)
    throw ShapeError(std::string(op) + ": (" + std::to_string(in) + " + 2*" +
                     std::to_string(pad) + " - " + std::to_string(window) +
                     ") is not divisible by stride " + std::to_string(stride));
  return (padded - window) / stride + 1;
}

namespace {

// Output columns x in [lo, hi) whose source column x*stride + offset lies in
// [0, width).
struct ColumnRange {
  ptrdiff_t lo, hi;
};

ColumnRange valid_columns(ptrdiff_t offset, ptrdiff_t stride, ptrdiff_t width, ptrdiff_t out) {
  ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  ptrdiff_t hi = 0;
  if (width - 1 - offset >= 0) hi = (width - 1 - offset) / stride + 1;
  hi = std::min(hi, out);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         const ConvConfig& cfg) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), cfg, "conv2d_forward");
  detail::check_bias(bias, g.k, "conv2d_forward");
  Tensor<T> out({g.n, g.k, g.ho, g.wo});

  const ptrdiff_t H = g.h, W = g.w, Ho = g.ho, Wo = g.wo;
  const ptrdiff_t sh = cfg.stride.h, sw = cfg.stride.w;
  const ptrdiff_t ph = cfg.padding.h, pw = cfg.padding.w;
  const ptrdiff_t N = g.n, K = g.k;
  const T* in = input.raw();
  const T* ker = kernels.raw();
  const T* b = bias.raw();
  T* o = out.raw();

#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t n = 0; n < N; ++n) {
    for (ptrdiff_t k = 0; k < K; ++k) {
      T* plane = o + (n * K + k) * Ho * Wo;
      std::fill(plane, plane + Ho * Wo, b[k]);
      for (size_t c = 0; c < g.c; ++c) {
        const T* src = in + (n * g.c + c) * H * W;
        const T* kp = ker + (k * g.c + c) * g.kh * g.kw;
        for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(g.kh); ++i) {
          for (ptrdiff_t j = 0; j < static_cast<ptrdiff_t>(g.kw); ++j) {
            const T w = kp[i * g.kw + j];
            const auto cols = valid_columns(j - pw, sw, W, Wo);
            for (ptrdiff_t y = 0; y < Ho; ++y) {
              const ptrdiff_t iy = y * sh + i - ph;
              if (iy < 0 || iy >= H) continue;
              const T* row = src + iy * W;
              const ptrdiff_t off = j - pw;
              T* orow = plane + y * Wo;
              if (sw == 1) {
                for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) orow[x] += w * row[x + off];
              } else {
                for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) orow[x] += w * row[x * sw + off];
              }
            }
          }
        }
      }
    }
  }
  require_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const ConvConfig& cfg, const Tensor<T>& upstream) {
  const auto g = detail::conv_geometry(input.shape(), kernels.shape(), cfg, "conv2d_backward");
  if (upstream.shape() != Shape{g.n, g.k, g.ho, g.wo})
    throw ShapeError("conv2d_backward: upstream gradient " + to_string(upstream.shape()) +
                     " does not match forward output " + to_string({g.n, g.k, g.ho, g.wo}));

  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), Tensor<T>({g.k})};
  const ptrdiff_t H = g.h, W = g.w, Ho = g.ho, Wo = g.wo;
  const ptrdiff_t sh = cfg.stride.h, sw = cfg.stride.w;
  const ptrdiff_t ph = cfg.padding.h, pw = cfg.padding.w;
  const ptrdiff_t N = g.n, K = g.k, C = g.c;
  const ptrdiff_t KH = g.kh, KW = g.kw;
  const T* in = input.raw();
  const T* ker = kernels.raw();
  const T* up = upstream.raw();

  T* db = grads.d_bias.raw();
  for (ptrdiff_t k = 0; k < K; ++k) {
    T acc = 0;
    for (ptrdiff_t n = 0; n < N; ++n) {
      const T* gp = up + (n * K + k) * Ho * Wo;
      for (ptrdiff_t q = 0; q < Ho * Wo; ++q) acc += gp[q];
    }
    db[k] = acc;
  }

  // Kernel gradient: per-column partial sums keep the inner loop
  // vectorizable while the final reduction order stays fixed.
  T* dk = grads.d_kernels.raw();
#pragma omp parallel
  {
    std::vector<T> partial(static_cast<size_t>(Wo));
#pragma omp for collapse(2) schedule(static)
    for (ptrdiff_t k = 0; k < K; ++k) {
      for (ptrdiff_t c = 0; c < C; ++c) {
        for (ptrdiff_t i = 0; i < KH; ++i) {
          for (ptrdiff_t j = 0; j < KW; ++j) {
            std::fill(partial.begin(), partial.end(), T{0});
            T* acc = partial.data();
            const auto cols = valid_columns(j - pw, sw, W, Wo);
            for (ptrdiff_t n = 0; n < N; ++n) {
              const T* src = in + (n * C + c) * H * W;
              const T* gp = up + (n * K + k) * Ho * Wo;
              for (ptrdiff_t y = 0; y < Ho; ++y) {
                const ptrdiff_t iy = y * sh + i - ph;
                if (iy < 0 || iy >= H) continue;
                const T* row = src + iy * W;
                const ptrdiff_t off = j - pw;
                const T* grow = gp + y * Wo;
                if (sw == 1) {
                  for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) acc[x] += grow[x] * row[x + off];
                } else {
                  for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) acc[x] += grow[x] * row[x * sw + off];
                }
              }
            }
            T sum = 0;
            for (ptrdiff_t x = 0; x < Wo; ++x) sum += acc[x];
            dk[((k * C + c) * KH + i) * KW + j] = sum;
          }
        }
      }
    }
  }

  T* di = grads.d_input.raw();
#pragma omp parallel for collapse(2) schedule(static)
  for (ptrdiff_t n = 0; n < N; ++n) {
    for (ptrdiff_t c = 0; c < C; ++c) {
      T* dst = di + (n * C + c) * H * W;
      for (ptrdiff_t k = 0; k < K; ++k) {
        const T* kp = ker + (k * C + c) * KH * KW;
        const T* gp = up + (n * K + k) * Ho * Wo;
        for (ptrdiff_t i = 0; i < KH; ++i) {
          for (ptrdiff_t j = 0; j < KW; ++j) {
            const T w = kp[i * KW + j];
            const auto cols = valid_columns(j - pw, sw, W, Wo);
            for (ptrdiff_t y = 0; y < Ho; ++y) {
              const ptrdiff_t iy = y * sh + i - ph;
              if (iy < 0 || iy >= H) continue;
              T* row = dst + iy * W;
              const ptrdiff_t off = j - pw;
              const T* grow = gp + y * Wo;
              if (sw == 1) {
                for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) row[x + off] += w * grow[x];
              } else {
                for (ptrdiff_t x = cols.lo; x < cols.hi; ++x) row[x * sw + off] += w * grow[x];
              }
            }
          }
        }
      }
    }
  }

  require_finite(grads.d_input, "conv2d_backward");
  require_finite(grads.d_kernels, "conv2d_backward");
  require_finite(grads.d_bias, "conv2d_backward");
  return grads;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolConfig& cfg) {
  const auto g = detail::pool_geometry(input.shape(), cfg, "maxpool_forward");
  PoolResult<T> res{Tensor<T>({g.n, g.c, g.ho, g.wo}), std::vector<size_t>(g.n * g.c * g.ho * g.wo)};
  const ptrdiff_t H = g.h, W = g.w, Ho = g.ho, Wo = g.wo;
  const ptrdiff_t planes = g.n * g.c;
  const ptrdiff_t wh = cfg.window.h, ww = cfg.window.w;
  const ptrdiff_t sh = cfg.stride.h, sw = cfg.stride.w;
  const ptrdiff_t ph = cfg.padding.h, pw = cfg.padding.w;
  const T* in = input.raw();
  T* out = res.output.raw();
  size_t* arg = res.argmax.data();

#pragma omp parallel for schedule(static)
  for (ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = in + p * H * W;
    for (ptrdiff_t y = 0; y < Ho; ++y) {
      const ptrdiff_t y0 = std::max<ptrdiff_t>(y * sh - ph, 0);
      const ptrdiff_t y1 = std::min<ptrdiff_t>(y * sh - ph + wh, H);
      for (ptrdiff_t x = 0; x < Wo; ++x) {
        const ptrdiff_t x0 = std::max<ptrdiff_t>(x * sw - pw, 0);
        const ptrdiff_t x1 = std::min<ptrdiff_t>(x * sw - pw + ww, W);
        ptrdiff_t best = y0 * W + x0;
        T best_v = src[best];
        for (ptrdiff_t iy = y0; iy < y1; ++iy) {
          for (ptrdiff_t ix = x0; ix < x1; ++ix) {
            const T v = src[iy * W + ix];
            if (v > best_v) {
              best_v = v;
              best = iy * W + ix;
            }
          }
        }
        const ptrdiff_t q = p * Ho * Wo + y * Wo + x;
        out[q] = best_v;
        arg[q] = static_cast<size_t>(p * H * W + best);
      }
    }
  }
  return res;
}

template <typename T>
Tensor<T> maxpool_backward(std::span<const size_t> argmax, const Tensor<T>& upstream,
                           const Shape& input_shape) {
  if (input_shape.size() != 4 || upstream.rank() != 4 || upstream.dim(0) != input_shape[0] ||
      upstream.dim(1) != input_shape[1])
    throw ShapeError("maxpool_backward: upstream " + to_string(upstream.shape()) +
                     " incompatible with input " + to_string(input_shape));
  if (argmax.size() != upstream.size())
    throw ShapeError("maxpool_backward: argmax length does not match upstream gradient");
  Tensor<T> d_input(input_shape);
  const ptrdiff_t planes = input_shape[0] * input_shape[1];
  const size_t in_plane = input_shape[2] * input_shape[3];
  const size_t out_plane = upstream.dim(2) * upstream.dim(3);
  const T* up = upstream.raw();
  T* di = d_input.raw();
  bool bad_index = false;

#pragma omp parallel for schedule(static) reduction(|| : bad_index)
  for (ptrdiff_t p = 0; p < planes; ++p) {
    const size_t lo = p * in_plane, hi = lo + in_plane;
    for (size_t q = p * out_plane; q < (p + 1) * out_plane; ++q) {
      const size_t idx = argmax[q];
      if (idx < lo || idx >= hi) {
        bad_index = true;
        continue;
      }
      di[idx] += up[q];
    }
  }
  if (bad_index) throw std::out_of_range("maxpool_backward: argmax index outside its input plane");
  return d_input;
}

template <typename T>
Tensor<T> affine_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const auto g = detail::affine_geometry(input.shape(), weights.shape(), "affine_forward");
  detail::check_bias(bias, g.m, "affine_forward");
  Tensor<T> out({g.n, g.m});
  const ptrdiff_t N = g.n;
  const T* in = input.raw();
  const T* w = weights.raw();
  T* o = out.raw();
#pragma omp parallel for schedule(static)
  for (ptrdiff_t n = 0; n < N; ++n) {
    T* row = o + n * g.m;
    for (size_t m = 0; m < g.m; ++m) row[m] = bias[m];
    for (size_t d = 0; d < g.d; ++d) {
      const T v = in[n * g.d + d];
      const T* wr = w + d * g.m;
      for (size_t m = 0; m < g.m; ++m) row[m] += v * wr[m];
    }
  }
  require_finite(out, "affine_forward");
  return out;
}

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& upstream) {
  const auto g = detail::affine_geometry(input.shape(), weights.shape(), "affine_backward");
  if (upstream.shape() != Shape{g.n, g.m})
    throw ShapeError("affine_backward: upstream " + to_string(upstream.shape()) +
                     " does not match output [" + std::to_string(g.n) + "x" +
                     std::to_string(g.m) + "]");
  AffineGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({g.m})};
  const ptrdiff_t N = g.n, D = g.d;
  const T* in = input.raw();
  const T* w = weights.raw();
  const T* up = upstream.raw();

  for (size_t m = 0; m < g.m; ++m) {
    T acc = 0;
    for (size_t n = 0; n < g.n; ++n) acc += up[n * g.m + m];
    grads.d_bias[m] = acc;
  }
  T* dw = grads.d_weights.raw();
#pragma omp parallel for schedule(static)
  for (ptrdiff_t d = 0; d < D; ++d) {
    for (size_t m = 0; m < g.m; ++m) {
      T acc = 0;
      for (size_t n = 0; n < g.n; ++n) acc += in[n * g.d + d] * up[n * g.m + m];
      dw[d * g.m + m] = acc;
    }
  }
  T* di = grads.d_input.raw();
#pragma omp parallel for schedule(static)
  for (ptrdiff_t n = 0; n < N; ++n) {
    for (size_t d = 0; d < g.d; ++d) {
      T acc = 0;
      for (size_t m = 0; m < g.m; ++m) acc += up[n * g.m + m] * w[d * g.m + m];
      di[n * g.d + d] = acc;
    }
  }
  return grads;
}

template <typename T>
Tensor<T> channel_concat(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) throw ShapeError("channel_concat: no inputs");
  const Shape& first = inputs.front()->shape();
  if (first.size() != 4) throw ShapeError("channel_concat: inputs must be rank 4");
  size_t channels = 0;
  for (const auto* t : inputs) {
    const Shape& s = t->shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
      throw ShapeError("channel_concat: " + to_string(s) + " does not match " + to_string(first));
    channels += s[1];
  }
  const size_t N = first[0], plane = first[2] * first[3];
  Tensor<T> out({N, channels, first[2], first[3]});
  T* dst = out.raw();
  for (size_t n = 0; n < N; ++n) {
    for (const auto* t : inputs) {
      const size_t block = t->dim(1) * plane;
      std::copy_n(t->raw() + n * block, block, dst);
      dst += block;
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> channel_split(const Tensor<T>& joined, std::span<const size_t> channels) {
  require_rank(joined, 4, "channel_split");
  size_t total = 0;
  for (auto c : channels) total += c;
  if (total != joined.dim(1))
    throw ShapeError("channel_split: channel counts sum to " + std::to_string(total) +
                     ", tensor has " + std::to_string(joined.dim(1)));
  const size_t N = joined.dim(0), plane = joined.dim(2) * joined.dim(3);
  std::vector<Tensor<T>> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape{N, c, joined.dim(2), joined.dim(3)});
  const T* src = joined.raw();
  for (size_t n = 0; n < N; ++n) {
    for (auto& part : parts) {
      const size_t block = part.dim(1) * plane;
      std::copy_n(src, block, part.raw() + n * block);
      src += block;
    }
  }
  return parts;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& input) {
  require_rank(input, 4, "global_avg_pool_forward");
  const size_t N = input.dim(0), C = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor<T> out({N, C});
  const T scale = T{1} / static_cast<T>(plane);
  for (size_t p = 0; p < N * C; ++p) {
    const T* src = input.raw() + p * plane;
    T acc = 0;
    for (size_t q = 0; q < plane; ++q) acc += src[q];
    out[p] = acc * scale;
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& upstream, const Shape& input_shape) {
  if (input_shape.size() != 4 || upstream.shape() != Shape{input_shape[0], input_shape[1]})
    throw ShapeError("global_avg_pool_backward: upstream " + to_string(upstream.shape()) +
                     " incompatible with input " + to_string(input_shape));
  const size_t plane = input_shape[2] * input_shape[3];
  const T scale = T{1} / static_cast<T>(plane);
  Tensor<T> d_input(input_shape);
  for (size_t p = 0; p < upstream.size(); ++p) {
    const T v = upstream[p] * scale;
    std::fill_n(d_input.raw() + p * plane, plane, v);
  }
  return d_input;
}

#define SPOOF_INSTANTIATE_KERNELS(T)                                                           \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                    const ConvConfig&);                                        \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvConfig&, \
                                        const Tensor<T>&);                                     \
  template PoolResult<T> maxpool_forward(const Tensor<T>&, const PoolConfig&);                 \
  template Tensor<T> maxpool_backward(std::span<const size_t>, const Tensor<T>&, const Shape&); \
  template Tensor<T> affine_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template AffineGrads<T> affine_backward(const Tensor<T>&, const Tensor<T>&,                  \
                                          const Tensor<T>&);                                   \
  template Tensor<T> channel_concat(const std::vector<const Tensor<T>*>&);                     \
  template std::vector<Tensor<T>> channel_split(const Tensor<T>&, std::span<const size_t>);    \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Shape&);

SPOOF_INSTANTIATE_KERNELS(float)
SPOOF_INSTANTIATE_KERNELS(double)

}  // namespace spoof
