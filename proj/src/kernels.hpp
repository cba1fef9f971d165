#pragma once

// Layer kernels shared by the forward/backward engine and the relevance
// propagation rules. Channels-last activations; weights in (out, in, k...)
// order, repacked internally to (k..., in, out) so the innermost loop runs
// over contiguous output channels.

#include <cstdint>
#include <vector>

#include "audiolrp/model.hpp"

namespace audiolrp::kernels {

// ---- convolution, 1-D -------------------------------------------------------

template <typename T>
std::vector<T> repack_conv1d(const Tensor<T>& w) {
  const std::size_t O = w.dim(0), C = w.dim(1), K = w.dim(2);
  std::vector<T> out(w.size());
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k)
        out[(k * C + c) * O + o] = w[(o * C + c) * K + k];
  return out;
}

/// Output channels are processed in register-sized blocks; each output
/// still sums bias, then taps in (k, c) order.
inline constexpr std::size_t kOutBlock = 16;

template <typename T, std::size_t B, typename Taps>
inline void accumulate_block(T* yrow, const T* bias, std::size_t ob, Taps&& taps) {
  T acc[B];
  for (std::size_t j = 0; j < B; ++j) acc[j] = bias ? bias[ob + j] : T{0};
  taps([&](T xv, const T* wrow) {
    for (std::size_t j = 0; j < B; ++j) acc[j] += xv * wrow[ob + j];
  });
  for (std::size_t j = 0; j < B; ++j) yrow[ob + j] = acc[j];
}

/// y[o] = bias[o] + sum over taps of xv * wrow[o], blocked over o.
template <typename T, typename Taps>
inline void accumulate_row(T* yrow, const T* bias, std::size_t O, Taps&& taps) {
  std::size_t ob = 0;
  for (; ob + kOutBlock <= O; ob += kOutBlock) accumulate_block<T, kOutBlock>(yrow, bias, ob, taps);
  for (; ob < O; ++ob) accumulate_block<T, 1>(yrow, bias, ob, taps);
}

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>* bias, const LayerSpec& l) {
  const std::size_t L = x.dim(0), C = x.dim(1), O = w.dim(0), K = w.dim(2);
  const Shape out_shape = infer_output_shape(l, x.shape());
  const std::size_t Lo = out_shape[0];
  Tensor<T> y(out_shape);
  const auto wt = repack_conv1d(w);
  const T* b = bias ? bias->data().data() : nullptr;
  for (std::size_t t = 0; t < Lo; ++t) {
    accumulate_row(&y[t * O], b, O, [&](auto&& add) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(t * l.stride + k) -
                                 static_cast<std::ptrdiff_t>(l.padding);
        if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
        const T* xrow = &x[static_cast<std::size_t>(q) * C];
        for (std::size_t c = 0; c < C; ++c) {
          const T xv = xrow[c];
          if (xv == T{0}) continue;
          add(xv, &wt[(k * C + c) * O]);
        }
      }
    });
  }
  return y;
}

/// Weights as (k..., out, in) so the input-gradient loop runs over
/// contiguous input channels.
template <typename T>
std::vector<T> repack_transposed(const Tensor<T>& w) {
  const std::size_t O = w.dim(0), C = w.dim(1);
  const std::size_t taps = w.size() / (O * C);
  std::vector<T> out(w.size());
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < taps; ++k) out[(k * O + o) * C + c] = w[(o * C + c) * taps + k];
  return out;
}

/// dxrow[c] += sum_o w[o, c] * dy[o], each sum formed in o order before it
/// is added.
template <typename T>
inline void transposed_tap(T* dxrow, const T* wtap, const T* dyrow, std::size_t O, std::size_t C,
                           std::vector<T>& acc) {
  acc.assign(C, T{0});
  for (std::size_t o = 0; o < O; ++o) {
    const T g = dyrow[o];
    if (g == T{0}) continue;
    const T* wrow = wtap + o * C;
    for (std::size_t c = 0; c < C; ++c) acc[c] += wrow[c] * g;
  }
  for (std::size_t c = 0; c < C; ++c) dxrow[c] += acc[c];
}

/// Gradient w.r.t. the input: transposed convolution of `dy`.
template <typename T>
Tensor<T> conv1d_backward_input(const Tensor<T>& dy, const Tensor<T>& w,
                                const LayerSpec& l, const Shape& in_shape) {
  const std::size_t L = in_shape[0], C = in_shape[1], O = w.dim(0),
                    K = w.dim(2), Lo = dy.dim(0);
  Tensor<T> dx(in_shape);
  const auto wt = repack_transposed(w);
  std::vector<T> acc;
  for (std::size_t t = 0; t < Lo; ++t) {
    const T* dyrow = &dy[t * O];
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(t * l.stride + k) -
                               static_cast<std::ptrdiff_t>(l.padding);
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
      transposed_tap(&dx[static_cast<std::size_t>(q) * C], &wt[k * O * C], dyrow, O, C, acc);
    }
  }
  return dx;
}

/// Accumulates weight and bias gradients into dw (out, in, k) and db.
template <typename T>
void conv1d_backward_params(const Tensor<T>& dy, const Tensor<T>& x,
                            const LayerSpec& l, Tensor<T>& dw, Tensor<T>* db) {
  const std::size_t L = x.dim(0), C = x.dim(1), O = dw.dim(0), K = dw.dim(2),
                    Lo = dy.dim(0);
  std::vector<T> dwt(dw.size(), T{0});
  for (std::size_t t = 0; t < Lo; ++t) {
    const T* dyrow = &dy[t * O];
    if (db)
      for (std::size_t o = 0; o < O; ++o) (*db)[o] += dyrow[o];
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(t * l.stride + k) -
                               static_cast<std::ptrdiff_t>(l.padding);
      if (q < 0 || q >= static_cast<std::ptrdiff_t>(L)) continue;
      const T* xrow = &x[static_cast<std::size_t>(q) * C];
      for (std::size_t c = 0; c < C; ++c) {
        const T xv = xrow[c];
        if (xv == T{0}) continue;
        T* drow = &dwt[(k * C + c) * O];
        for (std::size_t o = 0; o < O; ++o) drow[o] += xv * dyrow[o];
      }
    }
  }
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k)
        dw[(o * C + c) * K + k] += dwt[(k * C + c) * O + o];
}

// ---- convolution, 2-D -------------------------------------------------------

template <typename T>
std::vector<T> repack_conv2d(const Tensor<T>& w) {
  const std::size_t O = w.dim(0), C = w.dim(1), K = w.dim(2);
  std::vector<T> out(w.size());
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t u = 0; u < K; ++u)
        for (std::size_t v = 0; v < K; ++v)
          out[((u * K + v) * C + c) * O + o] = w[((o * C + c) * K + u) * K + v];
  return out;
}

template <typename Fn>
inline void for_each_tap2d(std::size_t oy, std::size_t ox, const LayerSpec& l,
                           std::size_t H, std::size_t W, Fn&& fn) {
  const std::size_t K = l.kernel;
  for (std::size_t u = 0; u < K; ++u) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + u) -
                              static_cast<std::ptrdiff_t>(l.padding);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
    for (std::size_t v = 0; v < K; ++v) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + v) -
                                static_cast<std::ptrdiff_t>(l.padding);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
      fn(u * K + v, static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix));
    }
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>* bias, const LayerSpec& l) {
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2), O = w.dim(0);
  const Shape out_shape = infer_output_shape(l, x.shape());
  const std::size_t Ho = out_shape[0], Wo = out_shape[1];
  Tensor<T> y(out_shape);
  const auto wt = repack_conv2d(w);
  const T* b = bias ? bias->data().data() : nullptr;
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      accumulate_row(&y[(oy * Wo + ox) * O], b, O, [&](auto&& add) {
        for_each_tap2d(oy, ox, l, H, W, [&](std::size_t tap, std::size_t pix) {
          const T* xrow = &x[pix * C];
          for (std::size_t c = 0; c < C; ++c) {
            const T xv = xrow[c];
            if (xv == T{0}) continue;
            add(xv, &wt[(tap * C + c) * O]);
          }
        });
      });
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& w,
                                const LayerSpec& l, const Shape& in_shape) {
  const std::size_t H = in_shape[0], W = in_shape[1], C = in_shape[2],
                    O = w.dim(0), Ho = dy.dim(0), Wo = dy.dim(1);
  Tensor<T> dx(in_shape);
  const auto wt = repack_transposed(w);
  std::vector<T> acc;
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const T* dyrow = &dy[(oy * Wo + ox) * O];
      for_each_tap2d(oy, ox, l, H, W, [&](std::size_t tap, std::size_t pix) {
        transposed_tap(&dx[pix * C], &wt[tap * O * C], dyrow, O, C, acc);
      });
    }
  }
  return dx;
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& dy, const Tensor<T>& x,
                            const LayerSpec& l, Tensor<T>& dw, Tensor<T>* db) {
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2), O = dw.dim(0),
                    K = dw.dim(2), Ho = dy.dim(0), Wo = dy.dim(1);
  std::vector<T> dwt(dw.size(), T{0});
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const T* dyrow = &dy[(oy * Wo + ox) * O];
      if (db)
        for (std::size_t o = 0; o < O; ++o) (*db)[o] += dyrow[o];
      for_each_tap2d(oy, ox, l, H, W, [&](std::size_t tap, std::size_t pix) {
        const T* xrow = &x[pix * C];
        for (std::size_t c = 0; c < C; ++c) {
          const T xv = xrow[c];
          if (xv == T{0}) continue;
          T* drow = &dwt[(tap * C + c) * O];
          for (std::size_t o = 0; o < O; ++o) drow[o] += xv * dyrow[o];
        }
      });
    }
  }
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t u = 0; u < K; ++u)
        for (std::size_t v = 0; v < K; ++v)
          dw[((o * C + c) * K + u) * K + v] +=
              dwt[((u * K + v) * C + c) * O + o];
}

// ---- dense --------------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>* bias) {
  const std::size_t O = w.dim(0), N = w.dim(1);
  Tensor<T> y({O});
  for (std::size_t o = 0; o < O; ++o) {
    const T* wrow = &w[o * N];
    T acc{0};
    for (std::size_t n = 0; n < N; ++n) acc += wrow[n] * x[n];
    y[o] = acc + (bias ? (*bias)[o] : T{0});
  }
  return y;
}

template <typename T>
Tensor<T> dense_backward_input(const Tensor<T>& dy, const Tensor<T>& w) {
  const std::size_t O = w.dim(0), N = w.dim(1);
  Tensor<T> dx({N});
  for (std::size_t o = 0; o < O; ++o) {
    const T g = dy[o];
    if (g == T{0}) continue;
    const T* wrow = &w[o * N];
    for (std::size_t n = 0; n < N; ++n) dx[n] += g * wrow[n];
  }
  return dx;
}

template <typename T>
void dense_backward_params(const Tensor<T>& dy, const Tensor<T>& x,
                           Tensor<T>& dw, Tensor<T>* db) {
  const std::size_t O = dw.dim(0), N = dw.dim(1);
  for (std::size_t o = 0; o < O; ++o) {
    const T g = dy[o];
    if (db) (*db)[o] += g;
    if (g == T{0}) continue;
    T* drow = &dw[o * N];
    for (std::size_t n = 0; n < N; ++n) drow[n] += g * x[n];
  }
}

// ---- max pooling ------------------------------------------------------------

/// Max over each window; ties resolve to the lowest input index.
template <typename T>
Tensor<T> maxpool1d_forward(const Tensor<T>& x, const LayerSpec& l,
                            std::vector<std::uint32_t>& argmax) {
  const std::size_t C = x.dim(1);
  const Shape out_shape = infer_output_shape(l, x.shape());
  Tensor<T> y(out_shape);
  argmax.assign(y.size(), 0);
  for (std::size_t t = 0; t < out_shape[0]; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = (t * l.stride) * C + c;
      for (std::size_t k = 1; k < l.kernel; ++k) {
        const std::size_t idx = (t * l.stride + k) * C + c;
        if (x[idx] > x[best]) best = idx;
      }
      y[t * C + c] = x[best];
      argmax[t * C + c] = static_cast<std::uint32_t>(best);
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& x, const LayerSpec& l,
                            std::vector<std::uint32_t>& argmax) {
  const std::size_t W = x.dim(1), C = x.dim(2);
  const Shape out_shape = infer_output_shape(l, x.shape());
  const std::size_t Ho = out_shape[0], Wo = out_shape[1];
  Tensor<T> y(out_shape);
  argmax.assign(y.size(), 0);
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((oy * l.stride) * W + ox * l.stride) * C + c;
        for (std::size_t u = 0; u < l.kernel; ++u) {
          for (std::size_t v = 0; v < l.kernel; ++v) {
            const std::size_t idx =
                ((oy * l.stride + u) * W + ox * l.stride + v) * C + c;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (oy * Wo + ox) * C + c;
        y[o] = x[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

/// Routes each output value to its recorded argmax input (sums on overlap).
template <typename T>
Tensor<T> scatter_to_argmax(const Tensor<T>& upstream,
                            const std::vector<std::uint32_t>& argmax,
                            const Shape& in_shape) {
  Tensor<T> out(in_shape);
  for (std::size_t i = 0; i < upstream.size(); ++i) out[argmax[i]] += upstream[i];
  return out;
}

}  // namespace audiolrp::kernels
