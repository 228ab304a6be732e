#include "lga/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lga/parallel.hpp"

namespace lga::nn {

namespace {

template <typename T>
using ConstMat =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using MutMat = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(shape), std::move(v), true);
}

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (kernel == 0 || stride == 0) throw ShapeError("kernel and stride must be positive");
  if (length + 2 * padding < kernel) {
    throw ShapeError("input length " + std::to_string(length) + " with padding " +
                     std::to_string(padding) + " is shorter than kernel " +
                     std::to_string(kernel));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Conv1dParams<T> Conv1dParams<T>::create(std::size_t in, std::size_t out, std::size_t kernel,
                                        std::size_t stride, std::size_t padding, Rng& rng) {
  Conv1dParams p{in, out, kernel, stride, padding, {}, {}};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  p.weight = uniform_tensor<T>({out, in, kernel}, bound, rng);
  p.bias = uniform_tensor<T>({out}, bound, rng);
  return p;
}

template <typename T>
Conv1dParams<T> Conv1dParams<T>::identity(std::size_t channels, std::size_t kernel) {
  if (kernel % 2 == 0) throw ConfigError("identity conv needs an odd kernel");
  auto p = zeros(channels, channels, kernel, 1, (kernel - 1) / 2);
  auto w = p.weight.mutable_data();
  for (std::size_t c = 0; c < channels; ++c) w[(c * channels + c) * kernel + kernel / 2] = T(1);
  return p;
}

template <typename T>
Conv1dParams<T> Conv1dParams<T>::zeros(std::size_t in, std::size_t out, std::size_t kernel,
                                       std::size_t stride, std::size_t padding) {
  return Conv1dParams{in,
                      out,
                      kernel,
                      stride,
                      padding,
                      Tensor<T>::zeros({out, in, kernel}, true),
                      Tensor<T>::zeros({out}, true)};
}

template <typename T>
void Conv1dParams<T>::validate() const {
  if (weight.shape() != Shape{out_channels, in_channels, kernel_size}) {
    throw ShapeError("conv weight shape " + shape_str(weight.shape()) + " inconsistent with " +
                     std::to_string(in_channels) + "->" + std::to_string(out_channels) + " k=" +
                     std::to_string(kernel_size));
  }
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw ShapeError("conv bias shape " + shape_str(bias.shape()) + " inconsistent with " +
                     std::to_string(out_channels) + " output channels");
  }
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::create(std::size_t dim, double epsilon) {
  return LayerNormParams{dim, Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true),
                         epsilon};
}

template <typename T>
LinearParams<T> LinearParams<T>::create(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearParams p{in, out, {}, {}};
  p.weight = uniform_tensor<T>({in, out}, bound, rng);
  p.bias = uniform_tensor<T>({out}, bound, rng);
  return p;
}

template <typename T>
LinearParams<T> LinearParams<T>::zeros(std::size_t in, std::size_t out) {
  return LinearParams{in, out, Tensor<T>::zeros({in, out}, true), Tensor<T>::zeros({out}, true)};
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 3) {
    throw ShapeError("conv1d expects x [B,C,L] and weight [O,C,K], got " + shape_str(xs) +
                     " and " + shape_str(ws));
  }
  const std::size_t batch = xs[0], cin = xs[1], len = xs[2];
  const std::size_t cout = ws[0], kernel = ws[2];
  if (ws[1] != cin) {
    throw ShapeError("conv1d channel mismatch: input " + shape_str(xs) + ", weight " +
                     shape_str(ws));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw ShapeError("conv1d bias shape " + shape_str(bias.shape()) + " for weight " +
                     shape_str(ws));
  }
  const std::size_t lout = conv_output_length(len, kernel, stride, padding);

  // Each sample is a GEMM over the unrolled input: out_b[O, Lout] =
  // W[O, C*K] * cols_b[C*K, Lout]. Unrolling maps (c, j, t) to input position
  // t*stride + j - padding, or to zero outside the signal.
  const std::size_t rows = cin * kernel;
  auto unroll = [=](const T* xb, T* cols) {
    for (std::size_t c = 0; c < cin; ++c) {
      const T* xr = xb + c * len;
      for (std::size_t j = 0; j < kernel; ++j) {
        T* dst = cols + (c * kernel + j) * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::size_t pos = t * stride + j;
          dst[t] = (pos >= padding && pos - padding < len) ? xr[pos - padding] : T(0);
        }
      }
    }
  };
  const bool pointwise = kernel == 1 && stride == 1 && padding == 0;
  const std::size_t work = batch * cout * rows * lout;

  auto xd = x.data();
  auto wd = weight.data();
  std::vector<T> out(batch * cout * lout);
  const T* bd = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(batch, work, [&](std::size_t lo, std::size_t hi) {
    std::vector<T> cols(pointwise ? 0 : rows * lout);
    for (std::size_t b = lo; b < hi; ++b) {
      const T* xb = xd.data() + b * cin * len;
      if (!pointwise) unroll(xb, cols.data());
      ConstMat<T> w(wd.data(), cout, rows);
      ConstMat<T> xc(pointwise ? xb : cols.data(), rows, lout);
      MutMat<T> y(out.data() + b * cout * lout, cout, lout);
      y.noalias() = w * xc;
      if (bd) {
        for (std::size_t o = 0; o < cout; ++o) y.row(o).array() += bd[o];
      }
    }
  });

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      "conv1d", {batch, cout, lout}, std::move(out), inputs,
      [=](std::span<const T> g) {
        auto gx = grad_slot(xn);
        auto gw = grad_slot(wn);
        const auto& xv = xn->data;
        const auto& wv = wn->data;
        // Per-sample weight gradients are reduced in batch order afterwards so
        // the sum does not depend on how samples were split across threads.
        std::vector<T> gw_parts(gw.empty() ? 0 : batch * cout * rows);
        parallel_for(batch, 2 * work, [&](std::size_t lo, std::size_t hi) {
          std::vector<T> cols(pointwise ? 0 : rows * lout);
          std::vector<T> dcols(gx.empty() || pointwise ? 0 : rows * lout);
          for (std::size_t b = lo; b < hi; ++b) {
            ConstMat<T> gy(g.data() + b * cout * lout, cout, lout);
            ConstMat<T> w(wv.data(), cout, rows);
            if (!gw.empty()) {
              const T* xb = xv.data() + b * cin * len;
              if (!pointwise) unroll(xb, cols.data());
              ConstMat<T> xc(pointwise ? xb : cols.data(), rows, lout);
              MutMat<T> part(gw_parts.data() + b * cout * rows, cout, rows);
              part.noalias() = gy * xc.transpose();
            }
            if (!gx.empty()) {
              T* dx = gx.data() + b * cin * len;
              if (pointwise) {
                MutMat<T> dxm(dx, cin, len);
                dxm.noalias() += w.transpose() * gy;
                continue;
              }
              MutMat<T> dc(dcols.data(), rows, lout);
              dc.noalias() = w.transpose() * gy;
              for (std::size_t c = 0; c < cin; ++c) {
                T* dr = dx + c * len;
                for (std::size_t j = 0; j < kernel; ++j) {
                  const T* src = dcols.data() + (c * kernel + j) * lout;
                  for (std::size_t t = 0; t < lout; ++t) {
                    const std::size_t pos = t * stride + j;
                    if (pos >= padding && pos - padding < len) dr[pos - padding] += src[t];
                  }
                }
              }
            }
          }
        });
        if (!gw.empty()) {
          for (std::size_t b = 0; b < batch; ++b) {
            const T* part = gw_parts.data() + b * cout * rows;
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += part[i];
          }
        }
        if (bn) {
          auto gb = grad_slot(bn);
          if (!gb.empty()) {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t o = 0; o < cout; ++o) {
                const T* gr = g.data() + (b * cout + o) * lout;
                T acc = 0;
                for (std::size_t t = 0; t < lout; ++t) acc += gr[t];
                gb[o] += acc;
              }
          }
        }
      });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Conv1dParams<T>& p) {
  p.validate();
  return conv1d(x, p.weight, p.bias, p.stride, p.padding);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double epsilon) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("layer_norm needs rank >= 1");
  const std::size_t dim = xs.back();
  if (gamma.shape() != Shape{dim} || beta.shape() != Shape{dim}) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match last extent of " + shape_str(xs));
  }
  const std::size_t rows = dim ? x.numel() / dim : 0;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * dim;
    T mu = 0;
    for (std::size_t i = 0; i < dim; ++i) mu += xr[i];
    mu /= static_cast<T>(dim);
    T var = 0;
    for (std::size_t i = 0; i < dim; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<T>(dim);
    const T is = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    inv_std[r] = is;
    for (std::size_t i = 0; i < dim; ++i) {
      const T h = (xr[i] - mu) * is;
      xhat[r * dim + i] = h;
      out[r * dim + i] = gd[i] * h + bd[i];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(
      "layer_norm", xs, std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const T> g) {
        auto gx = grad_slot(xn);
        auto gg = grad_slot(gn);
        auto gbeta = grad_slot(bn);
        const auto& gam = gn->data;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * dim;
          const T* hr = xhat.data() + r * dim;
          if (!gg.empty())
            for (std::size_t i = 0; i < dim; ++i) gg[i] += gr[i] * hr[i];
          if (!gbeta.empty())
            for (std::size_t i = 0; i < dim; ++i) gbeta[i] += gr[i];
          if (!gx.empty()) {
            T mean_d = 0, mean_dh = 0;
            for (std::size_t i = 0; i < dim; ++i) {
              const T d = gr[i] * gam[i];
              mean_d += d;
              mean_dh += d * hr[i];
            }
            mean_d /= static_cast<T>(dim);
            mean_dh /= static_cast<T>(dim);
            for (std::size_t i = 0; i < dim; ++i) {
              const T d = gr[i] * gam[i];
              gx[r * dim + i] += inv_std[r] * (d - mean_d - hr[i] * mean_dh);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p) {
  if (x.rank() == 0 || x.shape().back() != p.dim) {
    throw ShapeError("layer_norm: last extent of " + shape_str(x.shape()) + " is not " +
                     std::to_string(p.dim));
  }
  return layer_norm(x, p.gamma, p.beta, p.epsilon);
}

namespace {

struct PoolGeometry {
  std::size_t rows, len, lout;
};

template <typename T>
PoolGeometry pool_geometry(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                           const char* op) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError(std::string(op) + " needs rank >= 1");
  const std::size_t len = xs.back();
  if (kernel == 0 || stride == 0) throw ShapeError(std::string(op) + ": kernel/stride must be > 0");
  if (len < kernel) {
    throw ShapeError(std::string(op) + ": length " + std::to_string(len) + " < kernel " +
                     std::to_string(kernel));
  }
  return {len ? x.numel() / len : 0, len, (len - kernel) / stride + 1};
}

}  // namespace

template <typename T>
Tensor<T> max_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  auto geo = pool_geometry(x, kernel, stride, "max_pool1d");
  auto xd = x.data();
  std::vector<T> out(geo.rows * geo.lout);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t r = 0; r < geo.rows; ++r)
    for (std::size_t t = 0; t < geo.lout; ++t) {
      const std::size_t base = r * geo.len + t * stride;
      std::size_t best = base;
      for (std::size_t j = 1; j < kernel; ++j)
        if (xd[base + j] > xd[best]) best = base + j;
      out[r * geo.lout + t] = xd[best];
      argmax[r * geo.lout + t] = best;
    }
  Shape shape = x.shape();
  shape.back() = geo.lout;
  auto xn = x.node();
  return make_result<T>("max_pool1d", std::move(shape), std::move(out), {x},
                        [xn, argmax = std::move(argmax)](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
                        });
}

template <typename T>
Tensor<T> avg_pool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  auto geo = pool_geometry(x, kernel, stride, "avg_pool1d");
  auto xd = x.data();
  const T inv = T(1) / static_cast<T>(kernel);
  std::vector<T> out(geo.rows * geo.lout);
  for (std::size_t r = 0; r < geo.rows; ++r)
    for (std::size_t t = 0; t < geo.lout; ++t) {
      const T* src = xd.data() + r * geo.len + t * stride;
      T acc = 0;
      for (std::size_t j = 0; j < kernel; ++j) acc += src[j];
      out[r * geo.lout + t] = acc * inv;
    }
  Shape shape = x.shape();
  shape.back() = geo.lout;
  auto xn = x.node();
  return make_result<T>("avg_pool1d", std::move(shape), std::move(out), {x},
                        [xn, geo, kernel, stride, inv](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          if (gx.empty()) return;
                          for (std::size_t r = 0; r < geo.rows; ++r)
                            for (std::size_t t = 0; t < geo.lout; ++t) {
                              const T v = g[r * geo.lout + t] * inv;
                              T* dst = gx.data() + r * geo.len + t * stride;
                              for (std::size_t j = 0; j < kernel; ++j) dst[j] += v;
                            }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0]) {
    throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " +
                     shape_str(ws));
  }
  const std::size_t din = ws[0], dout = ws[1];
  if (bias.defined() && bias.shape() != Shape{dout}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for weight " + shape_str(ws));
  }
  const std::size_t rows = din ? x.numel() / din : 0;
  auto xd = x.data();
  auto wd = weight.data();
  std::vector<T> out(rows * dout);
  parallel_for(rows, rows * din * dout, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      T* orow = out.data() + r * dout;
      if (bias.defined()) {
        std::copy_n(bias.data().data(), dout, orow);
      } else {
        std::fill(orow, orow + dout, T(0));
      }
      const T* xr = xd.data() + r * din;
      for (std::size_t i = 0; i < din; ++i) {
        const T v = xr[i];
        const T* wr = wd.data() + i * dout;
        for (std::size_t j = 0; j < dout; ++j) orow[j] += v * wr[j];
      }
    }
  });
  Shape shape = xs;
  shape.back() = dout;
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("linear", std::move(shape), std::move(out), inputs,
                        [=](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          auto gw = grad_slot(wn);
                          const auto& xv = xn->data;
                          const auto& wv = wn->data;
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* gr = g.data() + r * dout;
                            if (!gx.empty()) {
                              for (std::size_t i = 0; i < din; ++i) {
                                const T* wr = wv.data() + i * dout;
                                T acc = 0;
                                for (std::size_t j = 0; j < dout; ++j) acc += gr[j] * wr[j];
                                gx[r * din + i] += acc;
                              }
                            }
                            if (!gw.empty()) {
                              for (std::size_t i = 0; i < din; ++i) {
                                const T v = xv[r * din + i];
                                T* dw = gw.data() + i * dout;
                                for (std::size_t j = 0; j < dout; ++j) dw[j] += v * gr[j];
                              }
                            }
                          }
                          if (bn) {
                            auto gb = grad_slot(bn);
                            if (!gb.empty())
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < dout; ++j) gb[j] += g[r * dout + j];
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p) {
  return linear(x, p.weight, p.bias);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  auto xn = x.node();
  return make_result<T>("relu", x.shape(), std::move(out), {x}, [xn](std::span<const T> g) {
    auto gx = grad_slot(xn);
    const auto& v = xn->data;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (v[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node();
  auto y = out;
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x},
                        [xn, y = std::move(y)](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          for (std::size_t i = 0; i < gx.size(); ++i)
                            gx[i] += g[i] * y[i] * (T(1) - y[i]);
                        });
}

#define LGA_INSTANTIATE_NN(T)                                                                    \
  template struct Conv1dParams<T>;                                                              \
  template struct LayerNormParams<T>;                                                           \
  template struct LinearParams<T>;                                                              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                            std::size_t);                                                       \
  template Tensor<T> conv1d(const Tensor<T>&, const Conv1dParams<T>&);                           \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template Tensor<T> layer_norm(const Tensor<T>&, const LayerNormParams<T>&);                    \
  template Tensor<T> max_pool1d(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> avg_pool1d(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> linear(const Tensor<T>&, const LinearParams<T>&);                           \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);

LGA_INSTANTIATE_NN(float)
LGA_INSTANTIATE_NN(double)

#undef LGA_INSTANTIATE_NN

}  // namespace lga::nn
