#include "lga/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lga/parallel.hpp"

namespace lga {

namespace {

constexpr std::size_t kZeroIndex = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Strides of `in` expressed over the axes of `out`; 0 along broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  auto contiguous = contiguous_strides(in);
  std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    strides[offset + i] = in[i] == 1 ? 0 : contiguous[i];
  }
  return strides;
}

// Calls fn(out_flat, a_offset, b_offset) for every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = shape_numel(out);
  if (n == 0) return;
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, oa, ob);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * (out[d] - 1);
      ob -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

std::size_t check_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  return axis;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
Tensor<T> gather_impl(const char* op, const Tensor<T>& x, std::vector<std::size_t> index,
                      Shape shape) {
  if (shape_numel(shape) != index.size()) {
    throw ShapeError(std::string(op) + ": index count does not match shape " + shape_str(shape));
  }
  auto src = x.data();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::size_t j = index[i];
    if (j == kZeroIndex) {
      out[i] = T(0);
    } else {
      if (j >= src.size()) throw ShapeError(std::string(op) + ": gather index out of range");
      out[i] = src[j];
    }
  }
  auto xn = x.node();
  return make_result<T>(op, std::move(shape), std::move(out), {x},
                        [xn, index = std::move(index)](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < index.size(); ++i) {
                            if (index[i] != kZeroIndex) gx[index[i]] += g[i];
                          }
                        });
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const char* op, BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  Shape out_shape;
  try {
    out_shape = broadcast_shapes(a.shape(), b.shape());
  } catch (const ShapeError&) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                     shape_str(b.shape()));
  }
  auto sa = broadcast_strides(a.shape(), out_shape);
  auto sb = broadcast_strides(b.shape(), out_shape);
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(shape_numel(out_shape));
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case BinaryKind::kAdd: return x + y;
      case BinaryKind::kSub: return x - y;
      case BinaryKind::kMul: return x * y;
    }
    return T(0);
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(da[i], db[i]);
  } else {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t i, std::size_t ia, std::size_t ib) {
                         out[i] = apply(da[ia], db[ib]);
                       });
  }
  auto an = a.node();
  auto bn = b.node();
  Shape shape_copy = out_shape;
  return make_result<T>(
      op, std::move(out_shape), std::move(out), {a, b},
      [an, bn, kind, same, sa = std::move(sa), sb = std::move(sb),
       shape = std::move(shape_copy)](std::span<const T> g) {
        auto ga = grad_slot(an);
        auto gb = grad_slot(bn);
        const auto& va = an->data;
        const auto& vb = bn->data;
        auto body = [&](std::size_t i, std::size_t ia, std::size_t ib) {
          switch (kind) {
            case BinaryKind::kAdd:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] += g[i];
              break;
            case BinaryKind::kSub:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] -= g[i];
              break;
            case BinaryKind::kMul:
              if (!ga.empty()) ga[ia] += g[i] * vb[ib];
              if (!gb.empty()) gb[ib] += g[i] * va[ia];
              break;
          }
        };
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) body(i, i, i);
        } else {
          for_each_broadcast(shape, sa, sb, body);
        }
      });
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", BinaryKind::kAdd, a, b);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", BinaryKind::kSub, a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", BinaryKind::kMul, a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * factor;
  auto xn = x.node();
  return make_result<T>("scale", x.shape(), std::move(out), {x},
                        [xn, factor](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
                        });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] + value;
  auto xn = x.node();
  return make_result<T>("add_scalar", x.shape(), std::move(out), {x},
                        [xn](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  auto xn = x.node();
  return make_result<T>("sum", {}, {total}, {x}, [xn](std::span<const T> g) {
    auto gx = grad_slot(xn);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  check_axis(x.shape(), axis, "sum");
  auto s = split_at(x.shape(), axis);
  auto src = x.data();
  std::vector<T> out(s.outer * s.inner, T(0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < s.extent; ++a)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += src[(o * s.extent + a) * s.inner + i];
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  auto xn = x.node();
  return make_result<T>("sum_axis", std::move(shape), std::move(out), {x},
                        [xn, s](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          if (gx.empty()) return;
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t a = 0; a < s.extent; ++a)
                              for (std::size_t i = 0; i < s.inner; ++i)
                                gx[(o * s.extent + a) * s.inner + i] += g[o * s.inner + i];
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  check_axis(x.shape(), axis, "mean");
  const std::size_t extent = x.shape()[axis];
  if (extent == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(x, axis, keepdim), T(1) / static_cast<T>(extent));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(as) + " and " +
                     shape_str(bs));
  }
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t k2 = bs[bs.size() - 2], p = bs.back();
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ for " + shape_str(as) + " and " +
                     shape_str(bs));
  }
  Shape a_batch(as.begin(), as.end() - 2);
  Shape b_batch(bs.begin(), bs.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(a_batch, b_batch);
  } catch (const ShapeError&) {
    throw ShapeError("matmul: batch extents of " + shape_str(as) + " and " + shape_str(bs) +
                     " do not broadcast");
  }
  // Matrix-index offsets per batch element.
  std::vector<std::size_t> a_off, b_off;
  {
    auto sa = broadcast_strides(a_batch, batch);
    auto sb = broadcast_strides(b_batch, batch);
    const std::size_t nb = shape_numel(batch);
    a_off.resize(nb);
    b_off.resize(nb);
    if (batch.empty()) {
      a_off[0] = b_off[0] = 0;
    } else {
      for_each_broadcast(batch, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        a_off[i] = ia;
        b_off[i] = ib;
      });
    }
  }
  const std::size_t nb = a_off.size();
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(nb * m * p, T(0));
  parallel_for(nb * m, nb * m * k * p, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      const std::size_t bi = r / m, i = r % m;
      const T* arow = da.data() + a_off[bi] * m * k + i * k;
      const T* bmat = db.data() + b_off[bi] * k * p;
      T* crow = out.data() + bi * m * p + i * p;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = bmat + kk * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      }
    }
  });
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [an, bn, a_off = std::move(a_off), b_off = std::move(b_off), m, k, p](std::span<const T> g) {
        auto ga = grad_slot(an);
        auto gb = grad_slot(bn);
        const T* va = an->data.data();
        const T* vb = bn->data.data();
        const std::size_t nb = a_off.size();
        // Batch entries may alias the same operand matrix under broadcasting, so
        // the batch loop stays sequential.
        for (std::size_t bi = 0; bi < nb; ++bi) {
          const T* gc = g.data() + bi * m * p;
          if (!ga.empty()) {
            T* gam = ga.data() + a_off[bi] * m * k;
            const T* bm = vb + b_off[bi] * k * p;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t kk = 0; kk < k; ++kk) {
                T acc = 0;
                const T* brow = bm + kk * p;
                const T* grow = gc + i * p;
                for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
                gam[i * k + kk] += acc;
              }
          }
          if (!gb.empty()) {
            T* gbm = gb.data() + b_off[bi] * k * p;
            const T* am = va + a_off[bi] * m * k;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t kk = 0; kk < k; ++kk) {
                const T av = am[i * k + kk];
                const T* grow = gc + i * p;
                T* gbrow = gbm + kk * p;
                for (std::size_t j = 0; j < p; ++j) gbrow[j] += av * grow[j];
              }
          }
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  check_axis(x.shape(), axis, "softmax");
  auto s = split_at(x.shape(), axis);
  auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < s.extent; ++a) mx = std::max(mx, src[base + a * s.inner]);
      T total = 0;
      for (std::size_t a = 0; a < s.extent; ++a) {
        T e = std::exp(src[base + a * s.inner] - mx);
        out[base + a * s.inner] = e;
        total += e;
      }
      for (std::size_t a = 0; a < s.extent; ++a) out[base + a * s.inner] /= total;
    }
  }
  auto xn = x.node();
  auto result = make_result<T>("softmax", x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    // The closure needs the output values; hold them by weak reference to avoid a cycle.
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward = [xn, self, s](std::span<const T> g) {
      auto gx = grad_slot(xn);
      auto out_node = self.lock();
      if (gx.empty() || !out_node) return;
      const auto& y = out_node->data;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          T dot = 0;
          for (std::size_t a = 0; a < s.extent; ++a) {
            dot += g[base + a * s.inner] * y[base + a * s.inner];
          }
          for (std::size_t a = 0; a < s.extent; ++a) {
            const std::size_t j = base + a * s.inner;
            gx[j] += y[j] * (g[j] - dot);
          }
        }
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) {
    throw ShapeError("permute: permutation rank does not match shape " + shape_str(in));
  }
  std::vector<bool> seen(in.size(), false);
  for (auto p : perm) {
    if (p >= in.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(in.size());
  auto in_strides = contiguous_strides(in);
  std::vector<std::size_t> strides(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = in[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  std::vector<std::size_t> index(shape_numel(out_shape));
  std::vector<std::size_t> zero(in.size(), 0);
  if (!index.empty()) {
    for_each_broadcast(out_shape, strides, zero,
                       [&](std::size_t i, std::size_t ia, std::size_t) { index[i] = ia; });
  }
  return gather_impl("permute", x, std::move(index), std::move(out_shape));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t a, std::size_t b) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  check_axis(x.shape(), a, "transpose");
  check_axis(x.shape(), b, "transpose");
  std::swap(perm[a], perm[b]);
  return permute(x, perm);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return make_result<T>("reshape", std::move(shape), std::move(out), {x},
                        [xn](std::span<const T> g) {
                          auto gx = grad_slot(xn);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                        });
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("broadcast_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                     shape_str(shape));
  }
  auto strides = broadcast_strides(x.shape(), shape);
  std::vector<std::size_t> index(shape_numel(shape));
  std::vector<std::size_t> zero(shape.size(), 0);
  if (!index.empty()) {
    for_each_broadcast(shape, strides, zero,
                       [&](std::size_t i, std::size_t ia, std::size_t) { index[i] = ia; });
  }
  return gather_impl("broadcast_to", x, std::move(index), shape);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(x.shape(), axis, "slice");
  if (begin > end || end > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  }
  auto s = split_at(x.shape(), axis);
  const std::size_t len = end - begin;
  std::vector<std::size_t> index;
  index.reserve(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = begin; a < end; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) index.push_back((o * s.extent + a) * s.inner + i);
  Shape shape = x.shape();
  shape[axis] = len;
  return gather_impl("slice", x, std::move(index), std::move(shape));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  check_axis(first, axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    bool ok = ps.size() == first.size();
    for (std::size_t d = 0; ok && d < ps.size(); ++d) ok = d == axis || ps[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(ps) + " incompatible with " +
                       shape_str(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += ps[axis];
  }
  auto s = split_at(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.shape()[axis];
    auto src = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(src.data() + o * ext * s.inner, ext * s.inner,
                  out.data() + (o * s.extent + offset) * s.inner);
    offset += ext;
  }
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result<T>("concat", std::move(out_shape), std::move(out), parts,
                        [nodes, offsets, s, axis](std::span<const T> g) {
                          for (std::size_t n = 0; n < nodes.size(); ++n) {
                            auto gp = grad_slot(nodes[n]);
                            if (gp.empty()) continue;
                            const std::size_t ext = nodes[n]->shape[axis];
                            for (std::size_t o = 0; o < s.outer; ++o) {
                              const T* src = g.data() + (o * s.extent + offsets[n]) * s.inner;
                              T* dst = gp.data() + o * ext * s.inner;
                              for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t axis, std::size_t before, std::size_t after) {
  check_axis(x.shape(), axis, "pad");
  auto s = split_at(x.shape(), axis);
  const std::size_t len = s.extent + before + after;
  std::vector<std::size_t> index;
  index.reserve(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < len; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) {
        if (a < before || a >= before + s.extent) {
          index.push_back(kZeroIndex);
        } else {
          index.push_back((o * s.extent + (a - before)) * s.inner + i);
        }
      }
  Shape shape = x.shape();
  shape[axis] = len;
  return gather_impl("pad", x, std::move(index), std::move(shape));
}

template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::size_t axis, std::size_t size, std::size_t step) {
  check_axis(x.shape(), axis, "unfold");
  auto s = split_at(x.shape(), axis);
  if (size == 0 || step == 0 || size > s.extent) {
    throw ShapeError("unfold: window " + std::to_string(size) + " / step " +
                     std::to_string(step) + " invalid for extent " + std::to_string(s.extent));
  }
  const std::size_t windows = (s.extent - size) / step + 1;
  std::vector<std::size_t> index;
  index.reserve(s.outer * windows * size * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t t = 0; t < size; ++t)
        for (std::size_t i = 0; i < s.inner; ++i)
          index.push_back((o * s.extent + w * step + t) * s.inner + i);
  Shape shape = x.shape();
  shape[axis] = windows;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, size);
  return gather_impl("unfold", x, std::move(index), std::move(shape));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::vector<std::size_t> index, Shape shape) {
  for (auto i : index) {
    if (i >= x.numel()) throw ShapeError("gather: index out of range for " + shape_str(x.shape()));
  }
  return gather_impl("gather", x, std::move(index), std::move(shape));
}

#define LGA_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> neg(const Tensor<T>&);                                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                              \
  template Tensor<T> mean(const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&, std::size_t, bool);                           \
  template Tensor<T> mean(const Tensor<T>&, std::size_t, bool);                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);         \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                   \
  template Tensor<T> broadcast_to(const Tensor<T>&, const Shape&);                       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                 \
  template Tensor<T> pad(const Tensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template Tensor<T> unfold(const Tensor<T>&, std::size_t, std::size_t, std::size_t);    \
  template Tensor<T> gather(const Tensor<T>&, std::vector<std::size_t>, Shape);

LGA_INSTANTIATE_OPS(float)
LGA_INSTANTIATE_OPS(double)

#undef LGA_INSTANTIATE_OPS

}  // namespace lga
