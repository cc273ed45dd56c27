#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/tensor.hpp"

namespace awsrn {

template <class T>
struct Node {
  Tensor<T> value;  // value.grad() is the adjoint
  bool requires_grad = false;
  const char* op = "leaf";
  // Propagates this node's adjoint into its inputs. Empty for leaves and for
  // nodes created while the tape was not recording.
  std::function<void(Node&)> backward;
};

/// Handle to a value in the computation graph. Cheap to copy; copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// A leaf that receives gradients (a trainable parameter).
  static Var leaf(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }
  /// A leaf that never receives gradients.
  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  bool valid() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

  std::span<const T> grad() const { return node_->value.grad(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Records differentiable operations in execution order. One tape per thread
/// and per forward pass. A non-recording tape keeps no graph, so intermediates
/// are released as soon as the caller drops them (inference mode).
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return ops_.size(); }

  /// Creates the output node of an operation. The backward closure is kept
  /// only when recording and at least one input needs a gradient.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                std::function<void(Node<T>&)> backward) {
    bool needs = false;
    for (const Var<T>* in : inputs) needs = needs || in->requires_grad();
    return emit(op, std::move(value), needs, std::move(backward));
  }
  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                std::function<void(Node<T>&)> backward) {
    bool needs = false;
    for (const Var<T>& in : inputs) needs = needs || in.requires_grad();
    return emit(op, std::move(value), needs, std::move(backward));
  }

  /// Recorded nodes in execution order.
  const std::vector<std::shared_ptr<Node<T>>>& nodes() const noexcept { return ops_; }

  /// Reverse-mode sweep from a scalar root. Parameter (leaf) gradients
  /// accumulate across calls; intermediate adjoints are reset each call.
  void backward(const Var<T>& root) {
    if (!root.valid() || !root.shape().is_scalar()) {
      throw AutodiffError("backward root must be a (1,1,1,1) scalar, got " +
                          (root.valid() ? root.shape().str() : std::string("<null>")));
    }
    auto it = std::find_if(ops_.rbegin(), ops_.rend(),
                           [&](const auto& n) { return n.get() == root.node(); });
    if (it == ops_.rend()) throw AutodiffError("backward root was not produced on this tape");
    for (auto& n : ops_) n->value.drop_grad();
    root.node()->value.ensure_grad()[0] = T(1);
    for (; it != ops_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.value.has_grad() && n.backward) n.backward(n);
    }
  }

 private:
  Var<T> emit(const char* op, Tensor<T> value, bool needs,
             std::function<void(Node<T>&)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->value = std::move(value);
    if (recording_ && needs) {
      n->requires_grad = true;
      n->backward = std::move(backward);
      ops_.push_back(n);
    } else if (recording_) {
      ops_.push_back(n);
    }
    return Var<T>(std::move(n));
  }

  bool recording_;
  std::vector<std::shared_ptr<Node<T>>> ops_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <class T>
std::span<T> grad_of(const Var<T>& v) {
  return v.node()->value.ensure_grad();
}

/// [lo, hi) of output positions whose source position (i + d) lies in [0, n).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t n, long d) {
  const long lo = std::max(0L, -d);
  const long hi = std::min(static_cast<long>(n), static_cast<long>(n) - d);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Inner product with eight fixed partial sums: vectorizable without
/// reassociation, and the summation order never depends on the compiler.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  T s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Same-size cross-correlation with zero padding (k-1)/2 and stride 1.
/// weight: (C_out, C_in, k, k), bias: (1, C_out, 1, 1).
template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const Shape is = input.shape();
  const Shape ws = weight.shape();
  const Shape bs = bias.shape();
  detail::require(ws.h == ws.w && ws.h % 2 == 1,
                  "conv2d kernel must be square and odd, weight " + ws.str());
  detail::require(ws.c == is.c, "conv2d channel mismatch: input " + is.str() + " vs weight " +
                                    ws.str());
  detail::require(bs.numel() == ws.n, "conv2d bias " + bs.str() + " does not match weight " +
                                          ws.str());

  const std::size_t N = is.n, Ci = is.c, H = is.h, W = is.w, Co = ws.n, K = ws.h;
  const long pad = static_cast<long>(K / 2);
  Tensor<T> out({N, Co, H, W});
  {
    const T* x = input.value().data().data();
    const T* wt = weight.value().data().data();
    const T* b = bias.value().data().data();
    T* y = out.data().data();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co) {
        T* yp = y + (n * Co + co) * H * W;
        std::fill(yp, yp + H * W, b[co]);
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const T* xp = x + (n * Ci + ci) * H * W;
          const T* kp = wt + (co * Ci + ci) * K * K;
          for (std::size_t kh = 0; kh < K; ++kh) {
            const long dy = static_cast<long>(kh) - pad;
            const auto [h0, h1] = detail::valid_range(H, dy);
            for (std::size_t kw = 0; kw < K; ++kw) {
              const long dx = static_cast<long>(kw) - pad;
              const auto [w0, w1] = detail::valid_range(W, dx);
              const T c = kp[kh * K + kw];
              const std::size_t len = w1 - w0;
              if (len == 0 || h1 == h0) continue;
              const std::size_t xw0 = static_cast<std::size_t>(static_cast<long>(w0) + dx);
              for (std::size_t h = h0; h < h1; ++h) {
                T* yr = yp + h * W + w0;
                const T* xr = xp + static_cast<std::size_t>(static_cast<long>(h) + dy) * W + xw0;
                for (std::size_t i = 0; i < len; ++i) yr[i] += c * xr[i];
              }
            }
          }
        }
      }
    }
  }

  return tape.record("conv2d", std::move(out), {&input, &weight, &bias}, [input, weight, bias, N, Ci, H, W,
                                                                 Co, K, pad](Node<T>& self) {
    const T* gy = self.value.grad().data();
    const T* x = input.value().data().data();
    const T* wt = weight.value().data().data();
    T* gx = input.requires_grad() ? detail::grad_of(input).data() : nullptr;
    T* gw = weight.requires_grad() ? detail::grad_of(weight).data() : nullptr;
    T* gb = bias.requires_grad() ? detail::grad_of(bias).data() : nullptr;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co) {
        const T* gyp = gy + (n * Co + co) * H * W;
        if (gb) {
          T s = T(0);
          for (std::size_t i = 0; i < H * W; ++i) s += gyp[i];
          gb[co] += s;
        }
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const T* xp = x + (n * Ci + ci) * H * W;
          T* gxp = gx ? gx + (n * Ci + ci) * H * W : nullptr;
          const T* kp = wt + (co * Ci + ci) * K * K;
          T* gkp = gw ? gw + (co * Ci + ci) * K * K : nullptr;
          for (std::size_t kh = 0; kh < K; ++kh) {
            const long dy = static_cast<long>(kh) - pad;
            const auto [h0, h1] = detail::valid_range(H, dy);
            for (std::size_t kw = 0; kw < K; ++kw) {
              const long dx = static_cast<long>(kw) - pad;
              const auto [w0, w1] = detail::valid_range(W, dx);
              const T c = kp[kh * K + kw];
              const std::size_t len = w1 - w0;
              if (len == 0 || h1 == h0) continue;
              const std::size_t xw0 = static_cast<std::size_t>(static_cast<long>(w0) + dx);
              T acc = T(0);
              for (std::size_t h = h0; h < h1; ++h) {
                const T* gr = gyp + h * W + w0;
                const std::size_t src = static_cast<std::size_t>(static_cast<long>(h) + dy) * W + xw0;
                if (gxp) {
                  T* gxr = gxp + src;
                  for (std::size_t i = 0; i < len; ++i) gxr[i] += c * gr[i];
                }
                if (gkp) acc += detail::dot(gr, xp + src, len);
              }
              if (gkp) gkp[kh * K + kw] += acc;
            }
          }
        }
      }
    }
  });
}

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& input) {
  Tensor<T> out(input.shape());
  const auto x = input.value().data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return tape.record("relu", std::move(out), {&input}, [input](Node<T>& self) {
    const auto gy = self.value.grad();
    const auto x = input.value().data();
    auto gx = detail::grad_of(input);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (x[i] > T(0)) gx[i] += gy[i];
    }
  });
}

/// Rearranges (N, C*s*s, H, W) into (N, C, H*s, W*s):
/// out[n][c][h*s+i][w*s+j] = in[n][c*s*s + i*s + j][h][w].
template <class T>
Var<T> pixel_shuffle(Tape<T>& tape, const Var<T>& input, std::size_t s) {
  const Shape is = input.shape();
  detail::require(s >= 1 && is.c % (s * s) == 0,
                  "pixel_shuffle: channels of " + is.str() + " not divisible by s^2 = " +
                      std::to_string(s * s));
  const Shape os{is.n, is.c / (s * s), is.h * s, is.w * s};
  auto for_each = [is, os, s](auto&& f) {
    for (std::size_t n = 0; n < os.n; ++n)
      for (std::size_t c = 0; c < os.c; ++c)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j) {
            const std::size_t src_c = c * s * s + i * s + j;
            for (std::size_t h = 0; h < is.h; ++h)
              for (std::size_t w = 0; w < is.w; ++w) {
                const std::size_t src = ((n * is.c + src_c) * is.h + h) * is.w + w;
                const std::size_t dst = ((n * os.c + c) * os.h + h * s + i) * os.w + w * s + j;
                f(src, dst);
              }
          }
  };
  Tensor<T> out(os);
  {
    const auto x = input.value().data();
    auto y = out.data();
    for_each([&](std::size_t src, std::size_t dst) { y[dst] = x[src]; });
  }
  return tape.record("pixel_shuffle", std::move(out), {&input}, [input, for_each](Node<T>& self) {
    const auto gy = self.value.grad();
    auto gx = detail::grad_of(input);
    for_each([&](std::size_t src, std::size_t dst) { gx[src] += gy[dst]; });
  });
}

template <class T>
Var<T> concat_channels(Tape<T>& tape, std::span<const Var<T>> inputs) {
  detail::require(!inputs.empty(), "concat_channels: no inputs");
  const Shape first = inputs[0].shape();
  std::size_t channels = 0;
  for (const auto& v : inputs) {
    const Shape s = v.shape();
    detail::require(s.n == first.n && s.h == first.h && s.w == first.w,
                    "concat_channels: " + s.str() + " incompatible with " + first.str());
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = first.plane();
  Tensor<T> out(os);
  std::size_t offset = 0;
  for (const auto& v : inputs) {
    const std::size_t block = v.shape().c * plane;
    for (std::size_t n = 0; n < os.n; ++n) {
      const auto src = v.value().data().subspan(n * block, block);
      std::copy(src.begin(), src.end(), out.data().begin() + (n * channels + offset) * plane);
    }
    offset += v.shape().c;
  }
  std::vector<Var<T>> kept(inputs.begin(), inputs.end());
  return tape.record("concat", std::move(out), inputs, [kept, channels, plane](Node<T>& self) {
    const auto gy = self.value.grad();
    std::size_t offset = 0;
    for (const auto& v : kept) {
      const std::size_t block = v.shape().c * plane;
      if (v.requires_grad()) {
        auto gx = detail::grad_of(v);
        for (std::size_t n = 0; n < v.shape().n; ++n) {
          const T* src = gy.data() + (n * channels + offset) * plane;
          T* dst = gx.data() + n * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += v.shape().c;
    }
  });
}

/// One term of a scaled sum; an absent weight means a unit, non-differentiable coefficient.
template <class T>
struct Term {
  Var<T> x;
  std::optional<Var<T>> weight;
};

/// out = sum_i weight_i * x_i, accumulated in term order. Terms whose scalar
/// weight is exactly zero contribute nothing to the value (their weight still
/// receives <grad, x_i>), so a zero-weighted branch is indistinguishable from
/// an absent one.
template <class T>
Var<T> scaled_sum(Tape<T>& tape, std::vector<Term<T>> terms) {
  detail::require(!terms.empty(), "scaled_sum: no terms");
  const Shape s = terms[0].x.shape();
  std::vector<Var<T>> inputs;
  for (const auto& t : terms) {
    detail::require(t.x.shape() == s, "scaled_sum: shape mismatch " + t.x.shape().str() +
                                          " vs " + s.str());
    inputs.push_back(t.x);
    if (t.weight) {
      detail::require(t.weight->shape().is_scalar(),
                      "scaled_sum: weight must be scalar, got " + t.weight->shape().str());
      inputs.push_back(*t.weight);
    }
  }
  Tensor<T> out(s);
  auto y = out.data();
  bool first = true;
  for (const auto& t : terms) {
    const auto x = t.x.value().data();
    if (t.weight) {
      const T c = t.weight->value()[0];
      if (c == T(0)) continue;
      if (first) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * x[i];
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
      }
    } else if (first) {
      std::copy(x.begin(), x.end(), y.begin());
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    }
    first = false;
  }
  return tape.record("scaled_sum", std::move(out), std::span<const Var<T>>(inputs),
                     [terms = std::move(terms)](Node<T>& self) {
                       const auto gy = self.value.grad();
                       for (const auto& t : terms) {
                         const auto x = t.x.value().data();
                         const T c = t.weight ? t.weight->value()[0] : T(1);
                         if (t.x.requires_grad()) {
                           auto gx = detail::grad_of(t.x);
                           for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += c * gy[i];
                         }
                         if (t.weight && t.weight->requires_grad()) {
                           T dot = T(0);
                           for (std::size_t i = 0; i < gy.size(); ++i) dot += gy[i] * x[i];
                           detail::grad_of(*t.weight)[0] += dot;
                         }
                       }
                     });
}

/// la * a + lb * b with scalar weights.
template <class T>
Var<T> weighted_add(Tape<T>& tape, const Var<T>& a, const Var<T>& b, const Var<T>& la,
                    const Var<T>& lb) {
  detail::require(a.shape() == b.shape(),
                  "weighted_add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  return scaled_sum<T>(tape, {{a, la}, {b, lb}});
}

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, const Var<T>& lambda) {
  return scaled_sum<T>(tape, {{x, lambda}});
}

/// Effective kernel w[o] = g[o] * v[o] / ||v[o]||_2 per output channel.
/// v: (C_out, C_in, k, k); g: C_out elements.
template <class T>
Var<T> weight_norm(Tape<T>& tape, const Var<T>& v, const Var<T>& g) {
  const Shape vs = v.shape();
  detail::require(g.shape().numel() == vs.n, "weight_norm: gain " + g.shape().str() +
                                                 " does not match kernel " + vs.str());
  const std::size_t fan = vs.c * vs.h * vs.w;
  std::vector<T> norms(vs.n);
  Tensor<T> out(vs);
  for (std::size_t o = 0; o < vs.n; ++o) {
    const auto row = v.value().data().subspan(o * fan, fan);
    T ss = T(0);
    for (T e : row) ss += e * e;
    const T norm = std::sqrt(ss);
    norms[o] = norm;
    // An all-zero direction has no defined orientation: the filter is zero
    // and passes no gradient.
    const T scale = norm == T(0) ? T(0) : g.value()[o] / norm;
    for (std::size_t i = 0; i < fan; ++i) out[o * fan + i] = scale * row[i];
  }
  return tape.record("weight_norm", std::move(out), {&v, &g}, [v, g, norms, fan](Node<T>& self) {
    const auto gw = self.value.grad();
    const auto vd = v.value().data();
    for (std::size_t o = 0; o < norms.size(); ++o) {
      const T norm = norms[o];
      if (norm == T(0)) continue;
      T dot = T(0);
      for (std::size_t i = 0; i < fan; ++i) dot += gw[o * fan + i] * vd[o * fan + i];
      if (g.requires_grad()) detail::grad_of(g)[o] += dot / norm;
      if (v.requires_grad()) {
        auto gv = detail::grad_of(v);
        const T gain = g.value()[o];
        const T proj = dot / (norm * norm);
        for (std::size_t i = 0; i < fan; ++i) {
          gv[o * fan + i] += gain / norm * (gw[o * fan + i] - proj * vd[o * fan + i]);
        }
      }
    }
  });
}

template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  T s = T(0);
  for (T e : x.value().data()) s += e;
  return tape.record("sum", Tensor<T>::scalar(s), {&x}, [x](Node<T>& self) {
    const T g = self.value.grad()[0];
    auto gx = detail::grad_of(x);
    for (auto& e : gx) e += g;
  });
}

/// Mean absolute error; subgradient sign(pred - target) / count with sign(0) = 0.
template <class T>
Var<T> l1_loss(Tape<T>& tape, const Var<T>& pred, const Var<T>& target) {
  detail::require(pred.shape() == target.shape(), "l1_loss: shape mismatch " +
                                                      pred.shape().str() + " vs " +
                                                      target.shape().str());
  const auto p = pred.value().data();
  const auto t = target.value().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const double count = static_cast<double>(p.size());
  return tape.record("l1_loss", Tensor<T>::scalar(static_cast<T>(acc / count)), {&pred, &target},
                     [pred, target, count](Node<T>& self) {
                       const T g = self.value.grad()[0] / static_cast<T>(count);
                       const auto p = pred.value().data();
                       const auto t = target.value().data();
                       auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
                       if (pred.requires_grad()) {
                         auto gp = detail::grad_of(pred);
                         for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * sign(p[i] - t[i]);
                       }
                       if (target.requires_grad()) {
                         auto gt = detail::grad_of(target);
                         for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= g * sign(p[i] - t[i]);
                       }
                     });
}

}  // namespace awsrn
