#pragma once

#include <algorithm>
#include <cmath>

#include "lipsync/autograd.hpp"

namespace lipsync::core {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  auto pick = [](int64_t x, int64_t y, const char* what) {
    check_arg(x == y || x == 1 || y == 1, std::string("broadcast: incompatible ") + what);
    return std::max(x, y);
  };
  return Shape{pick(a.n, b.n, "n"), pick(a.c, b.c, "c"), pick(a.h, b.h, "h"),
               pick(a.w, b.w, "w")};
}

namespace detail {

// Map an index in the broadcast output back into a (possibly size-1) operand.
struct BcastIndex {
  int64_t cn, cc, ch, cw;  // 0 if that dim is broadcast, else 1
  Shape s;
  explicit BcastIndex(const Shape& operand, const Shape& out)
      : cn(operand.n == out.n ? 1 : 0),
        cc(operand.c == out.c ? 1 : 0),
        ch(operand.h == out.h ? 1 : 0),
        cw(operand.w == out.w ? 1 : 0),
        s(operand) {}
  int64_t operator()(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * cn * s.c + c * cc) * s.h + h * ch) * s.w + w * cw;
  }
};

template <class Fn>
inline void for_each_index(const Shape& s, Fn&& fn) {
  int64_t i = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w) fn(i++, n, c, h, w);
}

}  // namespace detail

// ---- binary elementwise with broadcasting ----

namespace detail {

enum class BinOp { Add, Sub, Mul, Div };

inline Var binary(const Var& a, const Var& b, BinOp op, const char* name) {
  Shape os = broadcast_shape(a->value.shape(), b->value.shape());
  Tensor out(os);
  BcastIndex ia(a->value.shape(), os), ib(b->value.shape(), os);
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  if (a->value.shape() == os && b->value.shape() == os) {
    int64_t n = os.numel();
    switch (op) {
      case BinOp::Add: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
      case BinOp::Sub: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
      case BinOp::Mul: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
      case BinOp::Div: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i]; break;
    }
  } else {
    for_each_index(os, [&](int64_t i, int64_t n, int64_t c, int64_t h, int64_t w) {
      double va = pa[ia(n, c, h, w)], vb = pb[ib(n, c, h, w)];
      switch (op) {
        case BinOp::Add: po[i] = va + vb; break;
        case BinOp::Sub: po[i] = va - vb; break;
        case BinOp::Mul: po[i] = va * vb; break;
        case BinOp::Div: po[i] = va / vb; break;
      }
    });
  }
  auto backward = [op, os, ia, ib](Node& self) {
    Node* na = self.parents[0].get();
    Node* nb = self.parents[1].get();
    const double* g = self.grad.data();
    const double* pa = na->value.data();
    const double* pb = nb->value.data();
    double* ga = na->requires_grad ? na->ensure_grad().data() : nullptr;
    double* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
    for_each_index(os, [&](int64_t i, int64_t n, int64_t c, int64_t h, int64_t w) {
      int64_t ja = ia(n, c, h, w), jb = ib(n, c, h, w);
      switch (op) {
        case BinOp::Add:
          if (ga) ga[ja] += g[i];
          if (gb) gb[jb] += g[i];
          break;
        case BinOp::Sub:
          if (ga) ga[ja] += g[i];
          if (gb) gb[jb] -= g[i];
          break;
        case BinOp::Mul:
          if (ga) ga[ja] += g[i] * pb[jb];
          if (gb) gb[jb] += g[i] * pa[ja];
          break;
        case BinOp::Div: {
          double inv = 1.0 / pb[jb];
          if (ga) ga[ja] += g[i] * inv;
          if (gb) gb[jb] -= g[i] * pa[ja] * inv * inv;
          break;
        }
      }
    });
  };
  return make_node(std::move(out), {a, b}, backward, name);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinOp::Add, "add"); }
inline Var sub(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinOp::Sub, "sub"); }
inline Var mul(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinOp::Mul, "mul"); }
inline Var divide(const Var& a, const Var& b) { return detail::binary(a, b, detail::BinOp::Div, "div"); }

// ---- unary elementwise ----

namespace detail {

template <class F, class DF>
inline Var unary(const Var& x, F f, DF df, const char* name) {
  Tensor out(x->value.shape());
  const double* px = x->value.data();
  double* po = out.data();
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
  auto backward = [df](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    const double* g = self.grad.data();
    const double* px = nx->value.data();
    const double* py = self.value.data();
    double* gx = nx->ensure_grad().data();
    int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * df(px[i], py[i]);
  };
  return make_node(std::move(out), {x}, backward, name);
}

}  // namespace detail

inline Var relu(const Var& x) {
  return detail::unary(x, [](double v) { return v > 0 ? v : 0.0; },
                       [](double v, double) { return v > 0 ? 1.0 : 0.0; }, "relu");
}

inline Var leaky_relu(const Var& x, double slope = 0.2) {
  return detail::unary(x, [slope](double v) { return v > 0 ? v : slope * v; },
                       [slope](double v, double) { return v > 0 ? 1.0 : slope; }, "leaky_relu");
}

inline Var sigmoid(const Var& x) {
  return detail::unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                       [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var vlog(const Var& x) {
  return detail::unary(x, [](double v) { return std::log(v); },
                       [](double v, double) { return 1.0 / v; }, "log");
}

inline Var vsqrt(const Var& x) {
  return detail::unary(x, [](double v) { return std::sqrt(v); },
                       [](double, double y) { return 0.5 / y; }, "sqrt");
}

inline Var vabs(const Var& x) {
  return detail::unary(x, [](double v) { return std::abs(v); },
                       [](double v, double) { return v > 0 ? 1.0 : v < 0 ? -1.0 : 0.0; }, "abs");
}

inline Var clamp(const Var& x, double lo, double hi) {
  return detail::unary(x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
                       [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; },
                       "clamp");
}

inline Var scalar_mul(const Var& x, double k) {
  return detail::unary(x, [k](double v) { return k * v; },
                       [k](double, double) { return k; }, "scalar_mul");
}

inline Var scalar_add(const Var& x, double k) {
  return detail::unary(x, [k](double v) { return v + k; },
                       [](double, double) { return 1.0; }, "scalar_add");
}

inline Var neg(const Var& x) { return scalar_mul(x, -1.0); }

// ---- reductions ----

struct Dims {
  bool n = false, c = false, h = false, w = false;
  static Dims spatial() { return {false, false, true, true}; }
  static Dims channel() { return {false, true, false, false}; }
  static Dims all() { return {true, true, true, true}; }
  static Dims batch_spatial() { return {true, false, true, true}; }
};

namespace detail {

inline Shape reduced_shape(const Shape& s, Dims d) {
  return Shape{d.n ? 1 : s.n, d.c ? 1 : s.c, d.h ? 1 : s.h, d.w ? 1 : s.w};
}

inline Var reduce_sum_impl(const Var& x, Dims d, bool mean, const char* name) {
  Shape xs = x->value.shape();
  Shape os = reduced_shape(xs, d);
  double scale = mean ? 1.0 / static_cast<double>(xs.numel() / os.numel()) : 1.0;
  Tensor out(os);
  BcastIndex map(os, xs);  // out index for each input position
  const double* px = x->value.data();
  double* po = out.data();
  for_each_index(xs, [&](int64_t i, int64_t n, int64_t c, int64_t h, int64_t w) {
    po[map(n, c, h, w)] += px[i] * scale;
  });
  auto backward = [xs, os, map, scale](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    const double* g = self.grad.data();
    double* gx = nx->ensure_grad().data();
    for_each_index(xs, [&](int64_t i, int64_t n, int64_t c, int64_t h, int64_t w) {
      gx[i] += g[map(n, c, h, w)] * scale;
    });
  };
  return make_node(std::move(out), {x}, backward, name);
}

}  // namespace detail

inline Var reduce_sum(const Var& x, Dims d) {
  return detail::reduce_sum_impl(x, d, false, "reduce_sum");
}
inline Var reduce_mean(const Var& x, Dims d) {
  return detail::reduce_sum_impl(x, d, true, "reduce_mean");
}

inline Var reduce_max(const Var& x, Dims d) {
  Shape xs = x->value.shape();
  Shape os = detail::reduced_shape(xs, d);
  Tensor out(os);
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(os.numel()), -1);
  detail::BcastIndex map(os, xs);
  const double* px = x->value.data();
  double* po = out.data();
  detail::for_each_index(xs, [&](int64_t i, int64_t n, int64_t c, int64_t h, int64_t w) {
    int64_t o = map(n, c, h, w);
    if ((*argmax)[static_cast<size_t>(o)] < 0 || px[i] > po[o]) {
      po[o] = px[i];
      (*argmax)[static_cast<size_t>(o)] = i;
    }
  });
  auto backward = [argmax](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    const double* g = self.grad.data();
    double* gx = nx->ensure_grad().data();
    for (size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += g[static_cast<int64_t>(o)];
  };
  return make_node(std::move(out), {x}, backward, "reduce_max");
}

// ---- shape ops ----

inline Var reshape(const Var& x, Shape s) {
  Tensor out = x->value.reshaped(s);
  auto backward = [](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    nx->accumulate(self.grad.reshaped(nx->value.shape()));
  };
  return make_node(std::move(out), {x}, backward, "reshape");
}

inline Var concat_c(const std::vector<Var>& xs) {
  check_arg(!xs.empty(), "concat_c: empty input list");
  Shape s0 = xs[0]->value.shape();
  int64_t ctotal = 0;
  for (const auto& x : xs) {
    const Shape& s = x->value.shape();
    check_arg(s.n == s0.n && s.h == s0.h && s.w == s0.w, "concat_c: shape mismatch");
    ctotal += s.c;
  }
  Tensor out(Shape{s0.n, ctotal, s0.h, s0.w});
  int64_t plane = s0.h * s0.w;
  for (int64_t n = 0; n < s0.n; ++n) {
    int64_t coff = 0;
    for (const auto& x : xs) {
      const Shape& s = x->value.shape();
      const double* src = x->value.data() + n * s.c * plane;
      double* dst = out.data() + (n * ctotal + coff) * plane;
      std::copy(src, src + s.c * plane, dst);
      coff += s.c;
    }
  }
  auto backward = [s0, ctotal, plane](Node& self) {
    const double* g = self.grad.data();
    int64_t coff = 0;
    for (auto& p : self.parents) {
      const Shape& s = p->value.shape();
      if (p->requires_grad) {
        double* gp = p->ensure_grad().data();
        for (int64_t n = 0; n < s0.n; ++n) {
          const double* src = g + (n * ctotal + coff) * plane;
          double* dst = gp + n * s.c * plane;
          for (int64_t i = 0; i < s.c * plane; ++i) dst[i] += src[i];
        }
      }
      coff += s.c;
    }
  };
  return make_node(std::move(out), xs, backward, "concat_c");
}

inline Var slice_c(const Var& x, int64_t c0, int64_t c1) {
  const Shape& s = x->value.shape();
  check_arg(0 <= c0 && c0 < c1 && c1 <= s.c, "slice_c: bad channel range");
  Tensor out(Shape{s.n, c1 - c0, s.h, s.w});
  int64_t plane = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n) {
    const double* src = x->value.data() + (n * s.c + c0) * plane;
    double* dst = out.data() + n * (c1 - c0) * plane;
    std::copy(src, src + (c1 - c0) * plane, dst);
  }
  auto backward = [s, c0, c1, plane](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    double* gx = nx->ensure_grad().data();
    const double* g = self.grad.data();
    for (int64_t n = 0; n < s.n; ++n) {
      double* dst = gx + (n * s.c + c0) * plane;
      const double* src = g + n * (c1 - c0) * plane;
      for (int64_t i = 0; i < (c1 - c0) * plane; ++i) dst[i] += src[i];
    }
  };
  return make_node(std::move(out), {x}, backward, "slice_c");
}

inline Var slice_h(const Var& x, int64_t h0, int64_t h1) {
  const Shape& s = x->value.shape();
  check_arg(0 <= h0 && h0 < h1 && h1 <= s.h, "slice_h: bad row range");
  Tensor out(Shape{s.n, s.c, h1 - h0, s.w});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const double* src = x->value.data() + ((n * s.c + c) * s.h + h0) * s.w;
      double* dst = out.data() + ((n * s.c + c) * (h1 - h0)) * s.w;
      std::copy(src, src + (h1 - h0) * s.w, dst);
    }
  auto backward = [s, h0, h1](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    double* gx = nx->ensure_grad().data();
    const double* g = self.grad.data();
    for (int64_t n = 0; n < s.n; ++n)
      for (int64_t c = 0; c < s.c; ++c) {
        double* dst = gx + ((n * s.c + c) * s.h + h0) * s.w;
        const double* src = g + ((n * s.c + c) * (h1 - h0)) * s.w;
        for (int64_t i = 0; i < (h1 - h0) * s.w; ++i) dst[i] += src[i];
      }
  };
  return make_node(std::move(out), {x}, backward, "slice_h");
}

inline Var maxpool2d(const Var& x, int k, int stride) {
  const Shape& s = x->value.shape();
  check_arg(s.h >= k && s.w >= k, "maxpool2d: window larger than input");
  int64_t ho = (s.h - k) / stride + 1;
  int64_t wo = (s.w - k) / stride + 1;
  Tensor out(Shape{s.n, s.c, ho, wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const double* px = x->value.data();
  double* po = out.data();
  int64_t o = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t i = 0; i < ho; ++i)
        for (int64_t j = 0; j < wo; ++j, ++o) {
          double best = -1e300;
          int64_t besti = -1;
          for (int64_t di = 0; di < k; ++di)
            for (int64_t dj = 0; dj < k; ++dj) {
              int64_t idx = ((n * s.c + c) * s.h + i * stride + di) * s.w + j * stride + dj;
              if (px[idx] > best) {
                best = px[idx];
                besti = idx;
              }
            }
          po[o] = best;
          (*argmax)[static_cast<size_t>(o)] = besti;
        }
  auto backward = [argmax](Node& self) {
    Node* nx = self.parents[0].get();
    if (!nx->requires_grad) return;
    const double* g = self.grad.data();
    double* gx = nx->ensure_grad().data();
    for (size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += g[static_cast<int64_t>(i)];
  };
  return make_node(std::move(out), {x}, backward, "maxpool2d");
}

// ---- non-graph helpers ----

inline double item(const Var& v) { return v->value.item(); }

}  // namespace lipsync::core
