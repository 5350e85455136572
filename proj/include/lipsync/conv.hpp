#pragma once

#include <Eigen/Core>

#include "lipsync/ops.hpp"

namespace lipsync::core {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXd;

struct ConvGeom {
  int64_t cin, hin, win;
  int kh, kw, sh, sw, ph, pw;
  int64_t hout, wout;

  ConvGeom(const Shape& x, int64_t cin_, int kh_, int kw_, int sh_, int sw_, int ph_, int pw_)
      : cin(cin_), hin(x.h), win(x.w), kh(kh_), kw(kw_), sh(sh_), sw(sw_), ph(ph_), pw(pw_) {
    hout = (hin + 2 * ph - kh) / sh + 1;
    wout = (win + 2 * pw - kw) / sw + 1;
    check_arg(hout >= 1 && wout >= 1, "conv: output would be empty");
  }
  int64_t k() const { return cin * kh * kw; }
  int64_t p() const { return hout * wout; }
};

// Unfold one sample (cin,hin,win) into a (cin*kh*kw) x (hout*wout) matrix.
inline void im2col(const double* x, const ConvGeom& g, ColMat& col) {
  col.setZero(g.k(), g.p());
  for (int64_t c = 0; c < g.cin; ++c) {
    const double* plane = x + c * g.hin * g.win;
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        int64_t row = (c * g.kh + ki) * g.kw + kj;
        for (int64_t i = 0; i < g.hout; ++i) {
          int64_t hi = i * g.sh + ki - g.ph;
          if (hi < 0 || hi >= g.hin) continue;
          for (int64_t j = 0; j < g.wout; ++j) {
            int64_t wj = j * g.sw + kj - g.pw;
            if (wj < 0 || wj >= g.win) continue;
            col(row, i * g.wout + j) = plane[hi * g.win + wj];
          }
        }
      }
  }
}

// Adjoint of im2col: fold a (cin*kh*kw) x (hout*wout) matrix back, accumulating.
inline void col2im_acc(const ColMat& col, const ConvGeom& g, double* x) {
  for (int64_t c = 0; c < g.cin; ++c) {
    double* plane = x + c * g.hin * g.win;
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        int64_t row = (c * g.kh + ki) * g.kw + kj;
        for (int64_t i = 0; i < g.hout; ++i) {
          int64_t hi = i * g.sh + ki - g.ph;
          if (hi < 0 || hi >= g.hin) continue;
          for (int64_t j = 0; j < g.wout; ++j) {
            int64_t wj = j * g.sw + kj - g.pw;
            if (wj < 0 || wj >= g.win) continue;
            plane[hi * g.win + wj] += col(row, i * g.wout + j);
          }
        }
      }
  }
}

}  // namespace detail

// 2-D convolution, weight layout (cout, cin, kh, kw), bias (1, cout, 1, 1) or null.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int sh, int sw, int ph, int pw) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  check_arg(xs.c == ws.c, "conv2d: channel mismatch x.c=" + std::to_string(xs.c) +
                              " w.cin=" + std::to_string(ws.c));
  if (b) check_arg(b->value.shape() == Shape(1, ws.n, 1, 1), "conv2d: bad bias shape");
  detail::ConvGeom g(xs, xs.c, static_cast<int>(ws.h), static_cast<int>(ws.w), sh, sw, ph, pw);
  int64_t cout = ws.n;
  Tensor out(Shape{xs.n, cout, g.hout, g.wout});

  Eigen::Map<const detail::RowMat> wm(w->value.data(), cout, g.k());
  detail::ColMat col;
  for (int64_t n = 0; n < xs.n; ++n) {
    detail::im2col(x->value.data() + n * xs.c * xs.h * xs.w, g, col);
    Eigen::Map<detail::RowMat> om(out.data() + n * cout * g.p(), cout, g.p());
    om.noalias() = wm * col;
  }
  if (b) {
    const double* pb = b->value.data();
    double* po = out.data();
    for (int64_t n = 0; n < xs.n; ++n)
      for (int64_t c = 0; c < cout; ++c) {
        double bv = pb[c];
        double* plane = po + (n * cout + c) * g.p();
        for (int64_t i = 0; i < g.p(); ++i) plane[i] += bv;
      }
  }

  auto backward = [g, cout, xs](Node& self) {
    Node* nx = self.parents[0].get();
    Node* nw = self.parents[1].get();
    Node* nb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    Eigen::Map<const detail::RowMat> wm(nw->value.data(), cout, g.k());
    detail::ColMat col, gcol;
    for (int64_t n = 0; n < xs.n; ++n) {
      Eigen::Map<const detail::RowMat> gm(self.grad.data() + n * cout * g.p(), cout, g.p());
      if (nw->requires_grad) {
        detail::im2col(nx->value.data() + n * xs.c * xs.h * xs.w, g, col);
        Eigen::Map<detail::RowMat> gwm(nw->ensure_grad().data(), cout, g.k());
        gwm.noalias() += gm * col.transpose();
      }
      if (nx->requires_grad) {
        gcol.noalias() = wm.transpose() * gm;
        detail::col2im_acc(gcol, g, nx->ensure_grad().data() + n * xs.c * xs.h * xs.w);
      }
    }
    if (nb && nb->requires_grad) {
      double* gb = nb->ensure_grad().data();
      const double* gr = self.grad.data();
      for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t c = 0; c < cout; ++c) {
          const double* plane = gr + (n * cout + c) * g.p();
          double s = 0;
          for (int64_t i = 0; i < g.p(); ++i) s += plane[i];
          gb[c] += s;
        }
    }
  };
  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents), backward, "conv2d");
}

// Transposed 2-D convolution, weight layout (cin, cout, kh, kw).
// Output spatial size: (in-1)*stride - 2*pad + kernel.
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int sh, int sw, int ph,
                            int pw) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  check_arg(xs.c == ws.n, "conv_transpose2d: channel mismatch");
  int64_t cout = ws.c;
  int kh = static_cast<int>(ws.h), kw = static_cast<int>(ws.w);
  int64_t hout = (xs.h - 1) * sh - 2 * ph + kh;
  int64_t wout = (xs.w - 1) * sw - 2 * pw + kw;
  check_arg(hout >= 1 && wout >= 1, "conv_transpose2d: output would be empty");
  if (b) check_arg(b->value.shape() == Shape(1, cout, 1, 1), "conv_transpose2d: bad bias shape");

  // Geometry of the *forward* conv this op is adjoint to: big image
  // (cout,hout,wout) convolved down to (cin,hin,win).
  detail::ConvGeom g(Shape{1, cout, hout, wout}, cout, kh, kw, sh, sw, ph, pw);
  check_arg(g.hout == xs.h && g.wout == xs.w, "conv_transpose2d: inconsistent geometry");

  Tensor out(Shape{xs.n, cout, hout, wout});
  Eigen::Map<const detail::RowMat> wm(w->value.data(), xs.c, g.k());  // cin x (cout*kh*kw)
  detail::ColMat col;
  for (int64_t n = 0; n < xs.n; ++n) {
    Eigen::Map<const detail::RowMat> xm(x->value.data() + n * xs.c * xs.h * xs.w, xs.c, g.p());
    col.noalias() = wm.transpose() * xm;  // (cout*kh*kw) x (hin*win)
    detail::col2im_acc(col, g, out.data() + n * cout * hout * wout);
  }
  if (b) {
    const double* pb = b->value.data();
    for (int64_t n = 0; n < xs.n; ++n)
      for (int64_t c = 0; c < cout; ++c) {
        double bv = pb[c];
        double* plane = out.data() + (n * cout + c) * hout * wout;
        for (int64_t i = 0; i < hout * wout; ++i) plane[i] += bv;
      }
  }

  auto backward = [g, xs, cout, hout, wout](Node& self) {
    Node* nx = self.parents[0].get();
    Node* nw = self.parents[1].get();
    Node* nb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    Eigen::Map<const detail::RowMat> wm(nw->value.data(), xs.c, g.k());
    detail::ColMat col;
    for (int64_t n = 0; n < xs.n; ++n) {
      detail::im2col(self.grad.data() + n * cout * hout * wout, g, col);
      if (nx->requires_grad) {
        // grad_x = conv(grad_out, w): cin x p
        Eigen::Map<detail::RowMat> gxm(nx->ensure_grad().data() + n * xs.c * xs.h * xs.w, xs.c,
                                       g.p());
        gxm.noalias() += wm * col;
      }
      if (nw->requires_grad) {
        Eigen::Map<const detail::RowMat> xm(nx->value.data() + n * xs.c * xs.h * xs.w, xs.c,
                                            g.p());
        Eigen::Map<detail::RowMat> gwm(nw->ensure_grad().data(), xs.c, g.k());
        gwm.noalias() += xm * col.transpose();
      }
    }
    if (nb && nb->requires_grad) {
      double* gb = nb->ensure_grad().data();
      const double* gr = self.grad.data();
      for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t c = 0; c < cout; ++c) {
          const double* plane = gr + (n * cout + c) * hout * wout;
          double s = 0;
          for (int64_t i = 0; i < hout * wout; ++i) s += plane[i];
          gb[c] += s;
        }
    }
  };
  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents), backward, "conv_transpose2d");
}

// Fully connected layer on (N, cin, 1, 1) inputs; weight (cout, cin, 1, 1).
inline Var linear(const Var& x, const Var& w, const Var& b) {
  const Shape& xs = x->value.shape();
  check_arg(xs.h == 1 && xs.w == 1, "linear: expected (N,C,1,1) input, got " + xs.str());
  return conv2d(x, w, b, 1, 1, 0, 0);
}

}  // namespace lipsync::core
