#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace sgsln {

namespace {

template <class S>
const S* ptr(const TensorT<S>& t) {
  return t.data().data();
}

template <class S>
S stable_sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  S e = std::exp(x);
  return e / (S(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w,
                  const std::optional<TensorT<S>>& bias, int stride, int padding) {
  check(x.rank() == 4, "conv2d: input must be rank 4 [N,Cin,H,W], got ", shape_str(x.shape()));
  check(w.rank() == 4, "conv2d: weight must be rank 4 [Cout,Cin,k,k], got ", shape_str(w.shape()));
  const int n_batch = x.dim(0), c_in = x.dim(1), h_in = x.dim(2), w_in = x.dim(3);
  const int c_out = w.dim(0), k = w.dim(2);
  check(w.dim(2) == w.dim(3), "conv2d: kernel must be square, got ", w.dim(2), "x", w.dim(3));
  check(k % 2 == 1, "conv2d: kernel size must be odd, got ", k);
  check(w.dim(1) == c_in, "conv2d: weight input-channel dim is ", w.dim(1),
        " but input channel dim is ", c_in);
  check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2, got ", stride);
  check(padding >= 0, "conv2d: negative padding ", padding);
  if (bias) {
    check(bias->rank() == 1 && bias->dim(0) == c_out, "conv2d: bias shape ",
          shape_str(bias->shape()), " does not match output channels ", c_out);
  }
  const int h_out = (h_in + 2 * padding - k) / stride + 1;
  const int w_out = (w_in + 2 * padding - k) / stride + 1;
  check(h_out >= 1 && w_out >= 1, "conv2d: output extent would be ", h_out, "x", w_out,
        " for input ", h_in, "x", w_in, ", kernel ", k, ", padding ", padding);

  std::vector<S> out(size_t(n_batch) * c_out * h_out * w_out);
  const S* xp = ptr(x);
  const S* wp = ptr(w);
  const S* bp = bias ? ptr(*bias) : nullptr;

  size_t o = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < c_out; ++co) {
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow, ++o) {
          S acc = bp ? bp[co] : S(0);
          for (int ci = 0; ci < c_in; ++ci) {
            const S* xc = xp + (size_t(n) * c_in + ci) * h_in * w_in;
            const S* wc = wp + (size_t(co) * c_in + ci) * k * k;
            for (int kh = 0; kh < k; ++kh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= h_in) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = ow * stride - padding + kw;
                if (iw < 0 || iw >= w_in) continue;
                acc += xc[size_t(ih) * w_in + iw] * wc[size_t(kh) * k + kw];
              }
            }
          }
          out[o] = acc;
        }
      }
    }
  }

  TapeT<S>* tape = joint_tape<S>({&x, &w, bias ? &*bias : nullptr});
  Shape out_shape{n_batch, c_out, h_out, w_out};
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));

  const int xn = x.node(), wn = w.node(), bn = bias && bias->tracked() ? bias->node() : -1;
  auto xs = x.storage();
  auto ws = w.storage();
  return tape->emit(std::move(out_shape), std::move(out),
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* dx = xn >= 0 ? &tp.grad_buf(xn) : nullptr;
    std::vector<S>* dw = wn >= 0 ? &tp.grad_buf(wn) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    const S* xp2 = xs->data();
    const S* wp2 = ws->data();
    size_t o2 = 0;
    for (int n = 0; n < n_batch; ++n) {
      for (int co = 0; co < c_out; ++co) {
        for (int oh = 0; oh < h_out; ++oh) {
          for (int ow = 0; ow < w_out; ++ow, ++o2) {
            const S go = g[o2];
            if (go == S(0)) continue;
            if (db) (*db)[size_t(co)] += go;
            for (int ci = 0; ci < c_in; ++ci) {
              const size_t xbase = (size_t(n) * c_in + ci) * h_in * w_in;
              const size_t wbase = (size_t(co) * c_in + ci) * k * k;
              for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * stride - padding + kh;
                if (ih < 0 || ih >= h_in) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int iw = ow * stride - padding + kw;
                  if (iw < 0 || iw >= w_in) continue;
                  const size_t xi = xbase + size_t(ih) * w_in + iw;
                  const size_t wi = wbase + size_t(kh) * k + kw;
                  if (dw) (*dw)[wi] += go * xp2[xi];
                  if (dx) (*dx)[xi] += go * wp2[wi];
                }
              }
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv1d

template <class S>
TensorT<S> conv1d(const TensorT<S>& x, const TensorT<S>& w,
                  const std::optional<TensorT<S>>& bias, int padding) {
  check(x.rank() == 3, "conv1d: input must be rank 3 [N,Cin,L], got ", shape_str(x.shape()));
  check(w.rank() == 3, "conv1d: weight must be rank 3 [Cout,Cin,k], got ", shape_str(w.shape()));
  const int n_batch = x.dim(0), c_in = x.dim(1), l_in = x.dim(2);
  const int c_out = w.dim(0), k = w.dim(2);
  check(k % 2 == 1, "conv1d: kernel size must be odd, got ", k);
  check(w.dim(1) == c_in, "conv1d: weight input-channel dim is ", w.dim(1),
        " but input channel dim is ", c_in);
  check(padding >= 0, "conv1d: negative padding ", padding);
  if (bias) {
    check(bias->rank() == 1 && bias->dim(0) == c_out, "conv1d: bias shape ",
          shape_str(bias->shape()), " does not match output channels ", c_out);
  }
  const int l_out = l_in + 2 * padding - k + 1;
  check(l_out >= 1, "conv1d: output length would be ", l_out, " for input length ", l_in,
        ", kernel ", k, ", padding ", padding);

  std::vector<S> out(size_t(n_batch) * c_out * l_out);
  const S* xp = ptr(x);
  const S* wp = ptr(w);
  const S* bp = bias ? ptr(*bias) : nullptr;
  size_t o = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < c_out; ++co) {
      for (int ol = 0; ol < l_out; ++ol, ++o) {
        S acc = bp ? bp[co] : S(0);
        for (int ci = 0; ci < c_in; ++ci) {
          const S* xc = xp + (size_t(n) * c_in + ci) * l_in;
          const S* wc = wp + (size_t(co) * c_in + ci) * k;
          for (int kk = 0; kk < k; ++kk) {
            const int il = ol - padding + kk;
            if (il < 0 || il >= l_in) continue;
            acc += xc[il] * wc[kk];
          }
        }
        out[o] = acc;
      }
    }
  }

  TapeT<S>* tape = joint_tape<S>({&x, &w, bias ? &*bias : nullptr});
  Shape out_shape{n_batch, c_out, l_out};
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));

  const int xn = x.node(), wn = w.node(), bn = bias && bias->tracked() ? bias->node() : -1;
  auto xs = x.storage();
  auto ws = w.storage();
  return tape->emit(std::move(out_shape), std::move(out),
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* dx = xn >= 0 ? &tp.grad_buf(xn) : nullptr;
    std::vector<S>* dw = wn >= 0 ? &tp.grad_buf(wn) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    const S* xp2 = xs->data();
    const S* wp2 = ws->data();
    size_t o2 = 0;
    for (int n = 0; n < n_batch; ++n) {
      for (int co = 0; co < c_out; ++co) {
        for (int ol = 0; ol < l_out; ++ol, ++o2) {
          const S go = g[o2];
          if (go == S(0)) continue;
          if (db) (*db)[size_t(co)] += go;
          for (int ci = 0; ci < c_in; ++ci) {
            const size_t xbase = (size_t(n) * c_in + ci) * l_in;
            const size_t wbase = (size_t(co) * c_in + ci) * k;
            for (int kk = 0; kk < k; ++kk) {
              const int il = ol - padding + kk;
              if (il < 0 || il >= l_in) continue;
              if (dw) (*dw)[wbase + kk] += go * xp2[xbase + il];
              if (dx) (*dx)[xbase + il] += go * wp2[wbase + kk];
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// pool

template <class S>
TensorT<S> pool(const TensorT<S>& x, PoolAxes axes, PoolMode mode, PoolWindow window) {
  check(x.rank() == 4, "pool: input must be rank 4 [N,C,H,W], got ", shape_str(x.shape()));
  const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const S* xp = ptr(x);
  TapeT<S>* tape = joint_tape<S>({&x});
  const int xn = x.node();

  if (window == PoolWindow::window2x2) {
    check(axes == PoolAxes::spatial, "pool: 2x2 window applies to spatial axes only");
    check(h % 2 == 0, "pool: 2x2 window requires even height, got ", h);
    check(w % 2 == 0, "pool: 2x2 window requires even width, got ", w);
    const int ho = h / 2, wo = w / 2;
    std::vector<S> out(size_t(n_batch) * c * ho * wo);
    std::vector<size_t> argmax(mode == PoolMode::max ? out.size() : 0);
    size_t o = 0;
    for (int n = 0; n < n_batch; ++n) {
      for (int cc = 0; cc < c; ++cc) {
        const S* plane = xp + (size_t(n) * c + cc) * h * w;
        const size_t pbase = (size_t(n) * c + cc) * h * w;
        for (int oh = 0; oh < ho; ++oh) {
          for (int ow = 0; ow < wo; ++ow, ++o) {
            const int ih = oh * 2, iw = ow * 2;
            if (mode == PoolMode::avg) {
              S acc = plane[size_t(ih) * w + iw];
              acc += plane[size_t(ih) * w + iw + 1];
              acc += plane[size_t(ih + 1) * w + iw];
              acc += plane[size_t(ih + 1) * w + iw + 1];
              out[o] = acc / S(4);
            } else {
              S best = plane[size_t(ih) * w + iw];
              size_t bi = size_t(ih) * w + iw;
              for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                  const size_t i = size_t(ih + dy) * w + (iw + dx);
                  if (plane[i] > best) {
                    best = plane[i];
                    bi = i;
                  }
                }
              }
              out[o] = best;
              argmax[o] = pbase + bi;
            }
          }
        }
      }
    }
    Shape out_shape{n_batch, c, ho, wo};
    if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
    return tape->emit(std::move(out_shape), std::move(out),
                      [=, am = std::move(argmax)](const std::vector<S>& g, TapeT<S>& tp) {
      std::vector<S>& dx = tp.grad_buf(xn);
      if (mode == PoolMode::max) {
        for (size_t i = 0; i < g.size(); ++i) dx[am[i]] += g[i];
        return;
      }
      size_t o2 = 0;
      for (int n = 0; n < n_batch; ++n) {
        for (int cc = 0; cc < c; ++cc) {
          const size_t pbase = (size_t(n) * c + cc) * h * w;
          for (int oh = 0; oh < ho; ++oh) {
            for (int ow = 0; ow < wo; ++ow, ++o2) {
              const S q = g[o2] / S(4);
              dx[pbase + size_t(oh * 2) * w + ow * 2] += q;
              dx[pbase + size_t(oh * 2) * w + ow * 2 + 1] += q;
              dx[pbase + size_t(oh * 2 + 1) * w + ow * 2] += q;
              dx[pbase + size_t(oh * 2 + 1) * w + ow * 2 + 1] += q;
            }
          }
        }
      }
    });
  }

  if (axes == PoolAxes::spatial) {
    // global over H,W -> [N,C]
    const size_t hw = size_t(h) * w;
    std::vector<S> out(size_t(n_batch) * c);
    std::vector<size_t> argmax(mode == PoolMode::max ? out.size() : 0);
    for (int n = 0; n < n_batch; ++n) {
      for (int cc = 0; cc < c; ++cc) {
        const size_t base = (size_t(n) * c + cc) * hw;
        const size_t o = size_t(n) * c + cc;
        if (mode == PoolMode::avg) {
          S acc = S(0);
          for (size_t i = 0; i < hw; ++i) acc += xp[base + i];
          out[o] = acc / S(hw);
        } else {
          S best = xp[base];
          size_t bi = 0;
          for (size_t i = 1; i < hw; ++i) {
            if (xp[base + i] > best) {
              best = xp[base + i];
              bi = i;
            }
          }
          out[o] = best;
          argmax[o] = base + bi;
        }
      }
    }
    Shape out_shape{n_batch, c};
    if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
    return tape->emit(std::move(out_shape), std::move(out),
                      [=, am = std::move(argmax)](const std::vector<S>& g, TapeT<S>& tp) {
      std::vector<S>& dx = tp.grad_buf(xn);
      if (mode == PoolMode::max) {
        for (size_t i = 0; i < g.size(); ++i) dx[am[i]] += g[i];
        return;
      }
      for (size_t o2 = 0; o2 < g.size(); ++o2) {
        const S q = g[o2] / S(hw);
        for (size_t i = 0; i < hw; ++i) dx[o2 * hw + i] += q;
      }
    });
  }

  // channel global -> [N,1,H,W]
  const size_t hw = size_t(h) * w;
  std::vector<S> out(size_t(n_batch) * hw);
  std::vector<size_t> argmax(mode == PoolMode::max ? out.size() : 0);
  for (int n = 0; n < n_batch; ++n) {
    for (size_t i = 0; i < hw; ++i) {
      const size_t o = size_t(n) * hw + i;
      if (mode == PoolMode::avg) {
        S acc = S(0);
        for (int cc = 0; cc < c; ++cc) acc += xp[(size_t(n) * c + cc) * hw + i];
        out[o] = acc / S(c);
      } else {
        S best = xp[size_t(n) * c * hw + i];
        int bc = 0;
        for (int cc = 1; cc < c; ++cc) {
          const S v = xp[(size_t(n) * c + cc) * hw + i];
          if (v > best) {
            best = v;
            bc = cc;
          }
        }
        out[o] = best;
        argmax[o] = (size_t(n) * c + size_t(bc)) * hw + i;
      }
    }
  }
  Shape out_shape{n_batch, 1, h, w};
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
  return tape->emit(std::move(out_shape), std::move(out),
                    [=, am = std::move(argmax)](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    if (mode == PoolMode::max) {
      for (size_t i = 0; i < g.size(); ++i) dx[am[i]] += g[i];
      return;
    }
    for (int n = 0; n < n_batch; ++n) {
      for (size_t i = 0; i < hw; ++i) {
        const S q = g[size_t(n) * hw + i] / S(c);
        for (int cc = 0; cc < c; ++cc) dx[(size_t(n) * c + cc) * hw + i] += q;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// bilinear upsample x2, align-corners false

template <class S>
TensorT<S> upsample2x(const TensorT<S>& x) {
  check(x.rank() == 4, "upsample2x: input must be rank 4 [N,C,H,W], got ", shape_str(x.shape()));
  const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(h >= 1 && w >= 1, "upsample2x: empty spatial extents");
  const int ho = 2 * h, wo = 2 * w;
  const S* xp = ptr(x);

  // Per output row/col: source low index, high index, fraction toward high.
  std::vector<int> y0(ho), y1(ho);
  std::vector<S> fy(ho);
  for (int oy = 0; oy < ho; ++oy) {
    const S sy = (S(oy) + S(0.5)) / S(2) - S(0.5);
    S fl = std::floor(sy);
    int i0 = int(fl);
    S f = sy - fl;
    int i1 = i0 + 1;
    y0[oy] = std::clamp(i0, 0, h - 1);
    y1[oy] = std::clamp(i1, 0, h - 1);
    fy[oy] = f;
  }
  std::vector<int> x0(wo), x1(wo);
  std::vector<S> fx(wo);
  for (int ox = 0; ox < wo; ++ox) {
    const S sx = (S(ox) + S(0.5)) / S(2) - S(0.5);
    S fl = std::floor(sx);
    int i0 = int(fl);
    S f = sx - fl;
    x0[ox] = std::clamp(i0, 0, w - 1);
    x1[ox] = std::clamp(i0 + 1, 0, w - 1);
    fx[ox] = f;
  }

  std::vector<S> out(size_t(n_batch) * c * ho * wo);
  size_t o = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int cc = 0; cc < c; ++cc) {
      const S* plane = xp + (size_t(n) * c + cc) * h * w;
      for (int oy = 0; oy < ho; ++oy) {
        const S gy = fy[oy];
        for (int ox = 0; ox < wo; ++ox, ++o) {
          const S gx = fx[ox];
          const S v00 = plane[size_t(y0[oy]) * w + x0[ox]];
          const S v01 = plane[size_t(y0[oy]) * w + x1[ox]];
          const S v10 = plane[size_t(y1[oy]) * w + x0[ox]];
          const S v11 = plane[size_t(y1[oy]) * w + x1[ox]];
          out[o] = (S(1) - gy) * ((S(1) - gx) * v00 + gx * v01) +
                   gy * ((S(1) - gx) * v10 + gx * v11);
        }
      }
    }
  }

  TapeT<S>* tape = joint_tape<S>({&x});
  Shape out_shape{n_batch, c, ho, wo};
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
  const int xn = x.node();
  return tape->emit(std::move(out_shape), std::move(out),
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    size_t o2 = 0;
    for (int n = 0; n < n_batch; ++n) {
      for (int cc = 0; cc < c; ++cc) {
        const size_t pbase = (size_t(n) * c + cc) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const S gy = fy[oy];
          for (int ox = 0; ox < wo; ++ox, ++o2) {
            const S go = g[o2];
            if (go == S(0)) continue;
            const S gx = fx[ox];
            dx[pbase + size_t(y0[oy]) * w + x0[ox]] += go * (S(1) - gy) * (S(1) - gx);
            dx[pbase + size_t(y0[oy]) * w + x1[ox]] += go * (S(1) - gy) * gx;
            dx[pbase + size_t(y1[oy]) * w + x0[ox]] += go * gy * (S(1) - gx);
            dx[pbase + size_t(y1[oy]) * w + x1[ox]] += go * gy * gx;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// elementwise

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  auto vals = std::make_shared<std::vector<S>>(x.numel());
  const S* xp = ptr(x);
  for (size_t i = 0; i < vals->size(); ++i) (*vals)[i] = stable_sigmoid(xp[i]);
  TapeT<S>* tape = joint_tape<S>({&x});
  auto ro = std::shared_ptr<const std::vector<S>>(vals);
  if (!tape) return TensorT<S>(x.shape(), ro);
  const int xn = x.node();
  return tape->emit(x.shape(), ro, [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    for (size_t i = 0; i < g.size(); ++i) {
      const S y = (*ro)[i];
      dx[i] += g[i] * y * (S(1) - y);
    }
  });
}

template <class S>
TensorT<S> relu(const TensorT<S>& x) {
  std::vector<S> out(x.numel());
  const S* xp = ptr(x);
  for (size_t i = 0; i < out.size(); ++i) out[i] = xp[i] > S(0) ? xp[i] : S(0);
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) return TensorT<S>(x.shape(), std::move(out));
  const int xn = x.node();
  auto xs = x.storage();
  return tape->emit(x.shape(), std::move(out), [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    const S* xp2 = xs->data();
    for (size_t i = 0; i < g.size(); ++i) {
      if (xp2[i] > S(0)) dx[i] += g[i];
    }
  });
}

namespace {

enum class BinMode {
  same,      // equal shapes
  chan_vec,  // small operand is [N,C] against [N,C,H,W]
  spat_map,  // small operand is [N,1,H,W] against [N,C,H,W]
};

// Classifies (big, small) operand order; swaps so `a_is_big` reports which.
struct BinPlan {
  BinMode mode;
  bool a_is_big;
};

BinPlan bin_plan(const Shape& a, const Shape& b) {
  if (a == b) return {BinMode::same, true};
  auto try_pair = [](const Shape& big, const Shape& small) -> std::optional<BinMode> {
    if (big.size() == 4 && small.size() == 2 && big[0] == small[0] && big[1] == small[1]) {
      return BinMode::chan_vec;
    }
    if (big.size() == 4 && small.size() == 4 && small[1] == 1 && big[1] > 1 &&
        big[0] == small[0] && big[2] == small[2] && big[3] == small[3]) {
      return BinMode::spat_map;
    }
    return std::nullopt;
  };
  if (auto m = try_pair(a, b)) return {*m, true};
  if (auto m = try_pair(b, a)) return {*m, false};
  fail("shapes ", shape_str(a), " and ", shape_str(b), " are not broadcastable");
}

// Linear index of the small operand for position (n,c,h,w) of the big one.
template <class S>
struct SmallIndex {
  BinMode mode;
  int c, h, w;
  size_t operator()(int n, int cc, int hh, int ww) const {
    if (mode == BinMode::same) return ((size_t(n) * c + cc) * h + hh) * w + ww;
    if (mode == BinMode::chan_vec) return size_t(n) * c + cc;
    return (size_t(n) * h + hh) * w + ww;  // spat_map
  }
};

template <class S>
TensorT<S> binary_op(const TensorT<S>& a, const TensorT<S>& b, bool is_mul) {
  const char* name = is_mul ? "mul" : "add";
  check(a.defined() && b.defined(), name, ": undefined operand");
  BinPlan plan = bin_plan(a.shape(), b.shape());
  const TensorT<S>& big = plan.a_is_big ? a : b;
  const TensorT<S>& small = plan.a_is_big ? b : a;

  int nb, c, h, w;
  if (big.rank() == 4) {
    nb = big.dim(0), c = big.dim(1), h = big.dim(2), w = big.dim(3);
  } else {
    // same-shape case with arbitrary rank: flatten
    nb = 1, c = 1, h = 1, w = int(big.numel());
  }
  if (plan.mode != BinMode::same) {
    check(big.rank() == 4, name, ": broadcast requires a rank-4 operand");
  }
  SmallIndex<S> sidx{plan.mode, c, h, w};

  const S* bp = ptr(big);
  const S* sp = ptr(small);
  std::vector<S> out(big.numel());
  size_t o = 0;
  for (int n = 0; n < nb; ++n) {
    for (int cc = 0; cc < c; ++cc) {
      for (int hh = 0; hh < h; ++hh) {
        for (int ww = 0; ww < w; ++ww, ++o) {
          const S sv = sp[sidx(n, cc, hh, ww)];
          out[o] = is_mul ? bp[o] * sv : bp[o] + sv;
        }
      }
    }
  }

  TapeT<S>* tape = joint_tape<S>({&a, &b});
  if (!tape) return TensorT<S>(big.shape(), std::move(out));
  const int bign = big.node(), smalln = small.node();
  auto bs = big.storage();
  auto ss = small.storage();
  return tape->emit(big.shape(), std::move(out), [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* dbig = bign >= 0 ? &tp.grad_buf(bign) : nullptr;
    std::vector<S>* dsmall = smalln >= 0 ? &tp.grad_buf(smalln) : nullptr;
    const S* bp2 = bs->data();
    const S* sp2 = ss->data();
    size_t o2 = 0;
    for (int n = 0; n < nb; ++n) {
      for (int cc = 0; cc < c; ++cc) {
        for (int hh = 0; hh < h; ++hh) {
          for (int ww = 0; ww < w; ++ww, ++o2) {
            const S go = g[o2];
            if (go == S(0)) continue;
            const size_t si = sidx(n, cc, hh, ww);
            if (is_mul) {
              if (dbig) (*dbig)[o2] += go * sp2[si];
              if (dsmall) (*dsmall)[si] += go * bp2[o2];
            } else {
              if (dbig) (*dbig)[o2] += go;
              if (dsmall) (*dsmall)[si] += go;
            }
          }
        }
      }
    }
  });
}

}  // namespace

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_op(a, b, false);
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_op(a, b, true);
}

template <class S>
TensorT<S> scale(const TensorT<S>& x, S factor) {
  std::vector<S> out(x.numel());
  const S* xp = ptr(x);
  for (size_t i = 0; i < out.size(); ++i) out[i] = xp[i] * factor;
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) return TensorT<S>(x.shape(), std::move(out));
  const int xn = x.node();
  return tape->emit(x.shape(), std::move(out), [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  });
}

// ---------------------------------------------------------------------------
// softmax over a pair of logit tensors

template <class S>
std::pair<TensorT<S>, TensorT<S>> softmax_pair(const TensorT<S>& a, const TensorT<S>& b) {
  check(a.shape() == b.shape(), "softmax_pair: operand shapes ", shape_str(a.shape()), " and ",
        shape_str(b.shape()), " differ");
  const size_t n = a.numel();
  auto wa = std::make_shared<std::vector<S>>(n);
  auto wb = std::make_shared<std::vector<S>>(n);
  const S* ap = ptr(a);
  const S* bp = ptr(b);
  // Saturated pairs are floored at 1e-7 so both weights stay strictly inside
  // (0,1) even when the logit gap underflows exp(); the displacement is
  // symmetric, keeping the pair sum at 1 well within 1e-6.
  const S floor = S(1e-7);
  const S ceil = S(1) - S(1e-7);
  for (size_t i = 0; i < n; ++i) {
    const S m = std::max(ap[i], bp[i]);
    const S ea = std::exp(ap[i] - m);
    const S eb = std::exp(bp[i] - m);
    const S denom = ea + eb;
    (*wa)[i] = std::clamp(ea / denom, floor, ceil);
    (*wb)[i] = std::clamp(eb / denom, floor, ceil);
  }
  auto wa_ro = std::shared_ptr<const std::vector<S>>(wa);
  auto wb_ro = std::shared_ptr<const std::vector<S>>(wb);

  TapeT<S>* tape = joint_tape<S>({&a, &b});
  if (!tape) {
    return {TensorT<S>(a.shape(), wa_ro), TensorT<S>(a.shape(), wb_ro)};
  }
  const int an = a.node(), bn = b.node();
  // d(wa)/da = wa*wb, d(wa)/db = -wa*wb; symmetric for wb.
  auto out_a = tape->emit(a.shape(), wa_ro, [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* da = an >= 0 ? &tp.grad_buf(an) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    for (size_t i = 0; i < g.size(); ++i) {
      const S j = g[i] * (*wa_ro)[i] * (*wb_ro)[i];
      if (da) (*da)[i] += j;
      if (db) (*db)[i] -= j;
    }
  });
  auto out_b = tape->emit(a.shape(), wb_ro, [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* da = an >= 0 ? &tp.grad_buf(an) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    for (size_t i = 0; i < g.size(); ++i) {
      const S j = g[i] * (*wa_ro)[i] * (*wb_ro)[i];
      if (da) (*da)[i] -= j;
      if (db) (*db)[i] += j;
    }
  });
  return {std::move(out_a), std::move(out_b)};
}

// ---------------------------------------------------------------------------
// channel surgery

namespace {

template <class S>
void channel_geometry(const TensorT<S>& t, const char* name, int* n, int* c, size_t* inner) {
  check(t.rank() == 3 || t.rank() == 4, name, ": input must be rank 3 or 4, got ",
        shape_str(t.shape()));
  *n = t.dim(0);
  *c = t.dim(1);
  *inner = t.rank() == 3 ? size_t(t.dim(2)) : size_t(t.dim(2)) * size_t(t.dim(3));
}

}  // namespace

template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  int na, ca, nb, cb;
  size_t ia, ib;
  channel_geometry(a, "concat", &na, &ca, &ia);
  channel_geometry(b, "concat", &nb, &cb, &ib);
  check(a.rank() == b.rank() && na == nb && ia == ib,
        "concat: shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()),
        " differ outside the channel dim");
  Shape out_shape = a.shape();
  out_shape[1] = ca + cb;
  std::vector<S> out(shape_numel(out_shape));
  const S* ap = ptr(a);
  const S* bp = ptr(b);
  for (int n = 0; n < na; ++n) {
    S* dst = out.data() + size_t(n) * (ca + cb) * ia;
    const S* sa = ap + size_t(n) * ca * ia;
    const S* sb = bp + size_t(n) * cb * ib;
    std::copy(sa, sa + size_t(ca) * ia, dst);
    std::copy(sb, sb + size_t(cb) * ib, dst + size_t(ca) * ia);
  }
  TapeT<S>* tape = joint_tape<S>({&a, &b});
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
  const int an = a.node(), bn = b.node();
  return tape->emit(std::move(out_shape), std::move(out),
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* da = an >= 0 ? &tp.grad_buf(an) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    for (int n = 0; n < na; ++n) {
      const S* src = g.data() + size_t(n) * (ca + cb) * ia;
      if (da) {
        S* d = da->data() + size_t(n) * ca * ia;
        for (size_t i = 0; i < size_t(ca) * ia; ++i) d[i] += src[i];
      }
      if (db) {
        S* d = db->data() + size_t(n) * cb * ia;
        for (size_t i = 0; i < size_t(cb) * ia; ++i) d[i] += src[size_t(ca) * ia + i];
      }
    }
  });
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> split_half(const TensorT<S>& x) {
  int n, c;
  size_t inner;
  channel_geometry(x, "split_half", &n, &c, &inner);
  check(c % 2 == 0, "split_half: channel count must be even, got ", c);
  const int ch = c / 2;
  Shape half_shape = x.shape();
  half_shape[1] = ch;
  std::vector<S> lo(shape_numel(half_shape)), hi(lo.size());
  const S* xp = ptr(x);
  for (int nn = 0; nn < n; ++nn) {
    const S* src = xp + size_t(nn) * c * inner;
    std::copy(src, src + size_t(ch) * inner, lo.data() + size_t(nn) * ch * inner);
    std::copy(src + size_t(ch) * inner, src + size_t(c) * inner,
              hi.data() + size_t(nn) * ch * inner);
  }
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) {
    return {TensorT<S>(half_shape, std::move(lo)), TensorT<S>(half_shape, std::move(hi))};
  }
  const int xn = x.node();
  auto make_back = [=](bool upper) {
    return [=](const std::vector<S>& g, TapeT<S>& tp) {
      std::vector<S>& dx = tp.grad_buf(xn);
      for (int nn = 0; nn < n; ++nn) {
        S* dst = dx.data() + size_t(nn) * c * inner + (upper ? size_t(ch) * inner : 0);
        const S* src = g.data() + size_t(nn) * ch * inner;
        for (size_t i = 0; i < size_t(ch) * inner; ++i) dst[i] += src[i];
      }
    };
  };
  auto t_lo = tape->emit(half_shape, std::move(lo), make_back(false));
  auto t_hi = tape->emit(half_shape, std::move(hi), make_back(true));
  return {std::move(t_lo), std::move(t_hi)};
}

template <class S>
TensorT<S> interleave(const TensorT<S>& a, const TensorT<S>& b) {
  check(a.shape() == b.shape(), "interleave: operand shapes ", shape_str(a.shape()), " and ",
        shape_str(b.shape()), " differ");
  int n, c;
  size_t inner;
  channel_geometry(a, "interleave", &n, &c, &inner);
  Shape out_shape = a.shape();
  out_shape[1] = 2 * c;
  std::vector<S> out(shape_numel(out_shape));
  const S* ap = ptr(a);
  const S* bp = ptr(b);
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const S* sa = ap + (size_t(nn) * c + cc) * inner;
      const S* sb = bp + (size_t(nn) * c + cc) * inner;
      S* da = out.data() + (size_t(nn) * 2 * c + 2 * cc) * inner;
      S* db = out.data() + (size_t(nn) * 2 * c + 2 * cc + 1) * inner;
      std::copy(sa, sa + inner, da);
      std::copy(sb, sb + inner, db);
    }
  }
  TapeT<S>* tape = joint_tape<S>({&a, &b});
  if (!tape) return TensorT<S>(std::move(out_shape), std::move(out));
  const int an = a.node(), bn = b.node();
  return tape->emit(std::move(out_shape), std::move(out),
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* da = an >= 0 ? &tp.grad_buf(an) : nullptr;
    std::vector<S>* db = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    for (int nn = 0; nn < n; ++nn) {
      for (int cc = 0; cc < c; ++cc) {
        const S* ga = g.data() + (size_t(nn) * 2 * c + 2 * cc) * inner;
        const S* gb = g.data() + (size_t(nn) * 2 * c + 2 * cc + 1) * inner;
        if (da) {
          S* d = da->data() + (size_t(nn) * c + cc) * inner;
          for (size_t i = 0; i < inner; ++i) d[i] += ga[i];
        }
        if (db) {
          S* d = db->data() + (size_t(nn) * c + cc) * inner;
          for (size_t i = 0; i < inner; ++i) d[i] += gb[i];
        }
      }
    }
  });
}

template <class S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape) {
  check(shape_numel(shape) == x.numel(), "reshape: shape ", shape_str(shape),
        " does not preserve element count ", x.numel());
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) return TensorT<S>(std::move(shape), x.storage());
  const int xn = x.node();
  return tape->emit(std::move(shape), x.storage(), [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

template <class S>
TensorT<S> weighted_sum(const TensorT<S>& x, const std::vector<S>& coeffs) {
  check(coeffs.size() == x.numel(), "weighted_sum: coefficient count ", coeffs.size(),
        " does not match element count ", x.numel());
  const S* xp = ptr(x);
  S acc = S(0);
  for (size_t i = 0; i < coeffs.size(); ++i) acc += xp[i] * coeffs[i];
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) return TensorT<S>(Shape{1}, std::vector<S>{acc});
  const int xn = x.node();
  return tape->emit(Shape{1}, std::vector<S>{acc},
                    [xn, coeffs](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    for (size_t i = 0; i < coeffs.size(); ++i) dx[i] += g[0] * coeffs[i];
  });
}

template <class S>
TensorT<S> reduce_sum(const TensorT<S>& x) {
  const S* xp = ptr(x);
  S acc = S(0);
  for (size_t i = 0; i < x.numel(); ++i) acc += xp[i];
  TapeT<S>* tape = joint_tape<S>({&x});
  if (!tape) return TensorT<S>(Shape{1}, std::vector<S>{acc});
  const int xn = x.node();
  const size_t n = x.numel();
  return tape->emit(Shape{1}, std::vector<S>{acc}, [=](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>& dx = tp.grad_buf(xn);
    for (size_t i = 0; i < n; ++i) dx[i] += g[0];
  });
}

// ---------------------------------------------------------------------------

#define SGSLN_INSTANTIATE_OPS(S)                                                              \
  template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&,                         \
                                const std::optional<TensorT<S>>&, int, int);                  \
  template TensorT<S> conv1d<S>(const TensorT<S>&, const TensorT<S>&,                         \
                                const std::optional<TensorT<S>>&, int);                       \
  template TensorT<S> pool<S>(const TensorT<S>&, PoolAxes, PoolMode, PoolWindow);             \
  template TensorT<S> upsample2x<S>(const TensorT<S>&);                                       \
  template TensorT<S> sigmoid<S>(const TensorT<S>&);                                          \
  template TensorT<S> relu<S>(const TensorT<S>&);                                             \
  template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                           \
  template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                           \
  template TensorT<S> scale<S>(const TensorT<S>&, S);                                         \
  template std::pair<TensorT<S>, TensorT<S>> softmax_pair<S>(const TensorT<S>&,               \
                                                             const TensorT<S>&);              \
  template TensorT<S> concat_channels<S>(const TensorT<S>&, const TensorT<S>&);               \
  template std::pair<TensorT<S>, TensorT<S>> split_half<S>(const TensorT<S>&);                \
  template TensorT<S> interleave<S>(const TensorT<S>&, const TensorT<S>&);                    \
  template TensorT<S> reshape<S>(const TensorT<S>&, Shape);                                   \
  template TensorT<S> weighted_sum<S>(const TensorT<S>&, const std::vector<S>&);              \
  template TensorT<S> reduce_sum<S>(const TensorT<S>&);

SGSLN_INSTANTIATE_OPS(float)
SGSLN_INSTANTIATE_OPS(double)

#undef SGSLN_INSTANTIATE_OPS

}  // namespace sgsln
