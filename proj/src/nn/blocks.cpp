#include "nn/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace sgsln::nn {

int norm_group_size(int channels) { return std::min(8, channels); }

int eca_kernel_size(int channels) {
  check(channels >= 1, "eca_kernel_size: channels must be positive, got ", channels);
  const int t = int((std::log2(double(channels)) + 1.0) / 2.0);
  const int k = (t % 2 == 1) ? t : t + 1;
  return std::max(3, k);
}

int cbam_hidden(int channels) { return std::max(4, channels / 16); }

// ---------------------------------------------------------------------------
// group normalization

template <class S>
TensorT<S> group_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      int group_size, S eps) {
  check(x.rank() == 4, "group_norm: input must be rank 4, got ", shape_str(x.shape()));
  const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(gamma.rank() == 1 && gamma.dim(0) == c, "group_norm: scale shape ",
        shape_str(gamma.shape()), " does not match ", c, " channels");
  check(beta.rank() == 1 && beta.dim(0) == c, "group_norm: shift shape ",
        shape_str(beta.shape()), " does not match ", c, " channels");
  check(group_size >= 1 && c % group_size == 0, "group_norm: group size ", group_size,
        " does not divide channel count ", c);

  const int groups = c / group_size;
  const size_t hw = size_t(h) * w;
  const size_t gsize = size_t(group_size) * hw;

  auto xhat = std::make_shared<std::vector<S>>(x.numel());
  std::vector<S> inv_std(size_t(n_batch) * groups);
  std::vector<S> out(x.numel());
  const S* xp = x.data().data();
  const S* gp = gamma.data().data();
  const S* bp = beta.data().data();

  for (int n = 0; n < n_batch; ++n) {
    for (int g = 0; g < groups; ++g) {
      const size_t base = (size_t(n) * c + size_t(g) * group_size) * hw;
      S mean = S(0);
      for (size_t i = 0; i < gsize; ++i) mean += xp[base + i];
      mean /= S(gsize);
      S var = S(0);
      for (size_t i = 0; i < gsize; ++i) {
        const S d = xp[base + i] - mean;
        var += d * d;
      }
      var /= S(gsize);
      const S istd = S(1) / std::sqrt(var + eps);
      inv_std[size_t(n) * groups + g] = istd;
      for (int cc = 0; cc < group_size; ++cc) {
        const int ch = g * group_size + cc;
        const size_t cbase = (size_t(n) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) {
          const S xh = (xp[cbase + i] - mean) * istd;
          (*xhat)[cbase + i] = xh;
          out[cbase + i] = gp[ch] * xh + bp[ch];
        }
      }
    }
  }

  TapeT<S>* tape = joint_tape<S>({&x, &gamma, &beta});
  if (!tape) return TensorT<S>(x.shape(), std::move(out));
  const int xn = x.node(), gn = gamma.tracked() ? gamma.node() : -1,
            bn = beta.tracked() ? beta.node() : -1;
  auto gs = gamma.storage();
  return tape->emit(x.shape(), std::move(out),
                    [=, istds = std::move(inv_std)](const std::vector<S>& g, TapeT<S>& tp) {
    std::vector<S>* dx = xn >= 0 ? &tp.grad_buf(xn) : nullptr;
    std::vector<S>* dgamma = gn >= 0 ? &tp.grad_buf(gn) : nullptr;
    std::vector<S>* dbeta = bn >= 0 ? &tp.grad_buf(bn) : nullptr;
    const S* gmp = gs->data();
    if (dgamma || dbeta) {
      for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
          const size_t cbase = (size_t(n) * c + ch) * hw;
          S sg = S(0), sb = S(0);
          for (size_t i = 0; i < hw; ++i) {
            sg += g[cbase + i] * (*xhat)[cbase + i];
            sb += g[cbase + i];
          }
          if (dgamma) (*dgamma)[size_t(ch)] += sg;
          if (dbeta) (*dbeta)[size_t(ch)] += sb;
        }
      }
    }
    if (!dx) return;
    for (int n = 0; n < n_batch; ++n) {
      for (int gr = 0; gr < groups; ++gr) {
        const size_t base = (size_t(n) * c + size_t(gr) * group_size) * hw;
        const S istd = istds[size_t(n) * groups + gr];
        // dxhat = g * gamma; subtract its group mean and the xhat-projected
        // mean, then rescale by 1/sigma.
        S m1 = S(0), m2 = S(0);
        for (int cc = 0; cc < group_size; ++cc) {
          const int ch = gr * group_size + cc;
          const size_t cbase = (size_t(n) * c + ch) * hw;
          for (size_t i = 0; i < hw; ++i) {
            const S dxh = g[cbase + i] * gmp[ch];
            m1 += dxh;
            m2 += dxh * (*xhat)[cbase + i];
          }
        }
        m1 /= S(gsize);
        m2 /= S(gsize);
        for (int cc = 0; cc < group_size; ++cc) {
          const int ch = gr * group_size + cc;
          const size_t cbase = (size_t(n) * c + ch) * hw;
          for (size_t i = 0; i < hw; ++i) {
            const S dxh = g[cbase + i] * gmp[ch];
            (*dx)[cbase + i] += istd * (dxh - m1 - (*xhat)[cbase + i] * m2);
          }
        }
        (void)base;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// channel exchange

template <class S>
std::pair<TensorT<S>, TensorT<S>> channel_exchange(const TensorT<S>& t1, const TensorT<S>& t2) {
  check(t1.shape() == t2.shape(), "channel_exchange: shapes ", shape_str(t1.shape()), " and ",
        shape_str(t2.shape()), " differ");
  check(t1.rank() == 4, "channel_exchange: inputs must be rank 4, got ", shape_str(t1.shape()));
  const int n_batch = t1.dim(0), c = t1.dim(1);
  check(c >= 2, "channel_exchange: needs at least 2 channels, got ", c);
  const size_t hw = size_t(t1.dim(2)) * t1.dim(3);

  std::vector<S> o1(t1.numel()), o2(t1.numel());
  const S* p1 = t1.data().data();
  const S* p2 = t2.data().data();
  for (int n = 0; n < n_batch; ++n) {
    for (int cc = 0; cc < c; ++cc) {
      const size_t base = (size_t(n) * c + cc) * hw;
      const bool keep = (cc % 2 == 0);
      const S* s1 = keep ? p1 : p2;
      const S* s2 = keep ? p2 : p1;
      std::copy(s1 + base, s1 + base + hw, o1.data() + base);
      std::copy(s2 + base, s2 + base + hw, o2.data() + base);
    }
  }

  TapeT<S>* tape = joint_tape<S>({&t1, &t2});
  if (!tape) {
    return {TensorT<S>(t1.shape(), std::move(o1)), TensorT<S>(t1.shape(), std::move(o2))};
  }
  const int n1 = t1.node(), n2 = t2.node();
  // first=true routes even channels to t1, odd to t2; mirrored otherwise.
  auto route = [=](bool first) {
    return [=](const std::vector<S>& g, TapeT<S>& tp) {
      std::vector<S>* d1 = n1 >= 0 ? &tp.grad_buf(n1) : nullptr;
      std::vector<S>* d2 = n2 >= 0 ? &tp.grad_buf(n2) : nullptr;
      for (int n = 0; n < n_batch; ++n) {
        for (int cc = 0; cc < c; ++cc) {
          const size_t base = (size_t(n) * c + cc) * hw;
          const bool to_first = (cc % 2 == 0) == first;
          std::vector<S>* d = to_first ? d1 : d2;
          if (!d) continue;
          for (size_t i = 0; i < hw; ++i) (*d)[base + i] += g[base + i];
        }
      }
    };
  };
  auto e1 = tape->emit(t1.shape(), std::move(o1), route(true));
  auto e2 = tape->emit(t1.shape(), std::move(o2), route(false));
  return {std::move(e1), std::move(e2)};
}

// ---------------------------------------------------------------------------
// conv + norm + relu

void register_conv_norm_act(ParamStore& p, Rng& rng, const std::string& prefix, int c_in,
                            int c_out, int k) {
  register_conv2d(p, rng, prefix + ".conv", c_in, c_out, k, false);
  register_norm(p, prefix + ".norm", c_out);
}

template <class S>
TensorT<S> conv_norm_act(const ParamStoreT<S>& p, const std::string& prefix,
                         const TensorT<S>& x, int k, int stride) {
  auto y = conv2d<S>(x, p.at(prefix + ".conv.w"), std::nullopt, stride, (k - 1) / 2);
  y = group_norm<S>(y, p.at(prefix + ".norm.gamma"), p.at(prefix + ".norm.beta"),
                    norm_group_size(y.dim(1)));
  return relu(y);
}

// ---------------------------------------------------------------------------
// half-convolution unit

void register_hcu(ParamStore& p, Rng& rng, const std::string& prefix, int c_in, int c_out,
                  int stride) {
  (void)stride;  // the parameter set does not depend on it
  check(c_in % 2 == 0, "HCU '", prefix, "': input channels must be even, got ", c_in);
  check(c_out % 2 == 0, "HCU '", prefix, "': output channels must be even, got ", c_out);
  register_conv_norm_act(p, rng, prefix + ".core", c_in / 2, c_out / 2, 3);
  if (c_in != c_out) register_conv2d(p, rng, prefix + ".res", c_in / 2, c_out / 2, 1, true);
}

size_t hcu_core_conv_params(int c_in, int c_out) {
  return size_t(9) * size_t(c_in / 2) * size_t(c_out / 2);
}

template <class S>
TensorT<S> hcu_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& x,
                       int c_in, int c_out, int stride) {
  check(x.rank() == 4 && x.dim(1) == c_in, "HCU '", prefix, "': expected ", c_in,
        " input channels, got ", shape_str(x.shape()));
  check(c_in % 2 == 0 && c_out % 2 == 0, "HCU '", prefix, "': channel counts must be even (",
        c_in, " -> ", c_out, ")");
  check(stride == 1 || stride == 2, "HCU '", prefix, "': stride must be 1 or 2, got ", stride);
  auto [xa, xb] = split_half(x);
  auto core = conv_norm_act(p, prefix + ".core", xa, 3, stride);
  TensorT<S> res = xb;
  if (stride == 2) res = pool(res, PoolAxes::spatial, PoolMode::max, PoolWindow::window2x2);
  if (c_in != c_out) {
    res = conv2d<S>(res, p.at(prefix + ".res.w"), p.at(prefix + ".res.b"), 1, 0);
  }
  return interleave(core, res);
}

// ---------------------------------------------------------------------------
// CBAM

void register_cbam(ParamStore& p, Rng& rng, const std::string& prefix, int channels) {
  check(channels >= 2, "CBAM '", prefix, "': needs at least 2 channels, got ", channels);
  const int hidden = cbam_hidden(channels);
  register_conv2d(p, rng, prefix + ".mlp1", channels, hidden, 1, true);
  register_conv2d(p, rng, prefix + ".mlp2", hidden, channels, 1, true);
  register_conv2d(p, rng, prefix + ".spatial", 2, 1, 7, true);
}

template <class S>
TensorT<S> cbam_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& x,
                        int channels) {
  check(x.rank() == 4 && x.dim(1) == channels, "CBAM '", prefix, "': expected ", channels,
        " channels, got ", shape_str(x.shape()));
  check(channels >= 2, "CBAM '", prefix, "': needs at least 2 channels, got ", channels);
  const int n = x.dim(0);

  // Channel gate: shared bottleneck over global avg and max descriptors.
  auto mlp = [&](const TensorT<S>& v) {
    auto t = reshape(v, {n, channels, 1, 1});
    t = conv2d<S>(t, p.at(prefix + ".mlp1.w"), p.at(prefix + ".mlp1.b"), 1, 0);
    t = relu(t);
    t = conv2d<S>(t, p.at(prefix + ".mlp2.w"), p.at(prefix + ".mlp2.b"), 1, 0);
    return reshape(t, {n, channels});
  };
  auto avg_desc = pool(x, PoolAxes::spatial, PoolMode::avg, PoolWindow::global);
  auto max_desc = pool(x, PoolAxes::spatial, PoolMode::max, PoolWindow::global);
  auto gate_c = sigmoid(add(mlp(avg_desc), mlp(max_desc)));
  auto xc = mul(x, gate_c);

  // Spatial gate: 7x7 conv over channel avg/max maps of the gated features.
  auto avg_map = pool(xc, PoolAxes::channel, PoolMode::avg, PoolWindow::global);
  auto max_map = pool(xc, PoolAxes::channel, PoolMode::max, PoolWindow::global);
  auto gate_s = sigmoid(conv2d<S>(concat_channels(avg_map, max_map),
                                  p.at(prefix + ".spatial.w"), p.at(prefix + ".spatial.b"), 1, 3));
  return mul(xc, gate_s);
}

// ---------------------------------------------------------------------------
// TFAM

void register_tfam(ParamStore& p, Rng& rng, const std::string& prefix, int channels) {
  const int k = eca_kernel_size(channels);
  register_conv1d(p, rng, prefix + ".c1", 4, 1, k, false);
  register_conv1d(p, rng, prefix + ".c2", 4, 1, k, false);
  register_conv2d(p, rng, prefix + ".s1", 4, 1, 7, true);
  register_conv2d(p, rng, prefix + ".s2", 4, 1, 7, true);
}

template <class S>
TensorT<S> tfam_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& t1,
                        const TensorT<S>& t2, int channels) {
  check(t1.shape() == t2.shape(), "TFAM '", prefix, "': shapes ", shape_str(t1.shape()),
        " and ", shape_str(t2.shape()), " differ");
  check(t1.rank() == 4 && t1.dim(1) == channels, "TFAM '", prefix, "': expected ", channels,
        " channels, got ", shape_str(t1.shape()));
  const int n = t1.dim(0), h = t1.dim(2), w = t1.dim(3);
  const int k = eca_kernel_size(channels);

  // Channel branch: stack the four pooled C-vectors as a 4-channel sequence.
  auto as_seq = [&](const TensorT<S>& v) { return reshape(v, {n, 1, channels}); };
  auto s_c = concat_channels(
      concat_channels(as_seq(pool(t1, PoolAxes::spatial, PoolMode::avg, PoolWindow::global)),
                      as_seq(pool(t1, PoolAxes::spatial, PoolMode::max, PoolWindow::global))),
      concat_channels(as_seq(pool(t2, PoolAxes::spatial, PoolMode::avg, PoolWindow::global)),
                      as_seq(pool(t2, PoolAxes::spatial, PoolMode::max, PoolWindow::global))));
  auto wc1 = reshape(conv1d<S>(s_c, p.at(prefix + ".c1.w"), std::nullopt, (k - 1) / 2),
                     {n, channels});
  auto wc2 = reshape(conv1d<S>(s_c, p.at(prefix + ".c2.w"), std::nullopt, (k - 1) / 2),
                     {n, channels});
  auto [wc1n, wc2n] = softmax_pair(wc1, wc2);

  // Spatial branch: channel-wise avg/max maps stacked as 4 channels.
  auto s_s = concat_channels(
      concat_channels(pool(t1, PoolAxes::channel, PoolMode::avg, PoolWindow::global),
                      pool(t1, PoolAxes::channel, PoolMode::max, PoolWindow::global)),
      concat_channels(pool(t2, PoolAxes::channel, PoolMode::avg, PoolWindow::global),
                      pool(t2, PoolAxes::channel, PoolMode::max, PoolWindow::global)));
  auto ws1 = conv2d<S>(s_s, p.at(prefix + ".s1.w"), p.at(prefix + ".s1.b"), 1, 3);
  auto ws2 = conv2d<S>(s_s, p.at(prefix + ".s2.w"), p.at(prefix + ".s2.b"), 1, 3);
  auto [ws1n, ws2n] = softmax_pair(ws1, ws2);
  (void)h;
  (void)w;

  auto part1 = add(mul(t1, wc1n), mul(t1, ws1n));
  auto part2 = add(mul(t2, wc2n), mul(t2, ws2n));
  return add(part1, part2);
}

// ---------------------------------------------------------------------------
// encoder / change blocks and heads

void register_encoder_block1(ParamStore& p, Rng& rng, const std::string& prefix, int c1) {
  register_conv_norm_act(p, rng, prefix + ".stem", 3, c1, 3);
  register_hcu(p, rng, prefix + ".hcu1", c1, c1, 1);
  register_hcu(p, rng, prefix + ".hcu2", c1, c1, 1);
}

template <class S>
TensorT<S> encoder_block1_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                  const TensorT<S>& x, int c1) {
  auto y = conv_norm_act(p, prefix + ".stem", x, 3, 1);
  y = hcu_forward(p, prefix + ".hcu1", y, c1, c1, 1);
  return hcu_forward(p, prefix + ".hcu2", y, c1, c1, 1);
}

void register_encoder_block(ParamStore& p, Rng& rng, const std::string& prefix, int c_in,
                            int c_out, bool cbam) {
  register_hcu(p, rng, prefix + ".down", c_in, c_out, 2);
  register_hcu(p, rng, prefix + ".hcu1", c_out, c_out, 1);
  register_hcu(p, rng, prefix + ".hcu2", c_out, c_out, 1);
  register_conv_norm_act(p, rng, prefix + ".conv", c_out, c_out, 3);
  if (cbam) register_cbam(p, rng, prefix + ".cbam", c_out);
}

template <class S>
TensorT<S> encoder_block_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                 const TensorT<S>& x, int c_in, int c_out, bool cbam) {
  auto y = hcu_forward(p, prefix + ".down", x, c_in, c_out, 2);
  y = hcu_forward(p, prefix + ".hcu1", y, c_out, c_out, 1);
  y = hcu_forward(p, prefix + ".hcu2", y, c_out, c_out, 1);
  y = conv_norm_act(p, prefix + ".conv", y, 3, 1);
  if (cbam) y = cbam_forward(p, prefix + ".cbam", y, c_out);
  return y;
}

void register_change_block(ParamStore& p, Rng& rng, const std::string& prefix, int c_low,
                           int c_out) {
  register_conv2d(p, rng, prefix + ".reduce", c_low, c_out, 1, true);
  register_hcu(p, rng, prefix + ".hcu1", 2 * c_out, c_out, 1);
  register_hcu(p, rng, prefix + ".hcu2", c_out, c_out, 1);
}

template <class S>
TensorT<S> change_block_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                const TensorT<S>& low, const TensorT<S>& skip, int c_low,
                                int c_out) {
  check(low.rank() == 4 && skip.rank() == 4, "change block '", prefix, "': rank-4 inputs required");
  check(skip.dim(2) == 2 * low.dim(2) && skip.dim(3) == 2 * low.dim(3), "change block '", prefix,
        "': skip extents ", skip.dim(2), "x", skip.dim(3), " must be exactly twice the low ones ",
        low.dim(2), "x", low.dim(3));
  check(low.dim(1) == c_low && skip.dim(1) == c_out, "change block '", prefix,
        "': channel mismatch (low ", low.dim(1), " vs ", c_low, ", skip ", skip.dim(1), " vs ",
        c_out, ")");
  auto up = upsample2x(low);
  auto reduced = conv2d<S>(up, p.at(prefix + ".reduce.w"), p.at(prefix + ".reduce.b"), 1, 0);
  auto cat = concat_channels(reduced, skip);
  auto y = hcu_forward(p, prefix + ".hcu1", cat, 2 * c_out, c_out, 1);
  return hcu_forward(p, prefix + ".hcu2", y, c_out, c_out, 1);
}

void register_head(ParamStore& p, Rng& rng, const std::string& prefix, int c_in) {
  register_conv2d(p, rng, prefix, c_in, 1, 1, true);
}

template <class S>
TensorT<S> head_forward(const ParamStoreT<S>& p, const std::string& prefix,
                        const TensorT<S>& x) {
  return sigmoid(conv2d<S>(x, p.at(prefix + ".w"), p.at(prefix + ".b"), 1, 0));
}

// ---------------------------------------------------------------------------

#define SGSLN_INSTANTIATE_BLOCKS(S)                                                          \
  template TensorT<S> group_norm<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&, \
                                    int, S);                                                 \
  template std::pair<TensorT<S>, TensorT<S>> channel_exchange<S>(const TensorT<S>&,          \
                                                                 const TensorT<S>&);         \
  template TensorT<S> conv_norm_act<S>(const ParamStoreT<S>&, const std::string&,            \
                                       const TensorT<S>&, int, int);                         \
  template TensorT<S> hcu_forward<S>(const ParamStoreT<S>&, const std::string&,              \
                                     const TensorT<S>&, int, int, int);                      \
  template TensorT<S> cbam_forward<S>(const ParamStoreT<S>&, const std::string&,             \
                                      const TensorT<S>&, int);                               \
  template TensorT<S> tfam_forward<S>(const ParamStoreT<S>&, const std::string&,             \
                                      const TensorT<S>&, const TensorT<S>&, int);            \
  template TensorT<S> encoder_block1_forward<S>(const ParamStoreT<S>&, const std::string&,   \
                                                const TensorT<S>&, int);                     \
  template TensorT<S> encoder_block_forward<S>(const ParamStoreT<S>&, const std::string&,    \
                                               const TensorT<S>&, int, int, bool);           \
  template TensorT<S> change_block_forward<S>(const ParamStoreT<S>&, const std::string&,     \
                                              const TensorT<S>&, const TensorT<S>&, int,     \
                                              int);                                          \
  template TensorT<S> head_forward<S>(const ParamStoreT<S>&, const std::string&,             \
                                      const TensorT<S>&);

SGSLN_INSTANTIATE_BLOCKS(float)
SGSLN_INSTANTIATE_BLOCKS(double)

#undef SGSLN_INSTANTIATE_BLOCKS

}  // namespace sgsln::nn
