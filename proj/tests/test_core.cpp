#include <doctest.h>

#include <cmath>

#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

using namespace sgsln;

namespace {

// Scalar reference convolution written from the definition, with the same
// left-to-right (ci, kh, kw) accumulation order as the kernel so float
// results must agree bit for bit.
template <class S>
std::vector<S> conv2d_oracle(const std::vector<S>& x, int n_batch, int c_in, int h, int w,
                             const std::vector<S>& wt, int c_out, int k, const S* bias,
                             int stride, int pad) {
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  std::vector<S> out(size_t(n_batch) * c_out * ho * wo, S(0));
  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < c_out; ++co) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          S acc = bias ? bias[co] : S(0);
          for (int ci = 0; ci < c_in; ++ci) {
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride - pad + kh;
                const int iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += x[((size_t(n) * c_in + ci) * h + ih) * w + iw] *
                       wt[((size_t(co) * c_in + ci) * k + kh) * k + kw];
              }
            }
          }
          out[((size_t(n) * c_out + co) * ho + oh) * wo + ow] = acc;
        }
      }
    }
  }
  return out;
}

Tensor random_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor<float>(std::move(shape), rng, lo, hi);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6.0f);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), Error);
  CHECK_THROWS_AS(t.value(), Error);  // non-scalar
  Tensor copy = t;                    // shares the payload
  CHECK(&copy.data() == &t.data());
}

TEST_CASE("conv2d box sum of ones") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d<float>(x, w, std::nullopt, 1, 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at({0, 0, 1, 1}) == 9.0f);
  CHECK(y.at({0, 0, 0, 0}) == 4.0f);
  CHECK(y.at({0, 0, 2, 2}) == 4.0f);
  CHECK(y.at({0, 0, 0, 1}) == 6.0f);
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(3);
  Tensor x = random_t({2, 3, 4, 5}, rng);
  std::vector<float> wv(9, 0.0f);
  // 1x1 kernels acting as per-channel selectors: out channel c = in channel c
  Tensor w({3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = conv2d<float>(x, w, std::nullopt, 1, 0);
  CHECK(y.shape() == x.shape());
  for (size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  (void)wv;
}

TEST_CASE("conv2d stride 2 matches the scalar oracle exactly") {
  Rng rng(7);
  Tensor x = random_t({1, 2, 5, 5}, rng);
  Tensor w = random_t({3, 2, 3, 3}, rng);
  Tensor y = conv2d<float>(x, w, std::nullopt, 2, 1);
  CHECK(y.shape() == Shape{1, 3, 3, 3});
  const auto expect = conv2d_oracle<float>(x.data(), 1, 2, 5, 5, w.data(), 3, 3, nullptr, 2, 1);
  for (size_t i = 0; i < expect.size(); ++i) CHECK(y[i] == expect[i]);
}

TEST_CASE("conv2d equals the oracle bit for bit on assorted shapes") {
  Rng rng(11);
  const int cases[][7] = {
      // n, ci, h, w, co, stride, pad
      {2, 4, 8, 8, 3, 1, 1}, {1, 3, 7, 6, 2, 2, 1}, {2, 1, 5, 5, 4, 1, 0}, {1, 2, 8, 6, 2, 2, 0},
  };
  for (const auto& c : cases) {
    Tensor x = random_t({c[0], c[1], c[2], c[3]}, rng);
    Tensor w = random_t({c[4], c[1], 3, 3}, rng);
    Tensor b = random_t({c[4]}, rng);
    Tensor y = conv2d<float>(x, w, b, c[5], c[6]);
    const auto expect = conv2d_oracle<float>(x.data(), c[0], c[1], c[2], c[3], w.data(), c[4], 3,
                                             b.data().data(), c[5], c[6]);
    REQUIRE(y.numel() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) CHECK(y[i] == expect[i]);
  }
}

TEST_CASE("conv2d rejects mismatched channels with a dimension diagnostic") {
  Tensor x({1, 2, 4, 4});
  Tensor w({1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d<float>(x, w, std::nullopt, 1, 1),
                       doctest::Contains("weight input-channel dim is 3"), Error);
  CHECK_THROWS_AS(conv2d<float>(x, Tensor({1, 2, 2, 2}), std::nullopt, 1, 0), Error);  // even k
}

TEST_CASE("conv1d box sum and identity") {
  Tensor x = Tensor::full({1, 1, 4}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3}, 1.0f);
  Tensor y = conv1d<float>(x, w, std::nullopt, 1);
  CHECK(y.shape() == Shape{1, 1, 4});
  CHECK(y[0] == 2.0f);
  CHECK(y[1] == 3.0f);
  CHECK(y[2] == 3.0f);
  CHECK(y[3] == 2.0f);

  Rng rng(5);
  Tensor x2 = random_t({2, 1, 6}, rng);
  Tensor w2({1, 1, 1}, {1.0f});
  Tensor y2 = conv1d<float>(x2, w2, std::nullopt, 0);
  for (size_t i = 0; i < x2.numel(); ++i) CHECK(y2[i] == x2[i]);
}

TEST_CASE("conv1d matches a scalar loop oracle") {
  Rng rng(13);
  Tensor x = random_t({2, 3, 9}, rng);
  Tensor w = random_t({2, 3, 3}, rng);
  Tensor b = random_t({2}, rng);
  Tensor y = conv1d<float>(x, w, b, 1);
  const int lo = 9 + 2 - 3 + 1;
  REQUIRE(y.shape() == Shape{2, 2, lo});
  for (int n = 0; n < 2; ++n) {
    for (int co = 0; co < 2; ++co) {
      for (int ol = 0; ol < lo; ++ol) {
        double acc = b[size_t(co)];
        for (int ci = 0; ci < 3; ++ci) {
          for (int k = 0; k < 3; ++k) {
            const int il = ol - 1 + k;
            if (il < 0 || il >= 9) continue;
            acc += double(x.at({n, ci, il})) * double(w.at({co, ci, k}));
          }
        }
        CHECK(std::fabs(double(y.at({n, co, ol})) - acc) <= 1e-6);
      }
    }
  }
}

TEST_CASE("pool trivial values") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool(x, PoolAxes::spatial, PoolMode::avg, PoolWindow::global).value() == 2.5f);
  CHECK(pool(x, PoolAxes::spatial, PoolMode::max, PoolWindow::global).value() == 4.0f);

  Tensor c({1, 2, 1, 1}, {1, 3});
  Tensor cav = pool(c, PoolAxes::channel, PoolMode::avg, PoolWindow::global);
  Tensor cmx = pool(c, PoolAxes::channel, PoolMode::max, PoolWindow::global);
  CHECK(cav.shape() == Shape{1, 1, 1, 1});
  CHECK(cav.value() == 2.0f);
  CHECK(cmx.value() == 3.0f);
}

TEST_CASE("2x2 max pool matches a quadrant oracle") {
  Rng rng(17);
  Tensor x = random_t({2, 3, 4, 4}, rng);
  Tensor y = pool(x, PoolAxes::spatial, PoolMode::max, PoolWindow::window2x2);
  REQUIRE(y.shape() == Shape{2, 3, 2, 2});
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int oy = 0; oy < 2; ++oy) {
        for (int ox = 0; ox < 2; ++ox) {
          float best = -1e30f;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              best = std::max(best, x.at({n, c, 2 * oy + dy, 2 * ox + dx}));
            }
          }
          CHECK(y.at({n, c, oy, ox}) == best);
        }
      }
    }
  }
}

TEST_CASE("2x2 pool rejects odd extents") {
  Tensor x({1, 1, 3, 4});
  CHECK_THROWS_WITH_AS(pool(x, PoolAxes::spatial, PoolMode::max, PoolWindow::window2x2),
                       doctest::Contains("even height"), Error);
}

TEST_CASE("bilinear upsample of constants and single pixels") {
  Tensor c = Tensor::full({1, 2, 3, 3}, 0.7f);
  Tensor up = upsample2x(c);
  CHECK(up.shape() == Shape{1, 2, 6, 6});
  for (size_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(0.7f));

  Tensor one({1, 1, 1, 1}, {0.3f});
  Tensor up1 = upsample2x(one);
  CHECK(up1.shape() == Shape{1, 1, 2, 2});
  for (size_t i = 0; i < 4; ++i) CHECK(up1[i] == 0.3f);
}

TEST_CASE("bilinear upsample matches the closed-form weight oracle") {
  Tensor x({1, 1, 2, 2}, {0, 1, 2, 3});
  Tensor y = upsample2x(x);
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  auto src = [&](int iy, int ix) { return double(x.at({0, 0, iy, ix})); };
  for (int oy = 0; oy < 4; ++oy) {
    for (int ox = 0; ox < 4; ++ox) {
      const double sy = (oy + 0.5) / 2.0 - 0.5;
      const double sx = (ox + 0.5) / 2.0 - 0.5;
      const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      auto cl = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
      const double expect =
          (1 - fy) * ((1 - fx) * src(cl(y0, 2), cl(x0, 2)) + fx * src(cl(y0, 2), cl(x0 + 1, 2))) +
          fy * ((1 - fx) * src(cl(y0 + 1, 2), cl(x0, 2)) + fx * src(cl(y0 + 1, 2), cl(x0 + 1, 2)));
      CHECK(double(y.at({0, 0, oy, ox})) == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax pair symmetry and stability") {
  Tensor z({1, 2}, {0.0f, 0.0f});
  auto [wa, wb] = softmax_pair(z, z);
  CHECK(wa[0] == 0.5f);
  CHECK(wb[0] == 0.5f);

  Rng rng(23);
  Tensor a = random_t({2, 3, 2, 2}, rng, -5.0, 5.0);
  auto [sa, sb] = softmax_pair(a, a);
  for (size_t i = 0; i < sa.numel(); ++i) {
    CHECK(sa[i] == 0.5f);
    CHECK(sb[i] == 0.5f);
  }

  Tensor big({1, 1}, {1000.0f});
  Tensor zero({1, 1}, {0.0f});
  auto [ha, hb] = softmax_pair(big, zero);
  // 64-bit reference: 1/(1+exp(-1000)) is 1 to double precision; the
  // implementation sits a stability floor away from it.
  CHECK(std::isfinite(double(ha[0])));
  CHECK(std::fabs(double(ha[0]) - 1.0) <= 1e-6);
  CHECK(std::fabs(double(hb[0]) - 0.0) <= 1e-6);
  CHECK(ha[0] < 1.0f);
  CHECK(hb[0] > 0.0f);
}

TEST_CASE("softmax pair sums to one for logits up to 1e4") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a = random_t({1, 40}, rng, -1e4, 1e4);
    Tensor b = random_t({1, 40}, rng, -1e4, 1e4);
    auto [wa, wb] = softmax_pair(a, b);
    for (size_t i = 0; i < wa.numel(); ++i) {
      CHECK(std::fabs(double(wa[i]) + double(wb[i]) - 1.0) <= 1e-6);
      CHECK(wa[i] >= 0.0f);
      CHECK(wb[i] >= 0.0f);
    }
  }
}

TEST_CASE("broadcast add/mul accept the two tfam patterns and reject the rest") {
  Rng rng(31);
  Tensor big = random_t({2, 3, 2, 2}, rng);
  Tensor vec = random_t({2, 3}, rng);
  Tensor map = random_t({2, 1, 2, 2}, rng);

  Tensor bc = mul(big, vec);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 4; ++i) {
        CHECK(bc.at({n, c, i / 2, i % 2}) == big.at({n, c, i / 2, i % 2}) * vec.at({n, c}));
      }
    }
  }
  Tensor sp = add(map, big);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      CHECK(sp.at({n, c, 1, 0}) == big.at({n, c, 1, 0}) + map.at({n, 0, 1, 0}));
    }
  }
  CHECK_THROWS_WITH_AS(add(big, Tensor({2, 2})), doctest::Contains("not broadcastable"), Error);
  CHECK_THROWS_AS(mul(big, Tensor({2, 3, 2, 3})), Error);
}

TEST_CASE("channel surgery: interleave, split, concat") {
  // one pixel per channel keeps the bookkeeping readable
  Tensor a({1, 2, 1, 1}, {10, 20});
  Tensor b({1, 2, 1, 1}, {-1, -2});
  Tensor il = interleave(a, b);
  CHECK(il.shape() == Shape{1, 4, 1, 1});
  CHECK(il[0] == 10.0f);
  CHECK(il[1] == -1.0f);
  CHECK(il[2] == 20.0f);
  CHECK(il[3] == -2.0f);

  Tensor x({1, 4, 1, 1}, {1, 2, 3, 4});
  auto [lo, hi] = split_half(x);
  CHECK(lo[0] == 1.0f);
  CHECK(lo[1] == 2.0f);
  CHECK(hi[0] == 3.0f);
  CHECK(hi[1] == 4.0f);

  Tensor back = concat_channels(lo, hi);
  for (size_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);

  CHECK_THROWS_WITH_AS(split_half(Tensor({1, 3, 2, 2})), doctest::Contains("even"), Error);
}

TEST_CASE("hcu channel shuffle is a bijection with an exact inverse") {
  Rng rng(37);
  for (int c : {4, 6, 10}) {
    Tensor x = random_t({2, c, 3, 3}, rng);
    auto [a, b] = split_half(x);
    Tensor y = interleave(a, b);
    REQUIRE(y.shape() == x.shape());
    // inverse permutation: even output channels came from the low half,
    // odd ones from the high half
    const int half = c / 2;
    const size_t inner = 9;
    for (int n = 0; n < 2; ++n) {
      for (int ch = 0; ch < c; ++ch) {
        const int src = ch % 2 == 0 ? ch / 2 : half + ch / 2;
        for (size_t i = 0; i < inner; ++i) {
          CHECK(y.data()[(size_t(n) * c + ch) * inner + i] ==
                x.data()[(size_t(n) * c + src) * inner + i]);
        }
      }
    }
  }
}

TEST_CASE("backward: square sum gives 2x and grad_check agrees") {
  Tape64 tape;
  Tensor64 x({2}, {1.0, 2.0});
  Tensor64 xt = tape.watch(x);
  Tensor64 loss = reduce_sum(mul(xt, xt));
  tape.backward(loss);
  const auto* g = tape.grad(xt);
  REQUIRE(g != nullptr);
  CHECK((*g)[0] == doctest::Approx(2.0));
  CHECK((*g)[1] == doctest::Approx(4.0));

  auto rep = grad_check([](Tape64& t, const Tensor64& p) {
    (void)t;
    return reduce_sum(mul(p, p));
  }, x);
  CHECK(rep.max_rel_err <= 1e-7);
}

TEST_CASE("backward of conv2d and softmax_pair against central differences") {
  Rng rng(41);
  Tensor64 x = random_tensor<double>({1, 2, 5, 5}, rng);
  Tensor64 w = random_tensor<double>({2, 2, 3, 3}, rng);
  auto rep = grad_check([&](Tape64& t, const Tensor64& p) {
    (void)t;
    return reduce_sum(conv2d<double>(p, w, std::nullopt, 1, 1));
  }, x);
  CHECK(rep.max_rel_err <= 1e-5);

  Tensor64 a = random_tensor<double>({2, 4}, rng, -2.0, 2.0);
  Tensor64 b = random_tensor<double>({2, 4}, rng, -2.0, 2.0);
  auto rep2 = grad_check([&](Tape64& t, const Tensor64& p) {
    (void)t;
    return reduce_sum(softmax_pair(p, b).first);
  }, a);
  CHECK(rep2.max_rel_err <= 1e-6);
}

TEST_CASE("backward rejects non-scalar losses and double runs") {
  Tape64 tape;
  Tensor64 x({2, 2}, {1, 2, 3, 4});
  Tensor64 xt = tape.watch(x);
  Tensor64 y = mul(xt, xt);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"), Error);
  Tensor64 s = reduce_sum(y);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), Error);
}

TEST_CASE("gradient accumulation sums over multiple consumers") {
  Tape64 tape;
  Tensor64 x({3}, {1.0, -2.0, 0.5});
  Tensor64 xt = tape.watch(x);
  Tensor64 loss = reduce_sum(add(xt, xt));
  tape.backward(loss);
  const auto* g = tape.grad(xt);
  REQUIRE(g != nullptr);
  for (double v : *g) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("mixing tensors from different tapes is rejected") {
  Tape64 t1, t2;
  Tensor64 a = t1.watch(Tensor64({2}, {1, 2}));
  Tensor64 b = t2.watch(Tensor64({2}, {3, 4}));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("different tapes"), Error);
}

TEST_CASE("every differentiable op passes grad_check at 1e-5 over 20 seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 1299709);
    Tensor64 x4 = random_tensor<double>({1, 2, 4, 4}, rng);
    Tensor64 xk = random_tensor_off_kink<double>({1, 2, 4, 4}, rng);
    Tensor64 w = random_tensor<double>({2, 2, 3, 3}, rng);
    Tensor64 vec = random_tensor<double>({1, 2}, rng);

    auto chk = [&](const char* name, const GradFn& f, const Tensor64& probe, double tol = 1e-5) {
      auto rep = grad_check(f, probe, 1e-5, -1, seed);
      INFO(name << " seed=" << seed << " err=" << rep.max_rel_err);
      CHECK(rep.max_rel_err <= tol);
    };

    chk("conv2d", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(conv2d<double>(p, w, std::nullopt, 1, 1));
    }, x4);
    chk("conv1d", [&](Tape64&, const Tensor64& p) {
      auto r = reshape(p, {1, 2, 16});
      Tensor64 w1({1, 2, 3}, {0.3, -0.2, 0.5, 0.1, 0.4, -0.6});
      return reduce_sum(conv1d<double>(r, w1, std::nullopt, 1));
    }, x4);
    chk("pool_avg", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(pool(p, PoolAxes::spatial, PoolMode::avg, PoolWindow::global));
    }, x4);
    chk("pool_max", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(pool(p, PoolAxes::spatial, PoolMode::max, PoolWindow::global));
    }, xk);
    chk("pool_chan_max", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(pool(p, PoolAxes::channel, PoolMode::max, PoolWindow::global));
    }, xk);
    chk("pool_2x2", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(pool(p, PoolAxes::spatial, PoolMode::max, PoolWindow::window2x2));
    }, xk);
    chk("upsample", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(upsample2x(p));
    }, x4);
    chk("sigmoid", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(sigmoid(p));
    }, x4);
    chk("relu", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(mul(relu(p), relu(p)));
    }, xk);
    chk("mul_chan", [&](Tape64&, const Tensor64& p) {
      return reduce_sum(mul(x4, p));
    }, vec);
    chk("softmax_pair", [&](Tape64&, const Tensor64& p) {
      auto [wa, wb] = softmax_pair(p, vec);
      return add(reduce_sum(wa), scale(reduce_sum(mul(wb, wb)), 0.5));
    }, vec);
    chk("interleave_split", [&](Tape64&, const Tensor64& p) {
      auto [lo, hi] = split_half(p);
      return reduce_sum(mul(interleave(lo, hi), interleave(hi, lo)));
    }, x4);
  }
}
