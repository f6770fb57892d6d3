#include "verify/suite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "core/gradcheck.hpp"
#include "model/model.hpp"
#include "train/loss.hpp"

namespace sgsln::verify {

namespace {

using sgsln::GradFn;
using sgsln::Rng;
using sgsln::Shape;
using sgsln::Tape64;
using sgsln::Tensor64;
using ParamStore64 = sgsln::nn::ParamStoreT<double>;

constexpr double kOpTol = 1e-4;
constexpr double kBlockTol = 1e-4;

// Fixed random reduction head so errors cannot cancel in a plain sum.
std::vector<double> coeffs(size_t n, uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc0eff));
  std::vector<double> c(n);
  for (auto& v : c) v = rng.uniform(0.25, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return c;
}

Tensor64 head(Tape64& tape, const Tensor64& t, uint64_t seed) {
  (void)tape;
  return weighted_sum(t, coeffs(t.numel(), seed));
}

struct SuiteBuilder {
  std::vector<GradCheckEntry> out;
  Rng rng{20240817};

  void run(const std::string& name, const GradFn& f, const Tensor64& probe, double tol,
           int max_coords = -1) {
    const auto rep = sgsln::grad_check(f, probe, 1e-5, max_coords, 0x9d5 + out.size());
    out.push_back(GradCheckEntry{name, rep.max_rel_err, tol, rep.max_rel_err <= tol});
  }
};

ParamStore64 casted_params(const sgsln::nn::ParamStore& p) { return p.cast<double>(); }

}  // namespace

std::vector<GradCheckEntry> gradient_suite() {
  SuiteBuilder b;
  Rng& rng = b.rng;

  // conv2d: stride 1 and 2, with bias, w.r.t. every operand.
  {
    auto x = sgsln::random_tensor<double>({2, 3, 6, 7}, rng);
    auto w = sgsln::random_tensor<double>({4, 3, 3, 3}, rng);
    auto bias = sgsln::random_tensor<double>({4}, rng);
    b.run("conv2d.x", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv2d<double>(p, w, bias, 1, 1), 1);
    }, x, kOpTol);
    b.run("conv2d.w", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv2d<double>(x, p, bias, 1, 1), 2);
    }, w, kOpTol);
    b.run("conv2d.bias", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv2d<double>(x, w, p, 1, 1), 3);
    }, bias, kOpTol);
    auto x2 = sgsln::random_tensor<double>({1, 2, 8, 8}, rng);
    auto w2 = sgsln::random_tensor<double>({3, 2, 3, 3}, rng);
    b.run("conv2d.stride2.x", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv2d<double>(p, w2, std::nullopt, 2, 1), 4);
    }, x2, kOpTol);
  }
  // conv1d
  {
    auto x = sgsln::random_tensor<double>({2, 4, 9}, rng);
    auto w = sgsln::random_tensor<double>({1, 4, 3}, rng);
    b.run("conv1d.x", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv1d<double>(p, w, std::nullopt, 1), 5);
    }, x, kOpTol);
    b.run("conv1d.w", [&](Tape64& t, const Tensor64& p) {
      return head(t, conv1d<double>(x, p, std::nullopt, 1), 6);
    }, w, kOpTol);
  }
  // pools (max variants probe off-kink inputs)
  {
    auto x = sgsln::random_tensor_off_kink<double>({2, 3, 4, 4}, rng);
    using sgsln::PoolAxes;
    using sgsln::PoolMode;
    using sgsln::PoolWindow;
    b.run("pool.spatial.avg", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::spatial, PoolMode::avg, PoolWindow::global), 7);
    }, x, kOpTol);
    b.run("pool.spatial.max", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::spatial, PoolMode::max, PoolWindow::global), 8);
    }, x, kOpTol);
    b.run("pool.channel.avg", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::channel, PoolMode::avg, PoolWindow::global), 9);
    }, x, kOpTol);
    b.run("pool.channel.max", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::channel, PoolMode::max, PoolWindow::global), 10);
    }, x, kOpTol);
    b.run("pool.window2x2.max", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::spatial, PoolMode::max, PoolWindow::window2x2), 11);
    }, x, kOpTol);
    b.run("pool.window2x2.avg", [&](Tape64& t, const Tensor64& p) {
      return head(t, pool(p, PoolAxes::spatial, PoolMode::avg, PoolWindow::window2x2), 12);
    }, x, kOpTol);
  }
  // bilinear upsample
  {
    auto x = sgsln::random_tensor<double>({1, 2, 3, 5}, rng);
    b.run("upsample2x", [&](Tape64& t, const Tensor64& p) {
      return head(t, upsample2x(p), 13);
    }, x, kOpTol);
  }
  // elementwise
  {
    auto x = sgsln::random_tensor<double>({2, 3, 4, 4}, rng, -2.0, 2.0);
    b.run("sigmoid", [&](Tape64& t, const Tensor64& p) { return head(t, sigmoid(p), 14); }, x,
          kOpTol);
    auto xk = sgsln::random_tensor_off_kink<double>({2, 3, 4, 4}, rng, 1.5);
    b.run("relu", [&](Tape64& t, const Tensor64& p) { return head(t, relu(p), 15); }, xk, kOpTol);
    auto big = sgsln::random_tensor<double>({2, 3, 4, 4}, rng);
    auto vec = sgsln::random_tensor<double>({2, 3}, rng);
    auto map = sgsln::random_tensor<double>({2, 1, 4, 4}, rng);
    b.run("add.same", [&](Tape64& t, const Tensor64& p) {
      return head(t, add(p, big), 16);
    }, big, kOpTol);
    b.run("add.channel_vec", [&](Tape64& t, const Tensor64& p) {
      return head(t, add(big, p), 17);
    }, vec, kOpTol);
    b.run("mul.same", [&](Tape64& t, const Tensor64& p) {
      return head(t, mul(p, big), 18);
    }, big, kOpTol);
    b.run("mul.channel_vec", [&](Tape64& t, const Tensor64& p) {
      return head(t, mul(big, p), 19);
    }, vec, kOpTol);
    b.run("mul.spatial_map", [&](Tape64& t, const Tensor64& p) {
      return head(t, mul(big, p), 20);
    }, map, kOpTol);
    b.run("scale", [&](Tape64& t, const Tensor64& p) {
      return head(t, scale(p, 0.7), 21);
    }, big, kOpTol);
  }
  // softmax pair
  {
    auto a = sgsln::random_tensor<double>({2, 5}, rng, -2.0, 2.0);
    auto c = sgsln::random_tensor<double>({2, 5}, rng, -2.0, 2.0);
    b.run("softmax_pair.a", [&](Tape64& t, const Tensor64& p) {
      auto [wa, wb] = softmax_pair(p, c);
      return add(head(t, wa, 22), head(t, wb, 23));
    }, a, kOpTol);
  }
  // channel surgery
  {
    auto a = sgsln::random_tensor<double>({2, 3, 3, 3}, rng);
    auto c = sgsln::random_tensor<double>({2, 2, 3, 3}, rng);
    b.run("concat", [&](Tape64& t, const Tensor64& p) {
      return head(t, concat_channels(p, c), 24);
    }, a, kOpTol);
    auto e = sgsln::random_tensor<double>({2, 4, 3, 3}, rng);
    b.run("split_half", [&](Tape64& t, const Tensor64& p) {
      auto [lo, hi] = split_half(p);
      return add(head(t, lo, 25), head(t, scale(hi, 0.5), 26));
    }, e, kOpTol);
    auto f = sgsln::random_tensor<double>({2, 2, 3, 3}, rng);
    b.run("interleave", [&](Tape64& t, const Tensor64& p) {
      return head(t, interleave(p, f), 27);
    }, f, kOpTol);
    b.run("reshape", [&](Tape64& t, const Tensor64& p) {
      return head(t, reshape(p, {2, 18}), 28);
    }, f, kOpTol);
  }
  // group norm and channel exchange
  {
    auto x = sgsln::random_tensor<double>({2, 8, 4, 4}, rng);
    auto gamma = sgsln::random_tensor<double>({8}, rng, 0.5, 1.5);
    auto beta = sgsln::random_tensor<double>({8}, rng, -0.3, 0.3);
    b.run("group_norm.x", [&](Tape64& t, const Tensor64& p) {
      return head(t, sgsln::nn::group_norm<double>(p, gamma, beta, 4), 29);
    }, x, kOpTol);
    b.run("group_norm.gamma", [&](Tape64& t, const Tensor64& p) {
      return head(t, sgsln::nn::group_norm<double>(x, p, beta, 4), 30);
    }, gamma, kOpTol);
    b.run("group_norm.beta", [&](Tape64& t, const Tensor64& p) {
      return head(t, sgsln::nn::group_norm<double>(x, gamma, p, 4), 31);
    }, beta, kOpTol);
    auto y = sgsln::random_tensor<double>({1, 4, 3, 3}, rng);
    b.run("channel_exchange", [&](Tape64& t, const Tensor64& p) {
      auto [e1, e2] = sgsln::nn::channel_exchange(p, y);
      return add(head(t, e1, 32), head(t, scale(e2, 0.3), 33));
    }, y, kOpTol);
  }
  // bce + dice loss
  {
    auto pred = sgsln::random_tensor<double>({1, 1, 4, 4}, rng, 0.05, 0.95);
    std::vector<double> tv(16);
    for (auto& v : tv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tensor64 target({1, 1, 4, 4}, tv);
    b.run("bce_dice", [&](Tape64& t, const Tensor64& p) {
      (void)t;
      return sgsln::train::bce_dice_loss<double>(p, target);
    }, pred, kOpTol);
  }

  // Blocks: probe the input and one representative parameter each.
  auto block_params = [&](uint64_t seed, const std::function<void(sgsln::nn::ParamStore&, Rng&)>&
                                              registrar) {
    sgsln::nn::ParamStore p;
    Rng prng(seed);
    registrar(p, prng);
    return casted_params(p);
  };

  {
    auto p64 = block_params(11, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_hcu(p, r, "h", 4, 4, 1);
    });
    auto x = sgsln::random_tensor<double>({1, 4, 6, 6}, rng);
    b.run("hcu.stride1.x", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::hcu_forward<double>(p64, "h", probe, 4, 4, 1), 40);
    }, x, kBlockTol);
    auto wk = p64.at("h.core.conv.w");
    b.run("hcu.stride1.w", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("h.core.conv.w", probe);
      return head(t, sgsln::nn::hcu_forward<double>(ps, "h", x, 4, 4, 1), 41);
    }, wk, kBlockTol);
  }
  {
    auto p64 = block_params(12, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_hcu(p, r, "h", 4, 8, 2);
    });
    auto x = sgsln::random_tensor_off_kink<double>({1, 4, 6, 6}, rng);
    b.run("hcu.stride2.x", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::hcu_forward<double>(p64, "h", probe, 4, 8, 2), 42);
    }, x, kBlockTol);
  }
  {
    auto p64 = block_params(13, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_cbam(p, r, "c", 8);
    });
    auto x = sgsln::random_tensor<double>({1, 8, 5, 5}, rng);
    b.run("cbam.x", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::cbam_forward<double>(p64, "c", probe, 8), 43);
    }, x, kBlockTol, 128);
    auto w = p64.at("c.mlp1.w");
    b.run("cbam.mlp1.w", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("c.mlp1.w", probe);
      return head(t, sgsln::nn::cbam_forward<double>(ps, "c", x, 8), 44);
    }, w, kBlockTol);
  }
  {
    auto p64 = block_params(14, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_tfam(p, r, "t", 8);
    });
    auto t1 = sgsln::random_tensor<double>({1, 8, 4, 4}, rng);
    auto t2 = sgsln::random_tensor<double>({1, 8, 4, 4}, rng);
    b.run("tfam.t1", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::tfam_forward<double>(p64, "t", probe, t2, 8), 45);
    }, t1, kBlockTol, 128);
    auto w = p64.at("t.c1.w");
    b.run("tfam.c1.w", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("t.c1.w", probe);
      return head(t, sgsln::nn::tfam_forward<double>(ps, "t", t1, t2, 8), 46);
    }, w, kBlockTol);
  }
  {
    auto p64 = block_params(15, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_encoder_block1(p, r, "e1", 4);
    });
    auto x = sgsln::random_tensor<double>({1, 3, 6, 6}, rng, 0.0, 1.0);
    b.run("encoder_block1.x", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::encoder_block1_forward<double>(p64, "e1", probe, 4), 47);
    }, x, kBlockTol, 96);
  }
  {
    auto p64 = block_params(16, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_encoder_block(p, r, "e", 4, 8, true);
    });
    auto x = sgsln::random_tensor<double>({1, 4, 8, 8}, rng);
    b.run("encoder_block.x", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::encoder_block_forward<double>(p64, "e", probe, 4, 8, true), 48);
    }, x, kBlockTol, 96);
  }
  {
    auto p64 = block_params(17, [](sgsln::nn::ParamStore& p, Rng& r) {
      sgsln::nn::register_change_block(p, r, "cb", 8, 4);
    });
    auto low = sgsln::random_tensor<double>({1, 8, 3, 3}, rng);
    auto skip = sgsln::random_tensor<double>({1, 4, 6, 6}, rng);
    b.run("change_block.low", [&](Tape64& t, const Tensor64& probe) {
      return head(t, sgsln::nn::change_block_forward<double>(p64, "cb", probe, skip, 8, 4), 49);
    }, low, kBlockTol, 96);
  }

  // Full EDED/16 forward: all three heads reduced with fixed coefficients.
  {
    sgsln::model::ModelConfig cfg;
    cfg.variant = sgsln::model::Variant::eded;
    cfg.max_width = 16;
    cfg.seed = 77;
    const sgsln::model::Model m = sgsln::model::build_model(cfg);
    const ParamStore64 p64 = casted_params(m.params);
    auto x = sgsln::random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    auto t2f = sgsln::random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    auto full_loss = [&](Tape64& t, const ParamStore64& ps, const Tensor64& a,
                         const Tensor64& bb) {
      auto masks = sgsln::model::forward_model<double>(cfg, m.widths, ps, a, bb);
      auto l = head(t, masks.fusion, 50);
      l = add(l, head(t, *masks.t1, 51));
      return add(l, head(t, *masks.t2, 52));
    };
    b.run("eded16.forward.x", [&](Tape64& t, const Tensor64& probe) {
      return full_loss(t, p64, probe, t2f);
    }, x, kBlockTol, 48);
    auto w = p64.at("enc1.stem.conv.w");
    b.run("eded16.enc1.stem.w", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("enc1.stem.conv.w", probe);
      return full_loss(t, ps, x, t2f);
    }, w, kBlockTol, 48);
    auto wt = p64.at("tfam3.c1.w");
    b.run("eded16.tfam3.c1.w", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("tfam3.c1.w", probe);
      return full_loss(t, ps, x, t2f);
    }, wt, kBlockTol);
    auto wg = p64.at("fdec2.hcu1.core.norm.gamma");
    b.run("eded16.fdec2.norm.gamma", [&](Tape64& t, const Tensor64& probe) {
      ParamStore64 ps = p64;
      ps.set("fdec2.hcu1.core.norm.gamma", probe);
      return full_loss(t, ps, x, t2f);
    }, wg, kBlockTol, 8);
  }

  return b.out;
}

std::string render_gradient_report(const std::vector<GradCheckEntry>& entries) {
  std::string out = "gradient check (64-bit central differences, eps=1e-5)\n";
  for (const auto& e : entries) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-28s max_rel_err=%.3e  tol=%.0e  %s\n", e.name.c_str(),
                  e.max_rel_err, e.tolerance, e.pass ? "pass" : "FAIL");
    out += buf;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max over suite: %.3e  -> %s\n", suite_max_err(entries),
                all_pass(entries) ? "PASS" : "FAIL");
  out += buf;
  return out;
}

bool all_pass(const std::vector<GradCheckEntry>& entries) {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

double suite_max_err(const std::vector<GradCheckEntry>& entries) {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_err);
  return m;
}

}  // namespace sgsln::verify
