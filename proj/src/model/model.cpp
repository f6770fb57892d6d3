#include "model/model.hpp"

#include <algorithm>

namespace sgsln::model {

using nn::ParamStore;
using nn::ParamStoreT;

Variant variant_from_string(const std::string& s) {
  if (s == "eded" || s == "EDED") return Variant::eded;
  if (s == "ded" || s == "DED") return Variant::ded;
  if (s == "mesd" || s == "MESD") return Variant::mesd;
  fail("unknown backbone variant '", s, "' (expected eded, ded, or mesd)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::eded: return "eded";
    case Variant::ded: return "ded";
    case Variant::mesd: return "mesd";
  }
  fail("invalid variant value");
}

std::array<int, 5> channel_schedule(int max_width) {
  check(max_width >= 16 && max_width % 16 == 0, "max_width must be a positive multiple of 16, got ",
        max_width);
  std::array<int, 5> widths{};
  for (int i = 0; i < 5; ++i) widths[size_t(i)] = std::max(2, max_width >> (4 - i));
  return widths;
}

namespace {

void validate_config(const ModelConfig& cfg) {
  check(cfg.max_width >= 16 && cfg.max_width % 16 == 0,
        "max_width must be a positive multiple of 16, got ", cfg.max_width);
  check(cfg.exchange_position >= 1 && cfg.exchange_position <= 5,
        "exchange_position must be in [1,5], got ", cfg.exchange_position);
}

}  // namespace

Model build_model(const ModelConfig& config) {
  validate_config(config);
  Model m;
  m.config = config;
  m.widths = channel_schedule(config.max_width);
  const auto& cw = m.widths;
  Rng rng(mix_seed(config.seed, 0x5157u));
  ParamStore& p = m.params;

  nn::register_encoder_block1(p, rng, "enc1", cw[0]);
  for (int k = 2; k <= 5; ++k) {
    nn::register_encoder_block(p, rng, "enc" + std::to_string(k), cw[size_t(k - 2)],
                               cw[size_t(k - 1)], config.cbam);
  }

  if (config.variant == Variant::mesd) {
    // Decision-level fusion is absent: bitemporal encoder features are
    // concatenated and reduced at every scale, then a single decoder runs
    // to full resolution.
    for (int k = 5; k >= 1; --k) {
      nn::register_conv2d(p, rng, "mfuse" + std::to_string(k), 2 * cw[size_t(k - 1)],
                          cw[size_t(k - 1)], 1, true);
    }
    for (int k = 4; k >= 1; --k) {
      nn::register_change_block(p, rng, "fdec" + std::to_string(k), cw[size_t(k)],
                                cw[size_t(k - 1)]);
    }
    nn::register_head(p, rng, "fhead", cw[0]);
    return m;
  }

  // EDED / DED: shared branch decoder with half-resolution heads plus the
  // fusion column (one TFAM per scale feeding fusion change blocks).
  for (int k = 4; k >= 2; --k) {
    nn::register_change_block(p, rng, "dec" + std::to_string(k), cw[size_t(k)],
                              cw[size_t(k - 1)]);
  }
  nn::register_head(p, rng, "bhead", cw[1]);
  for (int k = 5; k >= 1; --k) {
    nn::register_tfam(p, rng, "tfam" + std::to_string(k), cw[size_t(k - 1)]);
  }
  for (int k = 4; k >= 1; --k) {
    nn::register_change_block(p, rng, "fdec" + std::to_string(k), cw[size_t(k)],
                              cw[size_t(k - 1)]);
  }
  nn::register_head(p, rng, "fhead", cw[0]);
  return m;
}

template <class S>
MasksT<S> forward_model(const ModelConfig& config, const std::array<int, 5>& widths,
                        const ParamStoreT<S>& params, const TensorT<S>& t1,
                        const TensorT<S>& t2, ForwardTraceT<S>* trace) {
  validate_config(config);
  check(t1.defined() && t2.defined(), "forward: undefined input");
  check(t1.shape() == t2.shape(), "forward: bitemporal shapes ", shape_str(t1.shape()), " and ",
        shape_str(t2.shape()), " differ");
  check(t1.rank() == 4 && t1.dim(1) == 3, "forward: inputs must be [N,3,H,W], got ",
        shape_str(t1.shape()));
  const int h = t1.dim(2), w = t1.dim(3);
  check(h % 32 == 0 && w % 32 == 0, "forward: input extents ", h, "x", w,
        " must be divisible by 32; pad to ", (h + 31) / 32 * 32, "x", (w + 31) / 32 * 32);
  const auto& cw = widths;
  const bool exchange = config.variant == Variant::eded;

  // Shared dual encoder. `skips` hold each block's own output (the tap the
  // decoders fuse); `fa`/`fb` is the stream entering the next stage, which
  // is where the channel exchange applies.
  std::array<TensorT<S>, 5> skips_a, skips_b;
  TensorT<S> fa, fb;
  for (int k = 1; k <= 5; ++k) {
    const std::string name = "enc" + std::to_string(k);
    if (k == 1) {
      fa = nn::encoder_block1_forward(params, name, t1, cw[0]);
      fb = nn::encoder_block1_forward(params, name, t2, cw[0]);
    } else {
      fa = nn::encoder_block_forward(params, name, fa, cw[size_t(k - 2)], cw[size_t(k - 1)],
                                     config.cbam);
      fb = nn::encoder_block_forward(params, name, fb, cw[size_t(k - 2)], cw[size_t(k - 1)],
                                     config.cbam);
    }
    skips_a[size_t(k - 1)] = fa;
    skips_b[size_t(k - 1)] = fb;
    if (exchange && config.exchange_position == k) {
      auto swapped = nn::channel_exchange(fa, fb);
      fa = std::move(swapped.first);
      fb = std::move(swapped.second);
    }
    if (trace) {
      trace->enc_t1.push_back(fa);
      trace->enc_t2.push_back(fb);
    }
  }

  MasksT<S> out;

  if (config.variant == Variant::mesd) {
    std::array<TensorT<S>, 5> fused;
    for (int k = 1; k <= 5; ++k) {
      const std::string name = "mfuse" + std::to_string(k);
      const auto& ea = k == 5 ? fa : skips_a[size_t(k - 1)];
      const auto& eb = k == 5 ? fb : skips_b[size_t(k - 1)];
      fused[size_t(k - 1)] =
          conv2d<S>(concat_channels(ea, eb), params.at(name + ".w"), params.at(name + ".b"), 1, 0);
    }
    TensorT<S> f = fused[4];
    for (int k = 4; k >= 1; --k) {
      f = nn::change_block_forward(params, "fdec" + std::to_string(k), f, fused[size_t(k - 1)],
                                   cw[size_t(k)], cw[size_t(k - 1)]);
    }
    out.fusion = nn::head_forward(params, "fhead", f);
    return out;
  }

  // Branch decoders (shared parameters), producing half-resolution masks.
  TensorT<S> da = fa, db = fb;
  const TensorT<S> deepest_a = fa, deepest_b = fb;
  std::array<TensorT<S>, 3> dec_a, dec_b;  // scales 1/8, 1/4, 1/2
  for (int k = 4; k >= 2; --k) {
    const std::string name = "dec" + std::to_string(k);
    da = nn::change_block_forward(params, name, da, skips_a[size_t(k - 1)], cw[size_t(k)],
                                  cw[size_t(k - 1)]);
    db = nn::change_block_forward(params, name, db, skips_b[size_t(k - 1)], cw[size_t(k)],
                                  cw[size_t(k - 1)]);
    dec_a[size_t(4 - k)] = da;
    dec_b[size_t(4 - k)] = db;
    if (trace) {
      trace->dec_t1.push_back(da);
      trace->dec_t2.push_back(db);
    }
  }
  out.t1 = nn::head_forward(params, "bhead", da);
  out.t2 = nn::head_forward(params, "bhead", db);

  // Fusion column: TFAM arbitration at every scale, change blocks up to the
  // full input resolution.
  TensorT<S> f = nn::tfam_forward(params, "tfam5", deepest_a, deepest_b, cw[4]);
  for (int k = 4; k >= 1; --k) {
    TensorT<S> skip;
    if (k == 1) {
      skip = nn::tfam_forward(params, "tfam1", skips_a[0], skips_b[0], cw[0]);
    } else {
      skip = nn::tfam_forward(params, "tfam" + std::to_string(k), dec_a[size_t(4 - k)],
                              dec_b[size_t(4 - k)], cw[size_t(k - 1)]);
    }
    f = nn::change_block_forward(params, "fdec" + std::to_string(k), f, skip, cw[size_t(k)],
                                 cw[size_t(k - 1)]);
  }
  out.fusion = nn::head_forward(params, "fhead", f);
  return out;
}

Masks forward(const Model& m, const Tensor& t1, const Tensor& t2) {
  return forward_model<float>(m.config, m.widths, m.params, t1, t2, nullptr);
}

ParamReport count_params(const Model& m) {
  ParamReport rep;
  for (const auto& name : m.params.names()) {
    const size_t n = m.params.at(name).numel();
    const std::string module = name.substr(0, name.find('.'));
    if (rep.per_module.empty() || rep.per_module.back().first != module) {
      rep.per_module.emplace_back(module, 0);
    }
    rep.per_module.back().second += n;
    rep.total += n;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// FLOP accounting

double conv2d_flops(int c_in, int c_out, int k, int h_out, int w_out) {
  return 2.0 * double(c_out) * c_in * k * k * double(h_out) * w_out;
}

namespace {

double conv1d_flops(int c_in, int c_out, int k, int l_out) {
  return 2.0 * double(c_out) * c_in * k * double(l_out);
}

double hcu_flops(int c_in, int c_out, int stride, int h_in, int w_in) {
  const int ho = stride == 2 ? h_in / 2 : h_in;
  const int wo = stride == 2 ? w_in / 2 : w_in;
  double fl = conv2d_flops(c_in / 2, c_out / 2, 3, ho, wo);
  fl += 2.0 * (c_out / 2) * double(ho) * wo;  // norm + relu
  if (stride == 2) fl += double(c_in / 2) * ho * wo;  // max pool
  if (c_in != c_out) fl += conv2d_flops(c_in / 2, c_out / 2, 1, ho, wo);
  return fl;
}

double cbam_flops(int c, int h, int w) {
  const int hidden = nn::cbam_hidden(c);
  double fl = 2.0 * c;                                    // global avg+max descriptors
  fl += 2.0 * (conv2d_flops(c, hidden, 1, 1, 1) + double(hidden) +
               conv2d_flops(hidden, c, 1, 1, 1));         // shared bottleneck (+relu)
  fl += 2.0 * c;                                          // add + sigmoid
  fl += double(c) * h * w;                                // channel gate
  fl += 2.0 * h * w;                                      // channel avg+max maps
  fl += conv2d_flops(2, 1, 7, h, w) + double(h) * w;      // spatial conv + sigmoid
  fl += double(c) * h * w;                                // spatial gate
  return fl;
}

double tfam_flops(int c, int h, int w) {
  const int k = nn::eca_kernel_size(c);
  double fl = 4.0 * c + 4.0 * h * w;                        // pooled descriptors/maps
  fl += 2.0 * conv1d_flops(4, 1, k, c) + 2.0 * c;           // channel logits + softmax
  fl += 2.0 * conv2d_flops(4, 1, 7, h, w) + 2.0 * h * w;    // spatial logits + softmax
  fl += 4.0 * double(c) * h * w + 3.0 * double(c) * h * w;  // weighted sum of branches
  return fl;
}

double conv_norm_act_flops(int c_in, int c_out, int k, int h, int w) {
  return conv2d_flops(c_in, c_out, k, h, w) + 2.0 * double(c_out) * h * w;
}

double encoder_block1_flops(int c1, int h, int w) {
  return conv_norm_act_flops(3, c1, 3, h, w) + 2.0 * hcu_flops(c1, c1, 1, h, w);
}

double encoder_block_flops(int c_in, int c_out, bool cbam, int h_in, int w_in) {
  const int h = h_in / 2, w = w_in / 2;
  double fl = hcu_flops(c_in, c_out, 2, h_in, w_in);
  fl += 2.0 * hcu_flops(c_out, c_out, 1, h, w);
  fl += conv_norm_act_flops(c_out, c_out, 3, h, w);
  if (cbam) fl += cbam_flops(c_out, h, w);
  return fl;
}

double change_block_flops(int c_low, int c_out, int h_low, int w_low) {
  const int h = 2 * h_low, w = 2 * w_low;
  double fl = double(c_low) * h * w;  // bilinear upsample
  fl += conv2d_flops(c_low, c_out, 1, h, w);
  fl += hcu_flops(2 * c_out, c_out, 1, h, w);
  fl += hcu_flops(c_out, c_out, 1, h, w);
  return fl;
}

double head_flops(int c, int h, int w) {
  return conv2d_flops(c, 1, 1, h, w) + double(h) * w;
}

}  // namespace

double estimate_flops(const ModelConfig& config, int height, int width) {
  validate_config(config);
  check(height % 32 == 0 && width % 32 == 0, "estimate_flops: extents ", height, "x", width,
        " must be divisible by 32");
  const auto cw = channel_schedule(config.max_width);

  // Stage extents: stage k feature map is at 1/2^(k-1) of the input.
  std::array<int, 5> hs{}, ws{};
  for (int k = 0; k < 5; ++k) {
    hs[size_t(k)] = height >> k;
    ws[size_t(k)] = width >> k;
  }

  // Dual encoder: shared weights, two executions.
  double fl = 2.0 * encoder_block1_flops(cw[0], hs[0], ws[0]);
  for (int k = 2; k <= 5; ++k) {
    fl += 2.0 * encoder_block_flops(cw[size_t(k - 2)], cw[size_t(k - 1)], config.cbam,
                                    hs[size_t(k - 2)], ws[size_t(k - 2)]);
  }

  if (config.variant == Variant::mesd) {
    for (int k = 1; k <= 5; ++k) {
      fl += conv2d_flops(2 * cw[size_t(k - 1)], cw[size_t(k - 1)], 1, hs[size_t(k - 1)],
                         ws[size_t(k - 1)]);
    }
    for (int k = 4; k >= 1; --k) {
      fl += change_block_flops(cw[size_t(k)], cw[size_t(k - 1)], hs[size_t(k)], ws[size_t(k)]);
    }
    fl += head_flops(cw[0], hs[0], ws[0]);
    return fl;
  }

  // Branch decoders: shared weights, two executions; heads at 1/2.
  for (int k = 4; k >= 2; --k) {
    fl += 2.0 * change_block_flops(cw[size_t(k)], cw[size_t(k - 1)], hs[size_t(k)],
                                   ws[size_t(k)]);
  }
  fl += 2.0 * head_flops(cw[1], hs[1], ws[1]);

  // Fusion column.
  fl += tfam_flops(cw[4], hs[4], ws[4]);
  for (int k = 4; k >= 1; --k) {
    fl += tfam_flops(cw[size_t(k - 1)], hs[size_t(k - 1)], ws[size_t(k - 1)]);
    fl += change_block_flops(cw[size_t(k)], cw[size_t(k - 1)], hs[size_t(k)], ws[size_t(k)]);
  }
  fl += head_flops(cw[0], hs[0], ws[0]);
  return fl;
}

// ---------------------------------------------------------------------------

#define SGSLN_INSTANTIATE_MODEL(S)                                                  \
  template MasksT<S> forward_model<S>(const ModelConfig&, const std::array<int, 5>&, \
                                      const ParamStoreT<S>&, const TensorT<S>&,      \
                                      const TensorT<S>&, ForwardTraceT<S>*);

SGSLN_INSTANTIATE_MODEL(float)
SGSLN_INSTANTIATE_MODEL(double)

#undef SGSLN_INSTANTIATE_MODEL

}  // namespace sgsln::model
