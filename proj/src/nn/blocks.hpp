#pragma once

#include <string>
#include <utility>

#include "core/ops.hpp"
#include "nn/params.hpp"

namespace sgsln::nn {

// Group size for feature normalization: groups of min(8, C) channels.
int norm_group_size(int channels);

// Adaptive odd kernel for the 1-d channel-attention convolutions:
// t = floor((log2(C) + 1) / 2), rounded up to odd, clamped to >= 3.
int eca_kernel_size(int channels);

// CBAM bottleneck width: reduction ratio 16, clamped to >= 4 units.
int cbam_hidden(int channels);

// ---------------------------------------------------------------------------
// differentiable primitives used by the blocks

// Per-group feature normalization over [N,C,H,W] with learnable per-channel
// scale/shift. Groups of `group_size` consecutive channels are normalized
// together with biased variance across (group channels x H x W) per sample.
template <class S>
TensorT<S> group_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      int group_size, S eps = S(1e-5));

// Parameter-free alternating channel swap (even channels keep their source,
// odd channels trade places). An involution; gradients route back to the
// source tensor of each channel.
template <class S>
std::pair<TensorT<S>, TensorT<S>> channel_exchange(const TensorT<S>& t1, const TensorT<S>& t2);

// ---------------------------------------------------------------------------
// blocks: registration builds the named parameters a forward expects under
// the same prefix. All forwards are pure functions of (params, inputs).

// 3x3 (or kxk) conv + group norm + relu; conv has no bias.
void register_conv_norm_act(ParamStore& p, Rng& rng, const std::string& prefix, int c_in,
                            int c_out, int k);
template <class S>
TensorT<S> conv_norm_act(const ParamStoreT<S>& p, const std::string& prefix,
                         const TensorT<S>& x, int k, int stride);

// Half-convolution unit: split channels, 3x3 conv+norm+relu on one half,
// identity (stride 1) or 2x2 max-pool (stride 2) on the residual half with a
// 1x1 conv when the width changes, then alternate interleave.
void register_hcu(ParamStore& p, Rng& rng, const std::string& prefix, int c_in, int c_out,
                  int stride);
template <class S>
TensorT<S> hcu_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& x,
                       int c_in, int c_out, int stride);

// Learnable scalars in the HCU core conv path (the 1/4-of-a-full-conv claim).
size_t hcu_core_conv_params(int c_in, int c_out);

// Channel attention (shared two-layer bottleneck over spatial avg/max
// vectors) followed by spatial attention (7x7 conv over channel avg/max
// maps), both sigmoid-gated.
void register_cbam(ParamStore& p, Rng& rng, const std::string& prefix, int channels);
template <class S>
TensorT<S> cbam_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& x,
                        int channels);

// Temporal fusion attention: pairwise-softmax channel weights from 1-d convs
// over stacked pooled descriptors, spatial analogue with 7x7 convs, then
// Output = (W'c1 + W's1) * T1 + (W'c2 + W's2) * T2.
void register_tfam(ParamStore& p, Rng& rng, const std::string& prefix, int channels);
template <class S>
TensorT<S> tfam_forward(const ParamStoreT<S>& p, const std::string& prefix, const TensorT<S>& t1,
                        const TensorT<S>& t2, int channels);

// Encoder block 1: stem conv (3 -> c1) + norm + relu, then two stride-1 HCUs;
// no downsampling.
void register_encoder_block1(ParamStore& p, Rng& rng, const std::string& prefix, int c1);
template <class S>
TensorT<S> encoder_block1_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                  const TensorT<S>& x, int c1);

// Encoder blocks 2-5: stride-2 HCU, two stride-1 HCUs, channel-preserving
// 3x3 conv + norm + relu, then CBAM.
void register_encoder_block(ParamStore& p, Rng& rng, const std::string& prefix, int c_in,
                            int c_out, bool cbam);
template <class S>
TensorT<S> encoder_block_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                 const TensorT<S>& x, int c_in, int c_out, bool cbam);

// Change block: bilinear x2 upsample of `low`, 1x1 conv to the skip width,
// channel concat with `skip`, then two stride-1 HCUs back to the skip width.
void register_change_block(ParamStore& p, Rng& rng, const std::string& prefix, int c_low,
                           int c_out);
template <class S>
TensorT<S> change_block_forward(const ParamStoreT<S>& p, const std::string& prefix,
                                const TensorT<S>& low, const TensorT<S>& skip, int c_low,
                                int c_out);

// Mask head: 1x1 conv to one channel + sigmoid.
void register_head(ParamStore& p, Rng& rng, const std::string& prefix, int c_in);
template <class S>
TensorT<S> head_forward(const ParamStoreT<S>& p, const std::string& prefix,
                        const TensorT<S>& x);

}  // namespace sgsln::nn
