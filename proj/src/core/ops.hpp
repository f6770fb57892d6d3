#pragma once

#include <optional>
#include <utility>

#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace sgsln {

// Dense kernels for exactly the operator set the network needs. All forward
// accumulations run in the tensor's scalar type with a fixed left-to-right
// summation order, so results are reproducible run to run and (for f32)
// bit-identical to the scalar reference loops used in the tests.
//
// Every operation records its backward on the operands' tape when at least
// one operand is tracked; untracked inputs yield a plain untracked result.

// 2-d cross-correlation. x:[N,Cin,H,W], w:[Cout,Cin,k,k], bias:[Cout].
// k odd, stride 1 or 2, H' = floor((H + 2*padding - k)/stride) + 1.
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w,
                  const std::optional<TensorT<S>>& bias, int stride, int padding);

// 1-d cross-correlation. x:[N,Cin,L], w:[Cout,Cin,k], L' = L + 2*padding - k + 1.
template <class S>
TensorT<S> conv1d(const TensorT<S>& x, const TensorT<S>& w,
                  const std::optional<TensorT<S>>& bias, int padding);

enum class PoolAxes { spatial, channel };
enum class PoolMode { avg, max };
enum class PoolWindow { global, window2x2 };

// Pooling over x:[N,C,H,W].
//   spatial/global   -> [N,C]
//   channel/global   -> [N,1,H,W]
//   spatial/window2x2 (stride 2) -> [N,C,H/2,W/2], even H and W required
// Max routes the gradient to the first maximal element in row-major scan
// order; avg spreads it uniformly.
template <class S>
TensorT<S> pool(const TensorT<S>& x, PoolAxes axes, PoolMode mode, PoolWindow window);

// Bilinear x2 upsampling, align-corners false. [N,C,H,W] -> [N,C,2H,2W].
// Backward splats with the same interpolation weights.
template <class S>
TensorT<S> upsample2x(const TensorT<S>& x);

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x);

template <class S>
TensorT<S> relu(const TensorT<S>& x);

// add/mul accept equal shapes plus the two broadcast patterns the fusion
// attention needs: a channel vector [N,C] against [N,C,H,W], and a spatial
// map [N,1,H,W] against [N,C,H,W]. Anything else is rejected.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> scale(const TensorT<S>& x, S factor);

// Pairwise softmax with max-subtraction: (e^a, e^b)/(e^a + e^b).
// Outputs share a's shape and sum to 1 elementwise.
template <class S>
std::pair<TensorT<S>, TensorT<S>> softmax_pair(const TensorT<S>& a, const TensorT<S>& b);

// Channel-dimension surgery for rank-3 [N,C,L] or rank-4 [N,C,H,W] tensors.
template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
std::pair<TensorT<S>, TensorT<S>> split_half(const TensorT<S>& x);

// interleave(a,b) puts a's channel i at output channel 2i and b's at 2i+1.
template <class S>
TensorT<S> interleave(const TensorT<S>& a, const TensorT<S>& b);

// Numel-preserving view; shares the payload.
template <class S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape);

// sum_i coeffs[i] * x[i], as a scalar. Reduction head for losses and the
// gradient-check harness.
template <class S>
TensorT<S> weighted_sum(const TensorT<S>& x, const std::vector<S>& coeffs);

template <class S>
TensorT<S> reduce_sum(const TensorT<S>& x);

}  // namespace sgsln
