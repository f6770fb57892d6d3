#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nn/blocks.hpp"
#include "nn/params.hpp"

namespace sgsln::model {

enum class Variant { eded, ded, mesd };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::eded;
  int max_width = 512;        // top encoder width; divisible by 16
  int exchange_position = 3;  // 1..5; meaningful for EDED only
  bool cbam = true;
  float w_fusion = 1.0f;      // triple-supervision loss weights
  float w_t1 = 0.5f;
  float w_t2 = 0.5f;
  uint64_t seed = 0;
};

// Five-stage schedule [B, 2B, 4B, 8B, 16B] with 16B = max_width; stages are
// clamped to >= 2 channels so the half-convolution split stays possible.
std::array<int, 5> channel_schedule(int max_width);

struct Model {
  ModelConfig config;
  std::array<int, 5> widths{};
  nn::ParamStore params;
};

// Registers every learnable tensor for the configured variant, seeded from
// config.seed. The two temporal branches share one encoder and one decoder
// parameter set; channel exchange adds no parameters, so EDED and DED
// produce identical stores.
Model build_model(const ModelConfig& config);

template <class S>
struct MasksT {
  TensorT<S> fusion;                // [N,1,H,W]
  std::optional<TensorT<S>> t1;     // [N,1,H/2,W/2]; absent for MESD
  std::optional<TensorT<S>> t2;
};
using Masks = MasksT<float>;

// Per-branch intermediate features, captured on demand by tests and tools.
// `enc` holds the stream entering the next stage (so it reflects the channel
// exchange at the configured position); `dec` holds the branch decoder
// outputs from deep to shallow.
template <class S>
struct ForwardTraceT {
  std::vector<TensorT<S>> enc_t1, enc_t2;
  std::vector<TensorT<S>> dec_t1, dec_t2;
};

// Forward pass. Inputs are [N,3,H,W] with H and W divisible by 32.
template <class S>
MasksT<S> forward_model(const ModelConfig& config, const std::array<int, 5>& widths,
                        const nn::ParamStoreT<S>& params, const TensorT<S>& t1,
                        const TensorT<S>& t2, ForwardTraceT<S>* trace = nullptr);

Masks forward(const Model& m, const Tensor& t1, const Tensor& t2);

// Learnable-scalar counts grouped by top-level module name, in registration
// order, plus the grand total.
struct ParamReport {
  std::vector<std::pair<std::string, size_t>> per_module;
  size_t total = 0;
};
ParamReport count_params(const Model& m);

// FLOPs for one forward pass at the given input extent: every conv counted
// as 2*Cout*Cin*k^2*H'*W', pooling/elementwise/sampling at one op per output
// element. Shared blocks are charged once per execution.
double conv2d_flops(int c_in, int c_out, int k, int h_out, int w_out);
double estimate_flops(const ModelConfig& config, int height, int width);

}  // namespace sgsln::model
