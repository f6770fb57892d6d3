#pragma once

#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "data/augment.hpp"
#include "data/dataset.hpp"
#include "eval/metrics.hpp"
#include "model/model.hpp"
#include "train/optim.hpp"

namespace sgsln::train {

struct EpochLog {
  int epoch = 0;  // 1-based
  float loss = 0.0f;
  eval::Metrics val;  // zeros while validation is skipped
  bool validated = false;
  float lr = 0.0f;  // rate in effect at epoch end
};

std::string log_csv_header();
std::string log_csv_row(const EpochLog& row);

struct TrainResult {
  nn::ParamStore best_params;
  float best_f1 = 0.0f;
  int best_epoch = -1;  // -1 when validation never ran
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string divergence;
};

using ProgressFn = std::function<void(const EpochLog&)>;

// Stacks the referenced samples into batch tensors [B,3,H,W] / [B,1,H,W]
// and the half-resolution branch target.
struct Batch {
  Tensor t1, t2, label, label_half;
};
Batch make_batch(const std::vector<data::SamplePair>& samples, const std::vector<int>& indices);

// Per-epoch schedule: seeded shuffle, optional augmentation (per-sample
// seeds independent of iteration order), forward, triple-branch loss,
// backward, AdamW step, then validation (skipped for the warm-up epochs)
// with reduce-on-plateau. Retains the parameters of the best validation F1;
// a non-finite loss or gradient aborts with the last good state kept.
// MESD trains on the fusion term only regardless of configured weights.
TrainResult train_loop(const RunConfig& cfg, const std::vector<data::SamplePair>& train_set,
                       const std::vector<data::SamplePair>& val_set,
                       const nn::ParamStore* init_params = nullptr,
                       const ProgressFn& progress = {});

// Micro-averaged confusion of the fusion mask at the given threshold.
eval::ConfusionCounts evaluate_confusion(const model::Model& m,
                                         const std::vector<data::SamplePair>& set, int batch,
                                         float threshold = 0.5f);

}  // namespace sgsln::train
