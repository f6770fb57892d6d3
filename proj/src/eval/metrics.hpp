#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgsln::eval {

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  uint64_t total() const { return tp + fp + fn + tn; }
  void merge(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
  }
};

// 1 iff prob >= threshold.
std::vector<uint8_t> binarize(const std::vector<float>& prob, float threshold = 0.5f);

// Per-pixel tallies; both inputs must hold only 0/1 values of equal length.
ConfusionCounts confusion(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& label);

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R), IoU = tp/(tp+fp+fn).
// A zero denominator yields 0 with the corresponding flag set.
struct Metrics {
  double precision = 0, recall = 0, f1 = 0, iou = 0;
  bool precision_flagged = false, recall_flagged = false;
  bool f1_flagged = false, iou_flagged = false;
};

Metrics metrics(const ConfusionCounts& c);

std::string metrics_table(const ConfusionCounts& c, const Metrics& m);
std::string metrics_csv_row(const Metrics& m);

}  // namespace sgsln::eval
