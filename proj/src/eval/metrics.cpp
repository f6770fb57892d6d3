#include "eval/metrics.hpp"

#include <cstdio>

#include "core/error.hpp"

namespace sgsln::eval {

std::vector<uint8_t> binarize(const std::vector<float>& prob, float threshold) {
  std::vector<uint8_t> out(prob.size());
  for (size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= threshold ? 1 : 0;
  return out;
}

ConfusionCounts confusion(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& label) {
  check(pred.size() == label.size(), "confusion: prediction holds ", pred.size(),
        " pixels but the label holds ", label.size());
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    check(pred[i] <= 1, "confusion: prediction is not binary at pixel ", i);
    check(label[i] <= 1, "confusion: label is not binary at pixel ", i);
    if (pred[i] == 1) {
      label[i] == 1 ? ++c.tp : ++c.fp;
    } else {
      label[i] == 1 ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const double tp = double(c.tp);
  if (c.tp + c.fp > 0) {
    m.precision = tp / double(c.tp + c.fp);
  } else {
    m.precision_flagged = true;
  }
  if (c.tp + c.fn > 0) {
    m.recall = tp / double(c.tp + c.fn);
  } else {
    m.recall_flagged = true;
  }
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_flagged = true;
  }
  if (c.tp + c.fp + c.fn > 0) {
    m.iou = tp / double(c.tp + c.fp + c.fn);
  } else {
    m.iou_flagged = true;
  }
  return m;
}

std::string metrics_table(const ConfusionCounts& c, const Metrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "pixels    tp=%llu fp=%llu fn=%llu tn=%llu\n"
                "precision %.6f%s\n"
                "recall    %.6f%s\n"
                "f1        %.6f%s\n"
                "iou       %.6f%s\n",
                (unsigned long long)c.tp, (unsigned long long)c.fp, (unsigned long long)c.fn,
                (unsigned long long)c.tn, m.precision,
                m.precision_flagged ? " (no predicted positives)" : "", m.recall,
                m.recall_flagged ? " (no labeled positives)" : "", m.f1,
                m.f1_flagged ? " (undefined)" : "", m.iou, m.iou_flagged ? " (undefined)" : "");
  return buf;
}

std::string metrics_csv_row(const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", m.precision, m.recall, m.f1, m.iou);
  return buf;
}

}  // namespace sgsln::eval
