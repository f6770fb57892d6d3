#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "eval/metrics.hpp"

using namespace sgsln;
using namespace sgsln::eval;

TEST_CASE("binarize uses the >= convention at the threshold") {
  const auto out = binarize({0.5f, 0.4999f, 0.0f, 1.0f}, 0.5f);
  CHECK(out == std::vector<uint8_t>{1, 0, 0, 1});
  const auto zeros = binarize(std::vector<float>(8, 0.0f));
  for (uint8_t v : zeros) CHECK(v == 0);
}

TEST_CASE("binarize matches an elementwise comparison on random maps") {
  Rng rng(3);
  std::vector<float> prob(256);
  for (auto& v : prob) v = float(rng.uniform());
  const auto out = binarize(prob, 0.5f);
  for (size_t i = 0; i < prob.size(); ++i) CHECK(out[i] == (prob[i] >= 0.5f ? 1 : 0));
}

TEST_CASE("perfect predictions score one everywhere") {
  const std::vector<uint8_t> mask{1, 0, 1, 1, 0};
  const Metrics m = metrics(confusion(mask, mask));
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.iou == 1.0);
}

TEST_CASE("degenerate denominators flag and zero the metric") {
  const std::vector<uint8_t> none(6, 0);
  const std::vector<uint8_t> label{1, 1, 0, 0, 0, 0};
  const Metrics m = metrics(confusion(none, label));
  CHECK(m.precision == 0.0);
  CHECK(m.precision_flagged);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.iou == 0.0);
}

TEST_CASE("closed-form confusion arithmetic") {
  ConfusionCounts c;
  c.tp = 80;
  c.fp = 20;
  c.fn = 20;
  c.tn = 100;
  const Metrics m = metrics(c);
  CHECK(m.precision == doctest::Approx(0.8));
  CHECK(m.recall == doctest::Approx(0.8));
  CHECK(m.f1 == doctest::Approx(0.8));
  CHECK(m.iou == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("non-binary inputs are rejected") {
  CHECK_THROWS_AS(confusion({2, 0}, {1, 0}), Error);
  CHECK_THROWS_AS(confusion({1, 0}, {1}), Error);
}

TEST_CASE("metrics agree with a per-pixel brute force on 1000 random masks") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<uint8_t> pred(256), label(256);
    for (auto& v : pred) v = rng.bernoulli(0.4) ? 1 : 0;
    for (auto& v : label) v = rng.bernoulli(0.4) ? 1 : 0;
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] && label[i]) ++tp;
      if (pred[i] && !label[i]) ++fp;
      if (!pred[i] && label[i]) ++fn;
      if (!pred[i] && !label[i]) ++tn;
    }
    const ConfusionCounts c = confusion(pred, label);
    CHECK(c.tp == tp);
    CHECK(c.fp == fp);
    CHECK(c.fn == fn);
    CHECK(c.tn == tn);
    CHECK(c.total() == pred.size());

    const Metrics m = metrics(c);
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    CHECK(m.precision == p);
    CHECK(m.recall == r);
    if (p + r > 0) CHECK(m.f1 == 2.0 * p * r / (p + r));
    if (tp + fp + fn > 0) CHECK(m.iou == double(tp) / double(tp + fp + fn));

    // F1 and IoU are algebraically locked together
    if (!m.f1_flagged && !m.iou_flagged) {
      CHECK(std::fabs(m.f1 - 2.0 * m.iou / (1.0 + m.iou)) <= 1e-12);
    }
  }
}

TEST_CASE("counts merge additively across shards") {
  Rng rng(11);
  std::vector<uint8_t> pred(128), label(128);
  for (auto& v : pred) v = rng.bernoulli(0.5) ? 1 : 0;
  for (auto& v : label) v = rng.bernoulli(0.5) ? 1 : 0;
  ConfusionCounts whole = confusion(pred, label);
  ConfusionCounts a = confusion({pred.begin(), pred.begin() + 64},
                                {label.begin(), label.begin() + 64});
  ConfusionCounts b = confusion({pred.begin() + 64, pred.end()},
                                {label.begin() + 64, label.end()});
  a.merge(b);
  CHECK(a.tp == whole.tp);
  CHECK(a.fp == whole.fp);
  CHECK(a.fn == whole.fn);
  CHECK(a.tn == whole.tn);
}

TEST_CASE("report renders a table and a csv row") {
  ConfusionCounts c;
  c.tp = 10;
  c.fp = 5;
  c.fn = 5;
  c.tn = 80;
  const Metrics m = metrics(c);
  const std::string table = metrics_table(c, m);
  CHECK(table.find("precision") != std::string::npos);
  CHECK(metrics_csv_row(m) == "0.666667,0.666667,0.666667,0.500000");
}
