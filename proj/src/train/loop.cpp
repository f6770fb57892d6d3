#include "train/loop.hpp"

#include <cmath>
#include <cstdio>

#include "train/loss.hpp"

namespace sgsln::train {

std::string log_csv_header() { return "epoch,loss,precision,recall,f1,iou,lr"; }

std::string log_csv_row(const EpochLog& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.8f,%.6f,%.6f,%.6f,%.6f,%.8f", row.epoch,
                double(row.loss), row.val.precision, row.val.recall, row.val.f1, row.val.iou,
                double(row.lr));
  return buf;
}

Batch make_batch(const std::vector<data::SamplePair>& samples, const std::vector<int>& indices) {
  check(!indices.empty(), "make_batch: empty index set");
  const data::SamplePair& first = samples.at(size_t(indices[0]));
  const int h = first.t1.h, w = first.t1.w;
  const int b = int(indices.size());
  std::vector<float> t1(size_t(b) * 3 * h * w), t2(t1.size());
  std::vector<float> label(size_t(b) * h * w);
  std::vector<float> half(size_t(b) * (h / 2) * (w / 2));
  for (int i = 0; i < b; ++i) {
    const data::SamplePair& s = samples.at(size_t(indices[size_t(i)]));
    check(s.t1.h == h && s.t1.w == w, "make_batch: sample extents disagree (", s.t1.h, "x",
          s.t1.w, " vs ", h, "x", w, ")");
    std::copy(s.t1.v.begin(), s.t1.v.end(), t1.begin() + size_t(i) * 3 * h * w);
    std::copy(s.t2.v.begin(), s.t2.v.end(), t2.begin() + size_t(i) * 3 * h * w);
    std::copy(s.label.v.begin(), s.label.v.end(), label.begin() + size_t(i) * h * w);
    const data::Raster lh = data::downsample_label(s.label);
    std::copy(lh.v.begin(), lh.v.end(), half.begin() + size_t(i) * (h / 2) * (w / 2));
  }
  Batch out;
  out.t1 = Tensor({b, 3, h, w}, std::move(t1));
  out.t2 = Tensor({b, 3, h, w}, std::move(t2));
  out.label = Tensor({b, 1, h, w}, std::move(label));
  out.label_half = Tensor({b, 1, h / 2, w / 2}, std::move(half));
  return out;
}

eval::ConfusionCounts evaluate_confusion(const model::Model& m,
                                         const std::vector<data::SamplePair>& set, int batch,
                                         float threshold) {
  eval::ConfusionCounts total;
  std::vector<int> idx;
  for (int i = 0; i < int(set.size()); i += batch) {
    idx.clear();
    for (int j = i; j < std::min<int>(int(set.size()), i + batch); ++j) idx.push_back(j);
    const Batch b = make_batch(set, idx);
    const model::Masks masks = model::forward(m, b.t1, b.t2);
    total.merge(eval::confusion(eval::binarize(masks.fusion.data(), threshold),
                                eval::binarize(b.label.data(), 0.5f)));
  }
  return total;
}

TrainResult train_loop(const RunConfig& cfg, const std::vector<data::SamplePair>& train_set,
                       const std::vector<data::SamplePair>& val_set,
                       const nn::ParamStore* init_params, const ProgressFn& progress) {
  check(!train_set.empty(), "train: empty training set");
  check(!val_set.empty(), "train: empty validation set");

  model::Model m = model::build_model(cfg.model_config());
  if (init_params) {
    for (const auto& name : m.params.names()) {
      check(init_params->has(name), "train: initial parameters lack tensor '", name, "'");
      m.params.set(name, init_params->at(name));
    }
  }

  AdamwOptions aopt;
  aopt.lr = cfg.lr;
  aopt.weight_decay = cfg.weight_decay;
  AdamwState adamw(m.params, aopt);
  PlateauOptions popt;
  popt.patience = cfg.patience;
  PlateauState plateau;

  const bool mesd = m.config.variant == model::Variant::mesd;
  const float w_f = cfg.w_fusion;
  const float w_1 = mesd ? 0.0f : cfg.w_t1;
  const float w_2 = mesd ? 0.0f : cfg.w_t2;
  const data::AugmentConfig aug_cfg;  // defaults per protocol

  TrainResult result;
  result.best_params = m.params;

  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  bool ever_validated = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c4 + uint64_t(epoch)));
    for (int i = int(order.size()) - 1; i > 0; --i) {
      std::swap(order[size_t(i)], order[size_t(shuffle_rng.uniform_int(0, i))]);
    }

    double loss_sum = 0.0;
    size_t loss_weight = 0;
    std::vector<data::SamplePair> staged;
    std::vector<int> idx;
    for (size_t pos = 0; pos < order.size(); pos += size_t(cfg.batch)) {
      staged.clear();
      idx.clear();
      for (size_t j = pos; j < std::min(order.size(), pos + size_t(cfg.batch)); ++j) {
        const int si = order[j];
        if (cfg.augment) {
          // Per-sample stream derived from (seed, epoch, sample index) so
          // augmentation does not depend on batch composition.
          staged.push_back(data::augment_pair(train_set[size_t(si)], aug_cfg,
                                              mix_seed(mix_seed(cfg.seed, uint64_t(epoch)),
                                                       uint64_t(si))));
        } else {
          staged.push_back(train_set[size_t(si)]);
        }
        idx.push_back(int(staged.size()) - 1);
      }
      const Batch batch = make_batch(staged, idx);

      Tape tape;
      nn::ParamStore tracked = m.params.watch_all(tape);
      const model::MasksT<float> masks =
          model::forward_model<float>(m.config, m.widths, tracked, batch.t1, batch.t2);
      const Tensor loss = triple_loss<float>(masks, batch.label, batch.label_half, w_f, w_1, w_2);
      const float loss_value = loss.value();
      if (!std::isfinite(loss_value)) {
        result.diverged = true;
        result.divergence = str("non-finite loss at epoch ", epoch);
        result.log.push_back(EpochLog{epoch, loss_value, {}, false, adamw.learning_rate()});
        return result;
      }
      tape.backward(loss);
      try {
        adamw.step(m.params, [&](const std::string& name) {
          return tape.grad(tracked.at(name));
        });
      } catch (const Error& e) {
        result.diverged = true;
        result.divergence = e.what();
        result.log.push_back(EpochLog{epoch, loss_value, {}, false, adamw.learning_rate()});
        return result;
      }
      loss_sum += double(loss_value) * double(idx.size());
      loss_weight += idx.size();
    }

    EpochLog row;
    row.epoch = epoch;
    row.loss = float(loss_sum / double(loss_weight));
    if (epoch > cfg.warmup_epochs) {
      const eval::ConfusionCounts conf = evaluate_confusion(m, val_set, cfg.batch);
      row.val = eval::metrics(conf);
      row.validated = true;
      ever_validated = true;
      if (float(row.val.f1) > result.best_f1 || result.best_epoch < 0) {
        result.best_f1 = float(row.val.f1);
        result.best_epoch = epoch;
        result.best_params = m.params;
      }
      float lr = adamw.learning_rate();
      plateau_step(plateau, popt, float(row.val.f1), lr);
      adamw.set_learning_rate(lr);
    }
    row.lr = adamw.learning_rate();
    result.log.push_back(row);
    if (progress) progress(row);
  }

  if (!ever_validated && cfg.epochs > 0) result.best_params = m.params;
  return result;
}

}  // namespace sgsln::train
