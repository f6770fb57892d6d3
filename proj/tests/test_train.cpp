#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "core/gradcheck.hpp"
#include "train/checkpoint.hpp"
#include "train/loop.hpp"
#include "train/loss.hpp"
#include "train/optim.hpp"

using namespace sgsln;
using namespace sgsln::train;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("sgsln_train_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Elementwise reference for mean-BCE + dice deficit, double precision.
double loss_oracle(const std::vector<float>& pred, const std::vector<float>& target) {
  const double lo = 1e-7, hi = 1.0 - 1e-7;
  double bce = 0.0, spg = 0.0, sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double q = std::min(std::max(double(pred[i]), lo), hi);
    const double g = double(target[i]);
    bce += -(g * std::log(q) + (1.0 - g) * std::log(1.0 - q));
    spg += q * g;
    sp += q;
    sg += g;
  }
  bce /= double(pred.size());
  return bce + (1.0 - (2.0 * spg + 1.0) / (sp + sg + 1.0));
}

data::SamplePair tiny_sample(uint64_t seed, int size = 32) {
  data::SceneSpec spec;
  spec.size = size;
  return data::gen_scene(spec, data::Scenario::svbcd, seed);
}

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.max_width = 16;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.warmup_epochs = 0;
  cfg.augment = false;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("loss of a perfect prediction vanishes") {
  Tensor target({1, 1, 2, 2}, {1, 0, 1, 1});
  Tensor pred({1, 1, 2, 2}, {1.0f - 1e-7f, 1e-7f, 1.0f - 1e-7f, 1.0f - 1e-7f});
  CHECK(double(bce_dice_loss(pred, target).value()) <= 1e-5);
}

TEST_CASE("loss closed form: half-confidence on an all-ones target") {
  Tensor pred = Tensor::full({1, 1, 2, 2}, 0.5f);
  Tensor target = Tensor::full({1, 1, 2, 2}, 1.0f);
  const double expect = std::log(2.0) + 2.0 / 7.0;  // ln 2 + (1 - 5/7)
  CHECK(double(bce_dice_loss(pred, target).value()) == doctest::Approx(expect).epsilon(1e-6));
  CHECK_THROWS_AS(bce_dice_loss(pred, Tensor({1, 1, 2, 3})), Error);
}

TEST_CASE("loss matches the scalar oracle and stays non-negative") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor pred = random_tensor<float>({1, 1, 4, 4}, rng, 0.02, 0.98);
    std::vector<float> tv(16);
    for (auto& v : tv) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
    Tensor target({1, 1, 4, 4}, tv);
    const double got = double(bce_dice_loss(pred, target).value());
    CHECK(got == doctest::Approx(loss_oracle(pred.data(), target.data())).epsilon(1e-6));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("triple loss composes the three branch terms") {
  Rng rng(5);
  model::MasksT<float> masks;
  masks.fusion = random_tensor<float>({1, 1, 4, 4}, rng, 0.1, 0.9);
  masks.t1 = random_tensor<float>({1, 1, 2, 2}, rng, 0.1, 0.9);
  masks.t2 = random_tensor<float>({1, 1, 2, 2}, rng, 0.1, 0.9);
  std::vector<float> lv(16), hv(4);
  for (auto& v : lv) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  for (auto& v : hv) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  Tensor label({1, 1, 4, 4}, lv);
  Tensor half({1, 1, 2, 2}, hv);

  // degenerate weights reduce to the fusion term alone
  const float fusion_only = triple_loss<float>(masks, label, half, 1.0f, 0.0f, 0.0f).value();
  CHECK(fusion_only == bce_dice_loss(masks.fusion, label).value());

  const float combined = triple_loss<float>(masks, label, half, 1.0f, 0.5f, 0.25f).value();
  const double expect = double(bce_dice_loss(masks.fusion, label).value()) +
                        0.5 * double(bce_dice_loss(*masks.t1, half).value()) +
                        0.25 * double(bce_dice_loss(*masks.t2, half).value());
  CHECK(double(combined) == doctest::Approx(expect).epsilon(1e-6));

  model::MasksT<float> fusion_only_masks;
  fusion_only_masks.fusion = masks.fusion;
  CHECK_THROWS_WITH_AS(triple_loss<float>(fusion_only_masks, label, half, 1.0f, 0.5f, 0.5f),
                       doctest::Contains("branch"), Error);
}

TEST_CASE("loss gradient passes central differences") {
  Rng rng(7);
  Tensor64 pred = random_tensor<double>({1, 1, 4, 4}, rng, 0.05, 0.95);
  std::vector<double> tv(16);
  for (auto& v : tv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  Tensor64 target({1, 1, 4, 4}, tv);
  const auto rep = grad_check(
      [&](Tape64&, const Tensor64& p) { return bce_dice_loss<double>(p, target); }, pred);
  CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("adamw closed-form first steps") {
  nn::ParamStore p;
  p.add("theta", Tensor({1}, {1.0f}));
  AdamwOptions opt;
  opt.lr = 1e-3f;
  opt.weight_decay = 1e-3f;
  AdamwState st(p, opt);
  std::vector<float> zero{0.0f};
  st.step(p, [&](const std::string&) { return &zero; });
  CHECK(std::fabs(double(p.at("theta").value()) - (1.0 - 1e-6)) <= 1e-7);  // pure decay

  nn::ParamStore q;
  q.add("theta", Tensor({1}, {0.0f}));
  AdamwOptions opt2;
  opt2.lr = 1e-3f;
  opt2.weight_decay = 0.0f;
  AdamwState st2(q, opt2);
  std::vector<float> one{1.0f};
  st2.step(q, [&](const std::string&) { return &one; });
  CHECK(std::fabs(double(q.at("theta").value()) + 1e-3) <= 1e-9);  // bias-corrected unit step
}

TEST_CASE("adamw five-step trace matches the hand-iterated recurrence") {
  const std::vector<float> grads{0.5f, -0.3f, 0.8f, -0.1f, 0.2f};
  nn::ParamStore p;
  p.add("theta", Tensor({1}, {1.0f}));
  AdamwOptions opt;
  opt.lr = 0.01f;
  opt.weight_decay = 0.1f;
  AdamwState st(p, opt);

  // independently written scalar recurrence in the same precision, plus the
  // 64-bit anchor trace for the same gradients
  float theta = 1.0f, m = 0.0f, v = 0.0f;
  const float b1 = 0.9f, b2 = 0.999f;
  const double anchor[5] = {0.989000000200, 0.986096019894, 0.979074560348, 0.973761274540,
                            0.968119825194};
  for (int t = 1; t <= 5; ++t) {
    std::vector<float> g{grads[size_t(t - 1)]};
    st.step(p, [&](const std::string&) { return &g; });

    m = b1 * m + (1.0f - b1) * g[0];
    v = b2 * v + (1.0f - b2) * g[0] * g[0];
    const float mhat = m / (1.0f - std::pow(b1, float(t)));
    const float vhat = v / (1.0f - std::pow(b2, float(t)));
    theta = theta - 0.01f * 0.1f * theta - 0.01f * mhat / (std::sqrt(vhat) + 1e-8f);

    CHECK(std::fabs(double(p.at("theta").value()) - double(theta)) <= 1e-10);
    CHECK(std::fabs(double(p.at("theta").value()) - anchor[t - 1]) <= 1e-6);
  }
}

TEST_CASE("adamw aborts on non-finite gradients without touching state") {
  nn::ParamStore p;
  p.add("theta", Tensor({2}, {1.0f, 2.0f}));
  AdamwState st(p, AdamwOptions{});
  std::vector<float> bad{1.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_WITH_AS(st.step(p, [&](const std::string&) { return &bad; }),
                       doctest::Contains("non-finite"), Error);
  CHECK(st.step_count() == 0);
  CHECK(p.at("theta")[0] == 1.0f);
  CHECK(p.at("theta")[1] == 2.0f);
}

TEST_CASE("adamw descends a convex quadratic monotonically after warm-up") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 7919);
    const int n = 8;
    std::vector<float> curv(size_t(n), 0.0f), target(size_t(n), 0.0f);
    for (auto& c : curv) c = float(rng.uniform(0.5, 2.0));
    for (auto& b : target) b = float(rng.uniform(-1.0, 1.0));
    nn::ParamStore p;
    p.add("theta", random_tensor<float>({n}, rng, -1.0, 1.0));
    AdamwOptions opt;
    opt.lr = 0.01f;
    opt.weight_decay = 0.0f;
    AdamwState st(p, opt);
    auto loss_of = [&](const Tensor& th) {
      double l = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = double(th[size_t(i)]) - double(target[size_t(i)]);
        l += 0.5 * double(curv[size_t(i)]) * d * d;
      }
      return l;
    };
    double prev = loss_of(p.at("theta"));
    for (int step = 1; step <= 50; ++step) {
      std::vector<float> g(size_t(n), 0.0f);
      for (int i = 0; i < n; ++i) {
        g[size_t(i)] = curv[size_t(i)] * (p.at("theta")[size_t(i)] - target[size_t(i)]);
      }
      st.step(p, [&](const std::string&) { return &g; });
      const double now = loss_of(p.at("theta"));
      if (step > 10) CHECK(now <= prev + 1e-12);
      prev = now;
    }
  }
}

TEST_CASE("plateau scheduler fires exactly once after twelve flat epochs") {
  PlateauState st;
  PlateauOptions opt;
  float lr = 1e-3f;

  SUBCASE("strictly increasing f1 never reduces") {
    for (int i = 1; i <= 30; ++i) {
      CHECK(!plateau_step(st, opt, 0.01f * float(i), lr));
    }
    CHECK(lr == 1e-3f);
  }
  SUBCASE("twelve flat epochs reduce once") {
    plateau_step(st, opt, 0.5f, lr);  // first value becomes the best
    int reductions = 0;
    for (int i = 0; i < 12; ++i) {
      if (plateau_step(st, opt, 0.5f, lr)) ++reductions;
    }
    CHECK(reductions == 1);
    CHECK(lr == doctest::Approx(1e-4f));
  }
  SUBCASE("improvement at epoch 11 resets the counter") {
    plateau_step(st, opt, 0.5f, lr);
    for (int i = 0; i < 11; ++i) CHECK(!plateau_step(st, opt, 0.5f, lr));
    CHECK(!plateau_step(st, opt, 0.6f, lr));  // reset
    CHECK(lr == 1e-3f);
    for (int i = 0; i < 11; ++i) CHECK(!plateau_step(st, opt, 0.6f, lr));
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = temp_dir("ckpt");
  model::ModelConfig cfg;
  cfg.max_width = 16;
  cfg.seed = 3;
  const model::Model m = model::build_model(cfg);
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(path, m);
  const model::Model back = load_checkpoint(path);
  CHECK(back.config.max_width == 16);
  CHECK(back.config.variant == model::Variant::eded);
  REQUIRE(back.params.names() == m.params.names());
  for (const auto& name : m.params.names()) {
    REQUIRE(back.params.at(name).shape() == m.params.at(name).shape());
    CHECK(back.params.at(name).data() == m.params.at(name).data());
  }
}

TEST_CASE("truncated checkpoints are rejected without partial state") {
  const auto dir = temp_dir("trunc");
  model::ModelConfig cfg;
  cfg.max_width = 16;
  const model::Model m = model::build_model(cfg);
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(path, m);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), Error);

  std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_WITH_AS(load_checkpoint((dir / "bad.ckpt").string()),
                       doctest::Contains("not an SGLN checkpoint"), Error);
}

TEST_CASE("initializing training from a mismatched checkpoint names the tensor") {
  model::ModelConfig small;
  small.max_width = 16;
  const model::Model m16 = model::build_model(small);

  RunConfig cfg = tiny_run_config();
  cfg.max_width = 32;
  const auto sample = tiny_sample(101);
  std::vector<data::SamplePair> set{sample};
  CHECK_THROWS_WITH_AS(train_loop(cfg, set, set, &m16.params), doctest::Contains("enc2"), Error);
}

TEST_CASE("zero epochs keep the initial parameters and an empty log") {
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 0;
  const auto sample = tiny_sample(55);
  std::vector<data::SamplePair> set{sample};
  const auto result = train_loop(cfg, set, set);
  CHECK(result.log.empty());
  const model::Model fresh = model::build_model(cfg.model_config());
  for (const auto& name : fresh.params.names()) {
    CHECK(result.best_params.at(name).data() == fresh.params.at(name).data());
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  RunConfig cfg = tiny_run_config();
  cfg.lr = 0.0f;
  const auto sample = tiny_sample(56);
  std::vector<data::SamplePair> set{sample};
  const auto result = train_loop(cfg, set, set);
  const model::Model fresh = model::build_model(cfg.model_config());
  for (const auto& name : fresh.params.names()) {
    CHECK(result.best_params.at(name).data() == fresh.params.at(name).data());
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 2;
  cfg.augment = true;
  std::vector<data::SamplePair> set{tiny_sample(57), tiny_sample(58), tiny_sample(59)};
  const auto a = train_loop(cfg, set, set);
  const auto b = train_loop(cfg, set, set);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(log_csv_row(a.log[i]) == log_csv_row(b.log[i]));
  }
  for (const auto& name : a.best_params.names()) {
    CHECK(a.best_params.at(name).data() == b.best_params.at(name).data());
  }
}

TEST_CASE("csv log format is stable") {
  CHECK(log_csv_header() == "epoch,loss,precision,recall,f1,iou,lr");
  EpochLog row;
  row.epoch = 3;
  row.loss = 0.5f;
  row.lr = 1e-3f;
  CHECK(log_csv_row(row) == "3,0.50000000,0.000000,0.000000,0.000000,0.000000,0.00100000");
}
