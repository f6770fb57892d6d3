// Exercises the shared-library surface the CLI uses, through the C header
// only.
#include <doctest.h>

#include <sgsln/sgsln.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("sgsln_capi_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Config {
  sgsln_config* p = nullptr;
  Config() { REQUIRE(sgsln_config_create(&p) == SGSLN_OK); }
  ~Config() { sgsln_config_free(p); }
  void set(const char* k, const char* v) { REQUIRE(sgsln_config_set(p, k, v) == SGSLN_OK); }
};

std::string take_string(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  sgsln_string_free(s);
  return out;
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config keys round trip and unknown keys are rejected") {
  Config cfg;
  cfg.set("model.max_width", "16");
  cfg.set("train.loss_weights", "1.0, 0.25, 0.25");
  char* v = nullptr;
  REQUIRE(sgsln_config_get(cfg.p, "model.max_width", &v) == SGSLN_OK);
  CHECK(take_string(v) == "16");
  CHECK(sgsln_config_set(cfg.p, "model.maxwidth", "16") != SGSLN_OK);
  CHECK(std::string(sgsln_last_error()).find("unknown key") != std::string::npos);
  CHECK(sgsln_config_set(cfg.p, "train.epochs", "abc") != SGSLN_OK);
  char* dump = nullptr;
  REQUIRE(sgsln_config_dump(cfg.p, &dump) == SGSLN_OK);
  CHECK(take_string(dump).find("model.max_width = 16") != std::string::npos);
}

TEST_CASE("model handles expose parameter and flop accounting") {
  Config cfg;
  cfg.set("model.max_width", "16");
  sgsln_model* m = nullptr;
  REQUIRE(sgsln_model_create(cfg.p, &m) == SGSLN_OK);
  uint64_t total = 0;
  REQUIRE(sgsln_model_param_total(m, &total) == SGSLN_OK);
  CHECK(total > 0);
  char* table = nullptr;
  REQUIRE(sgsln_model_param_table(m, &table) == SGSLN_OK);
  CHECK(take_string(table).find("enc1") != std::string::npos);
  double flops = 0.0;
  REQUIRE(sgsln_model_flops(m, 64, 64, &flops) == SGSLN_OK);
  CHECK(flops > 0.0);
  CHECK(sgsln_model_flops(m, 60, 64, &flops) != SGSLN_OK);
  sgsln_model_free(m);
}

TEST_CASE("synth is deterministic and refuses an occupied directory") {
  const auto dir = temp_dir("synth");
  Config cfg;
  cfg.set("data.scenario", "mvbcd");
  cfg.set("data.count", "4");
  cfg.set("data.size", "64");
  cfg.set("seed", "7");
  const std::string out1 = (dir / "d1").string();
  const std::string out2 = (dir / "d2").string();
  REQUIRE(sgsln_synth(cfg.p, out1.c_str(), 0) == SGSLN_OK);
  REQUIRE(sgsln_synth(cfg.p, out2.c_str(), 0) == SGSLN_OK);

  // 4 pairs -> 12 pngs + manifest, and reruns are byte-identical
  int pngs = 0;
  for (const char* sub : {"A", "B", "label"}) {
    for (const auto& e : fs::directory_iterator(fs::path(out1) / sub)) {
      ++pngs;
      const auto other = fs::path(out2) / sub / e.path().filename();
      CHECK(slurp(e.path()) == slurp(other));
    }
  }
  CHECK(pngs == 12);
  CHECK(fs::exists(fs::path(out1) / "manifest.txt"));

  CHECK(sgsln_synth(cfg.p, out1.c_str(), 0) != SGSLN_OK);  // non-empty, no force
  CHECK(sgsln_synth(cfg.p, out1.c_str(), 1) == SGSLN_OK);

  cfg.set("data.size", "60");
  CHECK(sgsln_synth(cfg.p, (dir / "d3").string().c_str(), 0) != SGSLN_OK);
  CHECK(std::string(sgsln_last_error()).find("multiple of 32") != std::string::npos);
}

TEST_CASE("train, eval, and predict cooperate through checkpoints") {
  const auto dir = temp_dir("train");
  Config cfg;
  cfg.set("data.scenario", "svbcd");
  cfg.set("data.count", "4");
  cfg.set("data.size", "32");
  cfg.set("seed", "11");
  const std::string data = (dir / "data").string();
  REQUIRE(sgsln_synth(cfg.p, data.c_str(), 0) == SGSLN_OK);

  cfg.set("model.max_width", "16");
  cfg.set("train.epochs", "2");
  cfg.set("train.warmup_epochs", "0");
  cfg.set("train.augment", "false");
  const std::string out = (dir / "run").string();
  REQUIRE(sgsln_train(cfg.p, data.c_str(), nullptr, out.c_str(), nullptr, nullptr, nullptr) ==
          SGSLN_OK);
  CHECK(fs::exists(fs::path(out) / "best.ckpt"));
  CHECK(fs::exists(fs::path(out) / "metrics.csv"));

  const std::string ckpt = (fs::path(out) / "best.ckpt").string();
  double metrics[4] = {0, 0, 0, 0};
  char* report = nullptr;
  REQUIRE(sgsln_eval(ckpt.c_str(), data.c_str(), metrics, &report) == SGSLN_OK);
  CHECK(take_string(report).find("f1") != std::string::npos);
  CHECK(metrics[2] >= 0.0);
  CHECK(metrics[2] <= 1.0);

  const std::string mask = (dir / "mask.png").string();
  REQUIRE(sgsln_predict(ckpt.c_str(), (fs::path(data) / "A" / "00000.png").string().c_str(),
                        (fs::path(data) / "B" / "00000.png").string().c_str(), mask.c_str(),
                        1) == SGSLN_OK);
  CHECK(fs::exists(mask));
  CHECK(fs::exists(dir / "mask_t1.png"));
  CHECK(fs::exists(dir / "mask_t2.png"));

  // loading a checkpoint through the public api round-trips bit-exactly
  sgsln_model* m = nullptr;
  REQUIRE(sgsln_model_load(ckpt.c_str(), &m) == SGSLN_OK);
  const std::string copy = (dir / "copy.ckpt").string();
  REQUIRE(sgsln_model_save(m, copy.c_str()) == SGSLN_OK);
  CHECK(slurp(ckpt) == slurp(copy));
  sgsln_model_free(m);

  CHECK(sgsln_model_load((dir / "nope.ckpt").string().c_str(), &m) != SGSLN_OK);
}

TEST_CASE("null arguments are reported as invalid") {
  CHECK(sgsln_config_create(nullptr) == SGSLN_ERR_INVALID_ARGUMENT);
  CHECK(sgsln_synth(nullptr, "x", 0) == SGSLN_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(sgsln_version()) > 0);
}
