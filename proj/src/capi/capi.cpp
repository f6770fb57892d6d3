#include "sgsln/sgsln.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>

#include "config.hpp"
#include "core/error.hpp"
#include "data/augment.hpp"
#include "data/dataset.hpp"
#include "data/png_io.hpp"
#include "data/synth.hpp"
#include "eval/metrics.hpp"
#include "model/model.hpp"
#include "train/checkpoint.hpp"
#include "train/loop.hpp"
#include "verify/suite.hpp"

namespace fs = std::filesystem;

struct sgsln_config {
  sgsln::RunConfig cfg;
};

struct sgsln_model {
  sgsln::model::Model m;
};

namespace {

thread_local std::string g_last_error = "no error";

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs `fn`, translating exceptions into status codes + the thread message.
template <class Fn>
sgsln_status guarded(Fn&& fn) {
  try {
    fn();
    return SGSLN_OK;
  } catch (const sgsln::Error& e) {
    set_error(e.what());
    return SGSLN_ERR_RUNTIME;
  } catch (const std::exception& e) {
    set_error(e.what());
    return SGSLN_ERR_RUNTIME;
  } catch (...) {
    set_error("unknown failure");
    return SGSLN_ERR_RUNTIME;
  }
}

sgsln_status require(bool cond, const char* what) {
  if (cond) return SGSLN_OK;
  set_error(sgsln::str("invalid argument: ", what));
  return SGSLN_ERR_INVALID_ARGUMENT;
}

sgsln::data::Raster load_input_raster(const std::string& path) {
  return sgsln::data::png_to_rgb_raster(sgsln::data::read_png_file(path));
}

}  // namespace

extern "C" {

const char* sgsln_last_error(void) { return g_last_error.c_str(); }

const char* sgsln_version(void) { return "0.1.0"; }

void sgsln_string_free(char* s) { std::free(s); }

/* ------------------------------------------------------------------ */

sgsln_status sgsln_config_create(sgsln_config** out) {
  if (auto rc = require(out != nullptr, "out is NULL")) return rc;
  return guarded([&] { *out = new sgsln_config(); });
}

sgsln_status sgsln_config_load(const char* path, sgsln_config** out) {
  if (auto rc = require(path && out, "path/out is NULL")) return rc;
  return guarded([&] { *out = new sgsln_config{sgsln::load_config_file(path)}; });
}

sgsln_status sgsln_config_set(sgsln_config* cfg, const char* key, const char* value) {
  if (auto rc = require(cfg && key && value, "cfg/key/value is NULL")) return rc;
  return guarded([&] { sgsln::config_set(cfg->cfg, key, value); });
}

sgsln_status sgsln_config_get(const sgsln_config* cfg, const char* key, char** out) {
  if (auto rc = require(cfg && key && out, "cfg/key/out is NULL")) return rc;
  return guarded([&] { *out = dup_string(sgsln::config_get(cfg->cfg, key)); });
}

sgsln_status sgsln_config_dump(const sgsln_config* cfg, char** out) {
  if (auto rc = require(cfg && out, "cfg/out is NULL")) return rc;
  return guarded([&] { *out = dup_string(sgsln::serialize_config(cfg->cfg)); });
}

void sgsln_config_free(sgsln_config* cfg) { delete cfg; }

/* ------------------------------------------------------------------ */

sgsln_status sgsln_model_create(const sgsln_config* cfg, sgsln_model** out) {
  if (auto rc = require(cfg && out, "cfg/out is NULL")) return rc;
  return guarded([&] {
    *out = new sgsln_model{sgsln::model::build_model(cfg->cfg.model_config())};
  });
}

sgsln_status sgsln_model_load(const char* checkpoint_path, sgsln_model** out) {
  if (auto rc = require(checkpoint_path && out, "path/out is NULL")) return rc;
  return guarded([&] {
    *out = new sgsln_model{sgsln::train::load_checkpoint(checkpoint_path)};
  });
}

sgsln_status sgsln_model_save(const sgsln_model* m, const char* checkpoint_path) {
  if (auto rc = require(m && checkpoint_path, "model/path is NULL")) return rc;
  return guarded([&] { sgsln::train::save_checkpoint(checkpoint_path, m->m); });
}

void sgsln_model_free(sgsln_model* m) { delete m; }

sgsln_status sgsln_model_param_total(const sgsln_model* m, uint64_t* out_total) {
  if (auto rc = require(m && out_total, "model/out is NULL")) return rc;
  return guarded([&] { *out_total = sgsln::model::count_params(m->m).total; });
}

sgsln_status sgsln_model_param_table(const sgsln_model* m, char** out) {
  if (auto rc = require(m && out, "model/out is NULL")) return rc;
  return guarded([&] {
    const auto rep = sgsln::model::count_params(m->m);
    std::string table;
    for (const auto& [module, count] : rep.per_module) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-8s %12zu\n", module.c_str(), count);
      table += buf;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-8s %12zu\n", "total", rep.total);
    table += buf;
    *out = dup_string(table);
  });
}

sgsln_status sgsln_model_flops(const sgsln_model* m, int height, int width, double* out_flops) {
  if (auto rc = require(m && out_flops, "model/out is NULL")) return rc;
  return guarded([&] {
    *out_flops = sgsln::model::estimate_flops(m->m.config, height, width);
  });
}

/* ------------------------------------------------------------------ */

sgsln_status sgsln_synth(const sgsln_config* cfg, const char* out_dir, int force) {
  if (auto rc = require(cfg && out_dir, "cfg/out_dir is NULL")) return rc;
  return guarded([&] {
    const sgsln::RunConfig& rc2 = cfg->cfg;
    sgsln::data::SceneSpec spec;
    spec.size = rc2.size;
    const auto scenario = sgsln::data::scenario_from_string(rc2.scenario);
    sgsln::check(rc2.count >= 1, "synth: data.count must be >= 1, got ", rc2.count);
    std::vector<sgsln::data::SamplePair> samples;
    samples.reserve(size_t(rc2.count));
    for (int i = 0; i < rc2.count; ++i) {
      samples.push_back(
          sgsln::data::gen_scene(spec, scenario, sgsln::mix_seed(rc2.seed, uint64_t(i))));
    }
    sgsln::data::write_dataset(out_dir, samples, force != 0);
    std::ofstream manifest(fs::path(out_dir) / "manifest.txt", std::ios::trunc);
    sgsln::check(manifest.good(), "synth: cannot write manifest under '", out_dir, "'");
    manifest << "scenario = " << rc2.scenario << "\n"
             << "count = " << rc2.count << "\n"
             << "size = " << rc2.size << "\n"
             << "seed = " << rc2.seed << "\n"
             << "generator_version = " << sgsln::data::kGeneratorVersion << "\n";
  });
}

sgsln_status sgsln_train(const sgsln_config* cfg, const char* data_dir, const char* val_dir,
                         const char* out_dir, const char* init_checkpoint,
                         sgsln_progress_fn progress, void* user_data) {
  if (auto rc = require(cfg && data_dir && out_dir, "cfg/data_dir/out_dir is NULL")) return rc;
  return guarded([&] {
    const auto train_set = sgsln::data::read_dataset(data_dir);
    const auto val_set =
        (val_dir && std::string(val_dir) != data_dir) ? sgsln::data::read_dataset(val_dir)
                                                      : train_set;
    std::optional<sgsln::model::Model> init;
    if (init_checkpoint) init = sgsln::train::load_checkpoint(init_checkpoint);

    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
    sgsln::check(log.good(), "train: cannot write metrics.csv under '", out_dir, "'");
    log << sgsln::train::log_csv_header() << "\n";

    const auto result = sgsln::train::train_loop(
        cfg->cfg, train_set, val_set, init ? &init->params : nullptr,
        [&](const sgsln::train::EpochLog& row) {
          log << sgsln::train::log_csv_row(row) << "\n";
          if (progress) progress(row.epoch, double(row.loss), row.val.f1, double(row.lr),
                                 user_data);
        });
    log.flush();

    sgsln::model::Model best = sgsln::model::build_model(cfg->cfg.model_config());
    for (const auto& name : best.params.names()) {
      best.params.set(name, result.best_params.at(name));
    }
    sgsln::train::save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), best);
    sgsln::check(!result.diverged, "train: ", result.divergence,
                 "; best checkpoint retained at '", out_dir, "/best.ckpt'");
  });
}

sgsln_status sgsln_eval(const char* checkpoint_path, const char* data_dir, double out_metrics[4],
                        char** out_report) {
  if (auto rc = require(checkpoint_path && data_dir, "checkpoint/data_dir is NULL")) return rc;
  return guarded([&] {
    const sgsln::model::Model m = sgsln::train::load_checkpoint(checkpoint_path);
    const auto set = sgsln::data::read_dataset(data_dir);
    sgsln::check(!set.empty(), "eval: dataset '", data_dir, "' is empty");
    const auto conf = sgsln::train::evaluate_confusion(m, set, 4);
    const auto met = sgsln::eval::metrics(conf);
    if (out_metrics) {
      out_metrics[0] = met.precision;
      out_metrics[1] = met.recall;
      out_metrics[2] = met.f1;
      out_metrics[3] = met.iou;
    }
    if (out_report) {
      *out_report = dup_string(sgsln::eval::metrics_table(conf, met) + "csv," +
                               sgsln::eval::metrics_csv_row(met) + "\n");
    }
  });
}

sgsln_status sgsln_predict(const char* checkpoint_path, const char* a_png, const char* b_png,
                           const char* out_png, int write_branches) {
  if (auto rc = require(checkpoint_path && a_png && b_png && out_png, "NULL path argument")) {
    return rc;
  }
  return guarded([&] {
    const sgsln::model::Model m = sgsln::train::load_checkpoint(checkpoint_path);
    const auto a = load_input_raster(a_png);
    const auto b = load_input_raster(b_png);
    sgsln::check(a.h == b.h && a.w == b.w, "predict: image extents differ (", a.h, "x", a.w,
                 " vs ", b.h, "x", b.w, ")");
    std::vector<float> t1(a.v), t2(b.v);
    const sgsln::Tensor ta({1, 3, a.h, a.w}, std::move(t1));
    const sgsln::Tensor tb({1, 3, b.h, b.w}, std::move(t2));
    const auto masks = sgsln::model::forward(m, ta, tb);

    auto write_mask = [](const std::string& path, const sgsln::Tensor& prob) {
      sgsln::data::PngImage img;
      img.width = prob.dim(3);
      img.height = prob.dim(2);
      img.channels = 1;
      img.pixels.resize(size_t(img.width) * img.height);
      const auto bin = sgsln::eval::binarize(prob.data(), 0.5f);
      for (size_t i = 0; i < bin.size(); ++i) img.pixels[i] = bin[i] ? 255 : 0;
      sgsln::data::write_png_file(path, img);
    };
    write_mask(out_png, masks.fusion);
    if (write_branches) {
      sgsln::check(masks.t1.has_value() && masks.t2.has_value(),
                   "predict: the ", to_string(m.config.variant),
                   " variant has no branch masks");
      const fs::path base(out_png);
      fs::path stem = base.parent_path() / base.stem();
      write_mask(stem.string() + "_t1" + base.extension().string(), *masks.t1);
      write_mask(stem.string() + "_t2" + base.extension().string(), *masks.t2);
    }
  });
}

sgsln_status sgsln_gradcheck(char** out_report, double* out_max_rel_err, int* out_pass) {
  return guarded([&] {
    const auto entries = sgsln::verify::gradient_suite();
    if (out_report) *out_report = dup_string(sgsln::verify::render_gradient_report(entries));
    if (out_max_rel_err) *out_max_rel_err = sgsln::verify::suite_max_err(entries);
    if (out_pass) *out_pass = sgsln::verify::all_pass(entries) ? 1 : 0;
  });
}

} /* extern "C" */
