// Command-line front end. Talks to the library exclusively through the
// public C interface in sgsln/sgsln.h.
#include <sgsln/sgsln.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace {

struct ConfigHandle {
  sgsln_config* p = nullptr;
  ~ConfigHandle() { sgsln_config_free(p); }
};

struct ModelHandle {
  sgsln_model* p = nullptr;
  ~ModelHandle() { sgsln_model_free(p); }
};

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { sgsln_string_free(p); }
};

[[noreturn]] void die(const std::string& context) {
  std::fprintf(stderr, "sgsln: %s: %s\n", context.c_str(), sgsln_last_error());
  std::exit(1);
}

void must(sgsln_status rc, const std::string& context) {
  if (rc != SGSLN_OK) die(context);
}

// --config file (optional) plus repeatable --set key=value overrides.
ConfigHandle make_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  ConfigHandle h;
  if (!config_path.empty()) {
    must(sgsln_config_load(config_path.c_str(), &h.p), "loading config '" + config_path + "'");
  } else {
    must(sgsln_config_create(&h.p), "creating config");
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "sgsln: --set expects key=value, got '%s'\n", kv.c_str());
      std::exit(1);
    }
    must(sgsln_config_set(h.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
         "setting '" + kv + "'");
  }
  return h;
}

void progress_printer(int epoch, double loss, double val_f1, double lr, void*) {
  std::fprintf(stderr, "epoch %4d  loss %.6f  val_f1 %.4f  lr %.6g\n", epoch, loss, val_f1, lr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGSLN binary change detection (synthetic desk-scale harness)"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "run configuration file (key = value lines)");
  app.add_option("--set", overrides, "override a config key, e.g. --set model.max_width=16");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic bitemporal dataset");
  std::string synth_scenario = "svbcd", synth_out;
  int synth_n = 16, synth_size = 64;
  uint64_t synth_seed = 0;
  bool synth_force = false;
  synth->add_option("--scenario", synth_scenario, "iccd | svbcd | mvbcd");
  synth->add_option("--n", synth_n, "number of sample pairs")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "canvas extent (multiple of 32)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_flag("--force", synth_force, "allow writing into a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "train a model on an A/B/label dataset");
  std::string train_data, train_val, train_out, train_init;
  train->add_option("--data", train_data, "training dataset directory")->required();
  train->add_option("--val", train_val, "validation dataset directory (defaults to --data)");
  train->add_option("--out", train_out, "output directory (best.ckpt, metrics.csv)")->required();
  train->add_option("--init", train_init, "checkpoint to initialize the parameters from");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a dataset");
  std::string eval_ckpt, eval_data;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "run inference on an image pair");
  std::string pr_ckpt, pr_a, pr_b, pr_out;
  bool pr_branches = false;
  predict->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
  predict->add_option("--a", pr_a, "epoch-1 image (png)")->required();
  predict->add_option("--b", pr_b, "epoch-2 image (png)")->required();
  predict->add_option("--out", pr_out, "output mask png")->required();
  predict->add_flag("--branches", pr_branches, "also write the half-resolution branch masks");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print parameter counts and FLOPs");
  int inspect_h = 256, inspect_w = 256;
  inspect->add_option("--height", inspect_h, "input height for the FLOP estimate");
  inspect->add_option("--width", inspect_w, "input width for the FLOP estimate");

  // gradcheck
  app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    ConfigHandle cfg = make_config(config_path, overrides);
    must(sgsln_config_set(cfg.p, "data.scenario", synth_scenario.c_str()), "data.scenario");
    must(sgsln_config_set(cfg.p, "data.count", std::to_string(synth_n).c_str()), "data.count");
    must(sgsln_config_set(cfg.p, "data.size", std::to_string(synth_size).c_str()), "data.size");
    must(sgsln_config_set(cfg.p, "seed", std::to_string(synth_seed).c_str()), "seed");
    must(sgsln_synth(cfg.p, synth_out.c_str(), synth_force ? 1 : 0), "synth");
    std::fprintf(stderr, "wrote %d %s pairs to %s\n", synth_n, synth_scenario.c_str(),
                 synth_out.c_str());
  } else if (train->parsed()) {
    ConfigHandle cfg = make_config(config_path, overrides);
    must(sgsln_train(cfg.p, train_data.c_str(), train_val.empty() ? nullptr : train_val.c_str(),
                     train_out.c_str(), train_init.empty() ? nullptr : train_init.c_str(),
                     progress_printer, nullptr),
         "train");
    std::fprintf(stderr, "checkpoint and metrics written under %s\n", train_out.c_str());
  } else if (eval->parsed()) {
    double metrics[4];
    OwnedString report;
    must(sgsln_eval(eval_ckpt.c_str(), eval_data.c_str(), metrics, &report.p), "eval");
    std::fputs(report.p, stdout);
  } else if (predict->parsed()) {
    must(sgsln_predict(pr_ckpt.c_str(), pr_a.c_str(), pr_b.c_str(), pr_out.c_str(),
                       pr_branches ? 1 : 0),
         "predict");
    std::fprintf(stderr, "mask written to %s\n", pr_out.c_str());
  } else if (inspect->parsed()) {
    ConfigHandle cfg = make_config(config_path, overrides);
    ModelHandle model;
    must(sgsln_model_create(cfg.p, &model.p), "building model");
    OwnedString table;
    must(sgsln_model_param_table(model.p, &table.p), "parameter table");
    uint64_t total = 0;
    must(sgsln_model_param_total(model.p, &total), "parameter total");
    double flops = 0.0;
    must(sgsln_model_flops(model.p, inspect_h, inspect_w, &flops), "flops");
    std::fputs(table.p, stdout);
    std::printf("params %.4f M\nflops@%dx%d %.4f G\n", double(total) / 1e6, inspect_h, inspect_w,
                flops / 1e9);
  } else {  // gradcheck
    OwnedString report;
    double max_err = 0.0;
    int pass = 0;
    must(sgsln_gradcheck(&report.p, &max_err, &pass), "gradcheck");
    std::fputs(report.p, stdout);
    if (!pass) return 1;
  }
  return 0;
}
