#pragma once

#include <string>

#include "model/model.hpp"

namespace sgsln {

// Flat key=value run configuration ('#' starts a comment). Every key has a
// documented default; unknown keys are rejected so typos cannot silently
// fall back to defaults.
struct RunConfig {
  // model.*
  std::string variant = "eded";
  int max_width = 512;
  int exchange_position = 3;
  bool cbam = true;
  // train.*
  float lr = 1e-3f;
  float weight_decay = 1e-3f;
  int epochs = 100;
  int batch = 4;
  float w_fusion = 1.0f, w_t1 = 0.5f, w_t2 = 0.5f;  // train.loss_weights
  int warmup_epochs = 3;
  int patience = 12;
  bool augment = true;
  // data.*
  std::string scenario = "svbcd";
  int count = 16;
  int size = 64;
  // shared
  uint64_t seed = 0;

  model::ModelConfig model_config() const;
};

// Typed assignment; rejects unknown keys and unparsable values.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string config_get(const RunConfig& cfg, const std::string& key);

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config_file(const std::string& path);

// Canonical serialization containing every key.
std::string serialize_config(const RunConfig& cfg);

// The model-defining subset stored inside checkpoints.
std::string serialize_model_echo(const model::ModelConfig& mc);
model::ModelConfig parse_model_echo(const std::string& text);

}  // namespace sgsln
