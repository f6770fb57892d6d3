#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include "core/error.hpp"

namespace sgsln {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  check(ec == std::errc() && p == v.data() + v.size(), "config: key '", key,
        "' expects an integer, got '", v, "'");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  check(ec == std::errc() && p == v.data() + v.size(), "config: key '", key,
        "' expects a non-negative integer, got '", v, "'");
  return out;
}

float parse_float(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    float out = std::stof(v, &pos);
    check(pos == v.size(), "config: key '", key, "' expects a number, got '", v, "'");
    return out;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail("config: key '", key, "' expects a number, got '", v, "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail("config: key '", key, "' expects a boolean (true/false), got '", v, "'");
}

std::string fmt_float(float v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig mc;
  mc.variant = model::variant_from_string(variant);
  mc.max_width = max_width;
  mc.exchange_position = exchange_position;
  mc.cbam = cbam;
  mc.w_fusion = w_fusion;
  mc.w_t1 = w_t1;
  mc.w_t2 = w_t2;
  mc.seed = seed;
  return mc;
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model.variant") {
    model::variant_from_string(value);  // validate
    cfg.variant = value;
  } else if (key == "model.max_width") {
    cfg.max_width = parse_int(key, value);
  } else if (key == "model.exchange_position") {
    cfg.exchange_position = parse_int(key, value);
  } else if (key == "model.cbam") {
    cfg.cbam = parse_bool(key, value);
  } else if (key == "train.lr") {
    cfg.lr = parse_float(key, value);
  } else if (key == "train.weight_decay") {
    cfg.weight_decay = parse_float(key, value);
  } else if (key == "train.epochs") {
    cfg.epochs = parse_int(key, value);
  } else if (key == "train.batch") {
    cfg.batch = parse_int(key, value);
    check(cfg.batch >= 1, "config: train.batch must be >= 1");
  } else if (key == "train.loss_weights") {
    // comma-separated triple: fusion, t1, t2
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
      if (c == ',') {
        parts.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(trim(cur));
    check(parts.size() == 3, "config: train.loss_weights expects three comma-separated values, got '",
          value, "'");
    cfg.w_fusion = parse_float(key, parts[0]);
    cfg.w_t1 = parse_float(key, parts[1]);
    cfg.w_t2 = parse_float(key, parts[2]);
  } else if (key == "train.warmup_epochs") {
    cfg.warmup_epochs = parse_int(key, value);
  } else if (key == "train.patience") {
    cfg.patience = parse_int(key, value);
    check(cfg.patience >= 1, "config: train.patience must be >= 1");
  } else if (key == "train.augment") {
    cfg.augment = parse_bool(key, value);
  } else if (key == "data.scenario") {
    check(value == "iccd" || value == "svbcd" || value == "mvbcd",
          "config: data.scenario must be iccd, svbcd or mvbcd, got '", value, "'");
    cfg.scenario = value;
  } else if (key == "data.count") {
    cfg.count = parse_int(key, value);
  } else if (key == "data.size") {
    cfg.size = parse_int(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_u64(key, value);
  } else {
    fail("config: unknown key '", key, "'");
  }
}

std::string config_get(const RunConfig& cfg, const std::string& key) {
  if (key == "model.variant") return cfg.variant;
  if (key == "model.max_width") return std::to_string(cfg.max_width);
  if (key == "model.exchange_position") return std::to_string(cfg.exchange_position);
  if (key == "model.cbam") return cfg.cbam ? "true" : "false";
  if (key == "train.lr") return fmt_float(cfg.lr);
  if (key == "train.weight_decay") return fmt_float(cfg.weight_decay);
  if (key == "train.epochs") return std::to_string(cfg.epochs);
  if (key == "train.batch") return std::to_string(cfg.batch);
  if (key == "train.loss_weights") {
    return fmt_float(cfg.w_fusion) + "," + fmt_float(cfg.w_t1) + "," + fmt_float(cfg.w_t2);
  }
  if (key == "train.warmup_epochs") return std::to_string(cfg.warmup_epochs);
  if (key == "train.patience") return std::to_string(cfg.patience);
  if (key == "train.augment") return cfg.augment ? "true" : "false";
  if (key == "data.scenario") return cfg.scenario;
  if (key == "data.count") return std::to_string(cfg.count);
  if (key == "data.size") return std::to_string(cfg.size);
  if (key == "seed") return std::to_string(cfg.seed);
  fail("config: unknown key '", key, "'");
}

namespace {

// Shared line-format parser for config files and checkpoint echoes.
void parse_kv_lines(const std::string& text, const std::string& origin,
                    const std::function<void(const std::string&, const std::string&)>& sink) {
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, origin, ":", line_no, ": expected 'key = value', got '", line,
          "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), origin, ":", line_no, ": empty key");
    sink(key, value);
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  parse_kv_lines(text, origin,
                 [&](const std::string& k, const std::string& v) { config_set(cfg, k, v); });
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "config: cannot open '", path, "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

std::string serialize_config(const RunConfig& cfg) {
  static const char* keys[] = {
      "model.variant",      "model.max_width", "model.exchange_position",
      "model.cbam",         "train.lr",        "train.weight_decay",
      "train.epochs",       "train.batch",     "train.loss_weights",
      "train.warmup_epochs", "train.patience", "train.augment",
      "data.scenario",      "data.count",      "data.size",
      "seed"};
  std::string out;
  for (const char* k : keys) out += std::string(k) + " = " + config_get(cfg, k) + "\n";
  return out;
}

std::string serialize_model_echo(const model::ModelConfig& mc) {
  std::string out;
  out += "model.variant = " + model::to_string(mc.variant) + "\n";
  out += "model.max_width = " + std::to_string(mc.max_width) + "\n";
  out += "model.exchange_position = " + std::to_string(mc.exchange_position) + "\n";
  out += std::string("model.cbam = ") + (mc.cbam ? "true" : "false") + "\n";
  out += "seed = " + std::to_string(mc.seed) + "\n";
  return out;
}

model::ModelConfig parse_model_echo(const std::string& text) {
  RunConfig cfg;
  parse_kv_lines(text, "<checkpoint config>",
                 [&](const std::string& k, const std::string& v) { config_set(cfg, k, v); });
  return cfg.model_config();
}

}  // namespace sgsln
