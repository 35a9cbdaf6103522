#pragma once

#include <fstream>

#include "training.hpp"

namespace snndhz {

struct RunConfig {
  TrainConfig train;
  ModelConfig model;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected true/false, got '" + v + "'");
}

template <typename T>
inline T parse_num(const std::string& v, int line) {
  try {
    size_t used = 0;
    if constexpr (std::is_same_v<T, float>) {
      float r = std::stof(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return r;
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      unsigned long long r = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return static_cast<uint64_t>(r);
    } else {
      long r = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return static_cast<T>(r);
    }
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": bad numeric value '" + v + "'");
  }
}

}  // namespace config_detail

// Flat INI-style text: [train], [loss], and [model] sections, key = value
// lines, # or ; comments. Unknown sections and keys are errors. The single
// seed under [train] drives both weight initialization and sample shuffling.
inline RunConfig parse_run_config(const std::string& text) {
  using namespace config_detail;
  RunConfig rc;
  std::string section;
  int lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string raw = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    std::string line = trim(raw);
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "train" && section != "loss" && section != "model")
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");

    if (section == "train") {
      if (key == "epochs") rc.train.epochs = parse_num<int>(val, lineno);
      else if (key == "lr") rc.train.lr = parse_num<float>(val, lineno);
      else if (key == "timesteps") rc.train.timesteps = parse_num<int>(val, lineno);
      else if (key == "resolution") rc.train.resolution = parse_num<int>(val, lineno);
      else if (key == "batch_size") rc.train.batch_size = parse_num<int>(val, lineno);
      else if (key == "validation_start_epoch")
        rc.train.validation_start_epoch = parse_num<int>(val, lineno);
      else if (key == "seed") {
        rc.train.seed = parse_num<uint64_t>(val, lineno);
        rc.model.seed = rc.train.seed;
      } else
        throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                          "' in [train]");
    } else if (section == "loss") {
      if (key == "alpha") rc.train.loss.alpha = parse_num<float>(val, lineno);
      else if (key == "beta") rc.train.loss.beta = parse_num<float>(val, lineno);
      else
        throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                          "' in [loss]");
    } else {
      if (key == "zeta") rc.model.zeta = parse_num<float>(val, lineno);
      else if (key == "lambda") rc.model.lambda = parse_num<float>(val, lineno);
      else if (key == "v_th") rc.model.v_th = parse_num<float>(val, lineno);
      else if (key == "adaptive_threshold") rc.model.adaptive_threshold = parse_bool(val, lineno);
      else if (key == "rgb_only") rc.model.rgb_only = parse_bool(val, lineno);
      else if (key == "heads") rc.model.heads = parse_num<int>(val, lineno);
      else
        throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key +
                          "' in [model]");
    }
  }
  rc.train.validate();
  if (rc.model.heads < 1) throw ConfigError("model: heads must be >= 1");
  if (!(rc.model.zeta > 0.0f && rc.model.zeta < 1.0f))
    throw ConfigError("model: zeta must lie in (0,1)");
  if (!(rc.model.lambda > 0.0f)) throw ConfigError("model: lambda must be positive");
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

inline std::string default_config_text() {
  return
      "[train]\n"
      "epochs = 100\n"
      "lr = 0.001\n"
      "timesteps = 10\n"
      "resolution = 512\n"
      "batch_size = 1\n"
      "validation_start_epoch = 20\n"
      "seed = 1\n"
      "\n"
      "[loss]\n"
      "alpha = 0.5\n"
      "beta = 0.25\n"
      "\n"
      "[model]\n"
      "zeta = 0.5\n"
      "lambda = 25\n"
      "v_th = 0.5\n"
      "adaptive_threshold = true\n"
      "rgb_only = false\n"
      "heads = 1\n";
}

}  // namespace snndhz
