#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/model.hpp"
#include "awsrn/train.hpp"

namespace awsrn {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline long long parse_int(const KeyValue& kv) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(kv.value, &pos);
    if (pos == kv.value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("line " + std::to_string(kv.line) + ": '" + kv.key +
                    "' expects an integer, got '" + kv.value + "'");
}

inline std::size_t parse_count(const KeyValue& kv) {
  const long long v = parse_int(kv);
  if (v < 0) {
    throw ConfigError("line " + std::to_string(kv.line) + ": '" + kv.key + "' must be >= 0");
  }
  return static_cast<std::size_t>(v);
}

inline double parse_real(const KeyValue& kv) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(kv.value, &pos);
    if (pos == kv.value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("line " + std::to_string(kv.line) + ": '" + kv.key +
                    "' expects a number, got '" + kv.value + "'");
}

inline bool parse_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "yes") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "no") return false;
  throw ConfigError("line " + std::to_string(kv.line) + ": '" + kv.key +
                    "' expects true/false, got '" + kv.value + "'");
}

inline std::vector<int> parse_int_list(const KeyValue& kv) {
  std::vector<int> out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int({kv.key, trim(item), kv.line})));
  }
  return out;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
inline std::vector<KeyValue> parse_key_values(std::istream& in) {
  std::vector<KeyValue> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string s = detail::trim(raw);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    }
    KeyValue kv{detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), line};
    if (kv.key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

inline std::vector<KeyValue> load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_key_values(in);
}

/// Model and training settings resolved from a config file. `model` selects a
/// preset first; remaining keys override individual fields. Unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string preset = "awsrn-s";

  static RunConfig from_key_values(const std::vector<KeyValue>& kvs) {
    RunConfig rc;
    int scale = 2;
    for (const auto& kv : kvs) {
      if (kv.key == "model") rc.preset = kv.value;
      if (kv.key == "scale") scale = static_cast<int>(detail::parse_int(kv));
    }
    rc.model = awsrn::preset(rc.preset, scale);
    for (const auto& kv : kvs) rc.apply(kv);
    rc.model.validate();
    rc.train.validate();
    return rc;
  }

  static RunConfig from_file(const std::string& path) {
    return from_key_values(load_key_values(path));
  }

  void apply(const KeyValue& kv) {
    using namespace detail;
    const std::string& k = kv.key;
    if (k == "model" || k == "scale") return;
    if (k == "n_lfb") model.n_lfb = static_cast<int>(parse_int(kv));
    else if (k == "n_awru") model.n_awru = static_cast<int>(parse_int(kv));
    else if (k == "c_feat") model.c_feat = static_cast<int>(parse_int(kv));
    else if (k == "c_wide") model.c_wide = static_cast<int>(parse_int(kv));
    else if (k == "awms_kernels") model.awms_kernels = parse_int_list(kv);
    else if (k == "ru_kind") model.ru_kind = parse_ru_kind(kv.value);
    else if (k == "use_lrfu") model.use_lrfu = parse_bool(kv);
    else if (k == "use_awms") model.use_awms = parse_bool(kv);
    else if (k == "init_unit_weight") model.init_unit_weight = parse_real(kv);
    else if (k == "init_branch_weight") model.init_branch_weight = parse_real(kv);
    else if (k == "lr0") train.lr0 = parse_real(kv);
    else if (k == "halve_every") train.halve_every = parse_count(kv);
    else if (k == "batch") train.batch = parse_count(kv);
    else if (k == "patch") train.patch = parse_count(kv);
    else if (k == "beta1") train.beta1 = parse_real(kv);
    else if (k == "beta2") train.beta2 = parse_real(kv);
    else if (k == "eps") train.eps = parse_real(kv);
    else if (k == "max_iters") train.max_iters = parse_count(kv);
    else if (k == "seed") train.seed = parse_count(kv);
    else if (k == "checkpoint_every") train.checkpoint_every = parse_count(kv);
    else if (k == "prefetch") train.prefetch = parse_count(kv);
    else {
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
    }
  }
};

}  // namespace awsrn
