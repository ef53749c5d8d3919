#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdet {

// Error taxonomy maps onto CLI exit codes: config 2, data 3, numeric 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The five detection classes, in alphabetical order for stable class ids.
inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"dotted", "folded", "malposed", "normal",
                                                 "unfiltered"};
  return names;
}

inline int class_id_of(const std::string& name) {
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

struct AblationFlags {
  bool cbam = true;
  bool fpn = true;
  bool dcn = true;
  bool acon = true;
  bool augmentation = true;

  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  int input_h = 512;
  int input_w = 512;
  int n_classes = 5;
  int output_stride = 4;
  int fpn_channels = 256;
  int head_channels = 64;
  AblationFlags ablation;
  float lambda_reg = 0.1f;
  float lambda_off = 1.0f;
  int top_k = 100;
  float confidence_threshold = 0.3f;
  float gaussian_iou = 0.7f;

  int map_h() const { return input_h / output_stride; }
  int map_w() const { return input_w / output_stride; }

  bool operator==(const ModelConfig&) const = default;
};

// Flat key = value document. Lines starting with '#' are comments. This is
// the on-disk config format and the target of --set overrides.
class KvDoc {
 public:
  KvDoc() = default;

  static KvDoc parse(std::istream& in) {
    KvDoc doc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      doc.values_[key] = value;
    }
    return doc;
  }

  static KvDoc load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse(f);
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write config file: " + path);
    f << serialize();
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  // Applies a "key=value" override string.
  void set_override(const std::string& expr) {
    auto eq = expr.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + expr);
    std::string key = trim(expr.substr(0, eq));
    std::string value = trim(expr.substr(eq + 1));
    if (key.empty()) throw ConfigError("override has empty key: " + expr);
    values_[key] = value;
  }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_num(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing chars");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
  }

  int get_int(const std::string& key, int fallback) const {
    double v = get_num(key, fallback);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("config key '" + key + "' is not an integer");
    return i;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "' is not a bool: " + v);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline ModelConfig model_config_from_kv(const KvDoc& kv) {
  ModelConfig cfg;
  cfg.input_h = kv.get_int("model.input_h", cfg.input_h);
  cfg.input_w = kv.get_int("model.input_w", cfg.input_w);
  cfg.n_classes = kv.get_int("model.n_classes", cfg.n_classes);
  cfg.output_stride = kv.get_int("model.output_stride", cfg.output_stride);
  cfg.fpn_channels = kv.get_int("model.fpn_channels", cfg.fpn_channels);
  cfg.head_channels = kv.get_int("model.head_channels", cfg.head_channels);
  cfg.ablation.cbam = kv.get_bool("model.cbam", cfg.ablation.cbam);
  cfg.ablation.fpn = kv.get_bool("model.fpn", cfg.ablation.fpn);
  cfg.ablation.dcn = kv.get_bool("model.dcn", cfg.ablation.dcn);
  cfg.ablation.acon = kv.get_bool("model.acon", cfg.ablation.acon);
  cfg.ablation.augmentation = kv.get_bool("model.augmentation", cfg.ablation.augmentation);
  cfg.lambda_reg = static_cast<float>(kv.get_num("model.lambda_reg", cfg.lambda_reg));
  cfg.lambda_off = static_cast<float>(kv.get_num("model.lambda_off", cfg.lambda_off));
  cfg.top_k = kv.get_int("model.top_k", cfg.top_k);
  cfg.confidence_threshold =
      static_cast<float>(kv.get_num("model.confidence_threshold", cfg.confidence_threshold));
  cfg.gaussian_iou = static_cast<float>(kv.get_num("model.gaussian_iou", cfg.gaussian_iou));
  return cfg;
}

inline void model_config_to_kv(const ModelConfig& cfg, KvDoc& kv) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("model.input_h", std::to_string(cfg.input_h));
  kv.set("model.input_w", std::to_string(cfg.input_w));
  kv.set("model.n_classes", std::to_string(cfg.n_classes));
  kv.set("model.output_stride", std::to_string(cfg.output_stride));
  kv.set("model.fpn_channels", std::to_string(cfg.fpn_channels));
  kv.set("model.head_channels", std::to_string(cfg.head_channels));
  kv.set("model.cbam", cfg.ablation.cbam ? "true" : "false");
  kv.set("model.fpn", cfg.ablation.fpn ? "true" : "false");
  kv.set("model.dcn", cfg.ablation.dcn ? "true" : "false");
  kv.set("model.acon", cfg.ablation.acon ? "true" : "false");
  kv.set("model.augmentation", cfg.ablation.augmentation ? "true" : "false");
  kv.set("model.lambda_reg", num(cfg.lambda_reg));
  kv.set("model.lambda_off", num(cfg.lambda_off));
  kv.set("model.top_k", std::to_string(cfg.top_k));
  kv.set("model.confidence_threshold", num(cfg.confidence_threshold));
  kv.set("model.gaussian_iou", num(cfg.gaussian_iou));
}

// Rejects inconsistent fields and returns the config unchanged otherwise.
inline ModelConfig validate_config(ModelConfig cfg) {
  if (cfg.input_h <= 0 || cfg.input_w <= 0) throw ConfigError("input size must be positive");
  if (cfg.n_classes <= 0) throw ConfigError("n_classes must be positive");
  if (cfg.output_stride <= 0) throw ConfigError("output_stride must be positive");
  if (cfg.input_h % cfg.output_stride != 0 || cfg.input_w % cfg.output_stride != 0)
    throw ConfigError("output stride " + std::to_string(cfg.output_stride) +
                      " must divide input size " + std::to_string(cfg.input_h) + "x" +
                      std::to_string(cfg.input_w));
  if (cfg.input_h % 32 != 0 || cfg.input_w % 32 != 0)
    throw ConfigError("input size must be divisible by 32 (backbone downsampling)");
  if (cfg.fpn_channels <= 0 || cfg.head_channels <= 0)
    throw ConfigError("channel widths must be positive");
  if (!(cfg.lambda_reg > 0.f) || !(cfg.lambda_off > 0.f))
    throw ConfigError("loss weights must be positive");
  if (cfg.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(cfg.confidence_threshold >= 0.f)) throw ConfigError("confidence_threshold must be >= 0");
  if (!(cfg.gaussian_iou > 0.f && cfg.gaussian_iou < 1.f))
    throw ConfigError("gaussian_iou must be in (0,1)");
  return cfg;
}

// 64-bit FNV-1a over the serialized model config; stored in checkpoints so a
// load against a mismatched architecture fails loudly.
inline std::uint64_t config_fingerprint(const ModelConfig& cfg) {
  KvDoc kv;
  model_config_to_kv(cfg, kv);
  std::string s = kv.serialize();
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace cdet
