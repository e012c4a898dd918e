#include "firesense/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "firesense/error.hpp"

namespace firesense {

namespace {

enum class Kind { Text, Real, Int, UInt, Bool, OptUInt, ArchName };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* fallback;
};

const std::vector<KeySpec>& specs() {
  static const std::vector<KeySpec> s = {
      {"arch", Kind::ArchName, "firesensenet"},
      {"width_mult", Kind::Real, "1"},
      {"dropout", Kind::Real, "0.3"},
      {"lr", Kind::Real, "0.0003"},
      {"batch_size", Kind::Int, "128"},
      {"max_epochs", Kind::Int, "100"},
      {"patience", Kind::Int, "15"},
      {"clip_norm", Kind::Real, "1"},
      {"eta_min", Kind::Real, "0.000001"},
      {"weight_decay", Kind::Real, "0"},
      {"seed", Kind::UInt, "0"},
      {"dropout_seed", Kind::OptUInt, ""},
      {"augment", Kind::Bool, "true"},
      {"soft_labels", Kind::Bool, "true"},
      {"target_f1", Kind::Real, "0"},
      {"pos_weight", Kind::Real, "3"},
      {"dice_eps", Kind::Real, "1"},
      {"focal_gamma", Kind::Real, "2"},
      {"smoothing", Kind::Bool, "true"},
      {"prev_fire_sigma", Kind::Real, "0.8"},
      {"wind_speed_sigma", Kind::Real, "0.4"},
      {"split_seed", Kind::UInt, "0"},
      {"data", Kind::Text, ""},
      {"out", Kind::Text, ""},
  };
  return s;
}

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : specs()) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

void check(const KeySpec& s, const std::string& v) {
  switch (s.kind) {
    case Kind::Text: break;
    case Kind::Real: to_real(s.key, v); break;
    case Kind::Int: to_int(s.key, v); break;
    case Kind::UInt: to_uint(s.key, v); break;
    case Kind::Bool: to_bool(s.key, v); break;
    case Kind::OptUInt:
      if (!v.empty()) to_uint(s.key, v);
      break;
    case Kind::ArchName: parse_arch(v); break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : specs()) values_[s.key] = s.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& s : specs()) out.emplace_back(s.key);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* s = find_spec(key);
  if (!s) throw ConfigError("unknown config key '" + key + "'");
  check(*s, value);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

bool RunConfig::contains(const std::string& key) const { return find_spec(key) != nullptr; }

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    }
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& k : keys()) out += k + "=" + values_.at(k) + "\n";
  return out;
}

void RunConfig::write_echo(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out << echo();
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.arch = parse_arch(get("arch"));
  m.width_mult = to_real("width_mult", get("width_mult"));
  m.dropout_p = to_real("dropout", get("dropout"));
  m.validate();
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = to_real("lr", get("lr"));
  t.batch_size = static_cast<int>(to_int("batch_size", get("batch_size")));
  t.max_epochs = static_cast<int>(to_int("max_epochs", get("max_epochs")));
  t.patience = static_cast<int>(to_int("patience", get("patience")));
  t.clip_norm = to_real("clip_norm", get("clip_norm"));
  t.eta_min = to_real("eta_min", get("eta_min"));
  t.weight_decay = to_real("weight_decay", get("weight_decay"));
  t.seed = to_uint("seed", get("seed"));
  if (!get("dropout_seed").empty()) t.dropout_seed = to_uint("dropout_seed", get("dropout_seed"));
  t.augment = to_bool("augment", get("augment"));
  t.soft_labels = to_bool("soft_labels", get("soft_labels"));
  t.target_f1 = to_real("target_f1", get("target_f1"));
  t.loss.pos_weight = to_real("pos_weight", get("pos_weight"));
  t.loss.dice_eps = to_real("dice_eps", get("dice_eps"));
  t.loss.gamma = to_real("focal_gamma", get("focal_gamma"));
  t.validate();
  return t;
}

SmoothingConfig RunConfig::smoothing() const {
  SmoothingConfig s;
  s.enabled = to_bool("smoothing", get("smoothing"));
  s.prev_fire_sigma = to_real("prev_fire_sigma", get("prev_fire_sigma"));
  s.wind_speed_sigma = to_real("wind_speed_sigma", get("wind_speed_sigma"));
  if (s.enabled && (!(s.prev_fire_sigma > 0) || !(s.wind_speed_sigma > 0))) {
    throw ConfigError("smoothing sigmas must be > 0");
  }
  return s;
}

std::uint64_t RunConfig::split_seed() const { return to_uint("split_seed", get("split_seed")); }

}  // namespace firesense
