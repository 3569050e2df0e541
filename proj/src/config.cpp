#include "lungct/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "lungct/error.hpp"
#include "lungct/focal_loss.hpp"

namespace lungct {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void invalid(std::string_view key, std::string_view constraint, std::string_view value) {
  throw Error(ErrorKind::InvalidValue, fmt::format("{}: {} (got '{}')", key, constraint, value));
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) invalid(key, "expected a number", value);
  return out;
}

long long parse_int(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) invalid(key, "expected an integer", value);
  return out;
}

int parse_int32(std::string_view key, std::string_view value) {
  const long long v = parse_int(key, value);
  if (v < INT32_MIN || v > INT32_MAX) invalid(key, "integer out of range", value);
  return static_cast<int>(v);
}

bool parse_bool(std::string_view key, std::string_view value) {
  std::string v = trim(value);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  invalid(key, "expected true or false", value);
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(value)};
  for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

struct KeyHandler {
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Field>
KeyHandler real_key(Field field) {
  return {[field](ExperimentConfig& c, std::string_view k, std::string_view v) { field(c) = parse_double(k, v); },
          [field](const ExperimentConfig& c) { return num(field(const_cast<ExperimentConfig&>(c))); }};
}

template <class Field>
KeyHandler int_key(Field field) {
  return {[field](ExperimentConfig& c, std::string_view k, std::string_view v) { field(c) = parse_int32(k, v); },
          [field](const ExperimentConfig& c) { return std::to_string(field(const_cast<ExperimentConfig&>(c))); }};
}

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
    std::vector<std::pair<std::string, KeyHandler>> t;
    t.emplace_back("dataset_root",
                   KeyHandler{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.dataset_root = trim(v); },
                              [](const ExperimentConfig& c) { return c.dataset_root.string(); }});
    t.emplace_back("backbone", KeyHandler{[](ExperimentConfig& c, std::string_view, std::string_view v) {
                                            c.backbone = parse_backbone(trim(v));
                                          },
                                          [](const ExperimentConfig& c) {
                                            std::string s(backbone_name(c.backbone));
                                            std::transform(s.begin(), s.end(), s.begin(),
                                                           [](unsigned char ch) { return std::tolower(ch); });
                                            return s;
                                          }});
    t.emplace_back("backbone_scale", KeyHandler{[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                                  try {
                                                    c.backbone_scale = parse_backbone_scale(trim(v));
                                                  } catch (const Error&) {
                                                    invalid(k, "expected 'full' or 'reduced'", v);
                                                  }
                                                },
                                                [](const ExperimentConfig& c) {
                                                  return std::string(to_string(c.backbone_scale));
                                                }});
    t.emplace_back("split_train", real_key([](ExperimentConfig& c) -> double& { return c.split.train; }));
    t.emplace_back("split_val", real_key([](ExperimentConfig& c) -> double& { return c.split.val; }));
    t.emplace_back("split_test", real_key([](ExperimentConfig& c) -> double& { return c.split.test; }));
    t.emplace_back("seed", KeyHandler{[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                        const long long s = parse_int(k, v);
                                        if (s < 0) invalid(k, "must be >= 0", v);
                                        c.seed = static_cast<std::uint64_t>(s);
                                        c.train.seed = c.seed;
                                      },
                                      [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    t.emplace_back("batch_size", int_key([](ExperimentConfig& c) -> int& { return c.train.batch_size; }));
    t.emplace_back("max_epochs", int_key([](ExperimentConfig& c) -> int& { return c.train.max_epochs; }));
    t.emplace_back("initial_lr", real_key([](ExperimentConfig& c) -> double& { return c.train.initial_lr; }));
    t.emplace_back("lr_factor", real_key([](ExperimentConfig& c) -> double& { return c.train.lr_factor; }));
    t.emplace_back("lr_patience", int_key([](ExperimentConfig& c) -> int& { return c.train.lr_patience; }));
    t.emplace_back("min_lr", real_key([](ExperimentConfig& c) -> double& { return c.train.min_lr; }));
    t.emplace_back("early_stop_patience",
                   int_key([](ExperimentConfig& c) -> int& { return c.train.early_stop_patience; }));
    t.emplace_back("min_delta", real_key([](ExperimentConfig& c) -> double& { return c.train.min_delta; }));
    t.emplace_back("gamma", real_key([](ExperimentConfig& c) -> double& { return c.gamma; }));
    t.emplace_back("alpha_mode", KeyHandler{[](ExperimentConfig& c, std::string_view, std::string_view v) {
                                              c.alpha_mode = trim(v);
                                            },
                                            [](const ExperimentConfig& c) { return c.alpha_mode; }});
    t.emplace_back("rotation_max_deg",
                   real_key([](ExperimentConfig& c) -> double& { return c.augmentation.rotation_max_deg; }));
    t.emplace_back("rotate_prob", real_key([](ExperimentConfig& c) -> double& { return c.augmentation.rotate_prob; }));
    t.emplace_back("flip_prob", real_key([](ExperimentConfig& c) -> double& { return c.augmentation.flip_prob; }));
    t.emplace_back("brightness_low",
                   real_key([](ExperimentConfig& c) -> double& { return c.augmentation.brightness_low; }));
    t.emplace_back("brightness_high",
                   real_key([](ExperimentConfig& c) -> double& { return c.augmentation.brightness_high; }));
    t.emplace_back("brightness_prob",
                   real_key([](ExperimentConfig& c) -> double& { return c.augmentation.brightness_prob; }));
    t.emplace_back("dropout_holes", int_key([](ExperimentConfig& c) -> int& { return c.augmentation.dropout_holes; }));
    t.emplace_back("dropout_hole_frac",
                   real_key([](ExperimentConfig& c) -> double& { return c.augmentation.dropout_hole_frac; }));
    t.emplace_back("dropout_prob", real_key([](ExperimentConfig& c) -> double& { return c.augmentation.dropout_prob; }));
    t.emplace_back("unfreeze_fraction", real_key([](ExperimentConfig& c) -> double& { return c.unfreeze_fraction; }));
    t.emplace_back("dense_units", KeyHandler{[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                               std::vector<int> units;
                                               for (const auto& item : split_list(v)) {
                                                 if (item.empty()) continue;
                                                 const int u = parse_int32(k, item);
                                                 if (u < 1) invalid(k, "units must be >= 1", v);
                                                 units.push_back(u);
                                               }
                                               c.dense_units = std::move(units);
                                             },
                                             [](const ExperimentConfig& c) {
                                               return fmt::format("{}", fmt::join(c.dense_units, ","));
                                             }});
    t.emplace_back("dropout_rate", real_key([](ExperimentConfig& c) -> double& { return c.dropout_rate; }));
    t.emplace_back("pretrained", KeyHandler{[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                                              c.pretrained = parse_bool(k, v);
                                            },
                                            [](const ExperimentConfig& c) {
                                              return std::string(c.pretrained ? "true" : "false");
                                            }});
    t.emplace_back("weights_path",
                   KeyHandler{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.weights_path = trim(v); },
                              [](const ExperimentConfig& c) { return c.weights_path.string(); }});
    t.emplace_back("output_dir",
                   KeyHandler{[](ExperimentConfig& c, std::string_view, std::string_view v) { c.output_dir = trim(v); },
                              [](const ExperimentConfig& c) { return c.output_dir.string(); }});
    return t;
  }();
  return table;
}

const KeyHandler& handler_for(std::string_view key) {
  for (const auto& [name, h] : handlers()) {
    if (name == key) return h;
  }
  throw Error(ErrorKind::UnknownKey, fmt::format("unknown config key '{}'", key));
}

} // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, h] : handlers()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  handler_for(key).set(cfg, key, value);
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) { return handler_for(key).get(cfg); }

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const char* key, const char* constraint, const std::string& value) {
    if (!ok) invalid(key, constraint, value);
  };
  const double split_sum = split.train + split.val + split.test;
  check(split.train > 0.0, "split_train", "must be > 0", num(split.train));
  check(split.val > 0.0, "split_val", "must be > 0", num(split.val));
  check(split.test > 0.0, "split_test", "must be > 0", num(split.test));
  check(std::abs(split_sum - 1.0) <= 1e-9, "split_train", "split ratios must sum to 1", num(split_sum));
  check(train.batch_size >= 1, "batch_size", "must be >= 1", std::to_string(train.batch_size));
  check(train.max_epochs >= 1, "max_epochs", "must be >= 1", std::to_string(train.max_epochs));
  check(train.initial_lr > 0.0, "initial_lr", "must be > 0", num(train.initial_lr));
  check(train.lr_factor > 0.0 && train.lr_factor < 1.0, "lr_factor", "must lie in (0,1)", num(train.lr_factor));
  check(train.lr_patience >= 0, "lr_patience", "must be >= 0", std::to_string(train.lr_patience));
  check(train.min_lr >= 0.0 && train.min_lr <= train.initial_lr, "min_lr", "must lie in [0, initial_lr]",
        num(train.min_lr));
  check(train.early_stop_patience >= 0, "early_stop_patience", "must be >= 0",
        std::to_string(train.early_stop_patience));
  check(train.min_delta >= 0.0, "min_delta", "must be >= 0", num(train.min_delta));
  check(gamma >= 0.0, "gamma", "must be >= 0", num(gamma));
  {
    const auto& a = augmentation;
    check(a.rotation_max_deg >= 0.0, "rotation_max_deg", "must be >= 0", num(a.rotation_max_deg));
    check(a.rotate_prob >= 0.0 && a.rotate_prob <= 1.0, "rotate_prob", "must lie in [0,1]", num(a.rotate_prob));
    check(a.flip_prob >= 0.0 && a.flip_prob <= 1.0, "flip_prob", "must lie in [0,1]", num(a.flip_prob));
    check(a.brightness_prob >= 0.0 && a.brightness_prob <= 1.0, "brightness_prob", "must lie in [0,1]",
          num(a.brightness_prob));
    check(a.dropout_prob >= 0.0 && a.dropout_prob <= 1.0, "dropout_prob", "must lie in [0,1]", num(a.dropout_prob));
    check(a.brightness_low > 0.0, "brightness_low", "must be > 0", num(a.brightness_low));
    check(a.brightness_high >= a.brightness_low, "brightness_high", "must be >= brightness_low",
          num(a.brightness_high));
    check(a.dropout_holes >= 0, "dropout_holes", "must be >= 0", std::to_string(a.dropout_holes));
    check(a.dropout_hole_frac > 0.0 && a.dropout_hole_frac < 1.0, "dropout_hole_frac", "must lie in (0,1)",
          num(a.dropout_hole_frac));
  }
  check(unfreeze_fraction >= 0.0 && unfreeze_fraction <= 1.0, "unfreeze_fraction", "must lie in [0,1]",
        num(unfreeze_fraction));
  check(!dense_units.empty(), "dense_units", "needs at least one layer width", "");
  check(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate", "must lie in [0,1)", num(dropout_rate));
  if (alpha_mode != "inverse_frequency" && alpha_mode != "uniform") {
    const auto items = split_list(alpha_mode);
    check(items.size() == kNumClasses, "alpha_mode", "expected inverse_frequency, uniform, or 4 weights", alpha_mode);
    for (const auto& item : items) {
      const double a = parse_double("alpha_mode", item);
      check(a > 0.0 && a <= 1.0, "alpha_mode", "weights must lie in (0,1]", alpha_mode);
    }
  }
  check(!output_dir.empty(), "output_dir", "must not be empty", "");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source_name) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto sep = body.find_first_of(":=");
    if (sep == std::string::npos) {
      throw Error(ErrorKind::InvalidValue, fmt::format("{}:{}: expected 'key: value'", source_name, line_no));
    }
    set_config_value(cfg, trim(std::string_view(body).substr(0, sep)), trim(std::string_view(body).substr(sep + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot read config " + path.string());
  return parse_config(in, path.string());
}

void write_config_snapshot(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& [name, h] : handlers()) out << name << ": " << h.get(cfg) << '\n';
}

void write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
  write_config_snapshot(cfg, out);
}

std::vector<double> resolve_alpha(const ExperimentConfig& cfg, const std::vector<std::size_t>& train_counts) {
  if (cfg.alpha_mode == "uniform") return std::vector<double>(train_counts.size(), 1.0);
  if (cfg.alpha_mode == "inverse_frequency") return inverse_frequency_alpha(train_counts);
  std::vector<double> alpha;
  for (const auto& item : split_list(cfg.alpha_mode)) alpha.push_back(parse_double("alpha_mode", item));
  return alpha;
}

} // namespace lungct
