#include "acconet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace acconet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("bad value for '" + key + "': '" + value + "' (expected " + expected + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    bad_value(key, value, std::is_integral_v<T> ? "an integer" : "a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "true or false");
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"data_root", "dataset root holding train/ and test/ splits"},
      {"out_dir", "run directory for logs, checkpoints and outputs"},
      {"seed", "master seed for initialization and shuffling"},
      {"epochs", "number of training epochs"},
      {"batch_size", "images per optimizer step"},
      {"lr", "initial learning rate"},
      {"lr_decay_epoch", "epoch from which the learning rate is divided"},
      {"lr_decay_factor", "divisor applied from lr_decay_epoch on"},
      {"max_iterations", "stop after this many optimizer steps (0 = no limit)"},
      {"ablation", "network variant: full, Baseline, +ACCoM, +BAB, w/o LB, w/o AB, w/ DC, w/ NC"},
      {"loss_mode", "both | bce | iou"},
      {"backbone", "registered backbone name (vgg16-shaped)"},
      {"backbone_weights", "pretrained backbone archive; empty for random init"},
      {"micro", "use the scaled-down schedule (64x64 input)"},
      {"augment", "eightfold flip/rotation augmentation"},
      {"normalization", "input normalization: imagenet | identity"},
      {"init_std", "std of added-layer Gaussian init; 0 selects He scaling"},
      {"adam_beta1", "first-moment decay"},
      {"adam_beta2", "second-moment decay"},
      {"adam_eps", "denominator guard"},
      {"weight_decay", "L2 penalty added to gradients"},
      {"grad_clip", "global gradient-norm limit (0 = off)"},
      {"eval_split", "split used by infer/eval when no paths are given"},
      {"report_name", "metric report file name inside out_dir"},
      {"pr_curve_name", "PR-curve file name inside out_dir"},
  };
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto& t = train;
  try {
    if (key == "data_root") data_root = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "epochs") t.epochs = parse_number<int>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
    else if (key == "lr") t.lr = parse_number<double>(key, value);
    else if (key == "lr_decay_epoch") t.decay_epoch = parse_number<int>(key, value);
    else if (key == "lr_decay_factor") t.decay_factor = parse_number<double>(key, value);
    else if (key == "max_iterations") t.max_iterations = parse_number<std::int64_t>(key, value);
    else if (key == "ablation") t.ablation = parse_ablation(value);
    else if (key == "loss_mode") t.loss_mode = loss::parse_loss_mode(value);
    else if (key == "backbone") t.backbone = value;
    else if (key == "backbone_weights") t.backbone_weights = value;
    else if (key == "micro") t.micro = parse_bool(key, value);
    else if (key == "augment") t.augment = parse_bool(key, value);
    else if (key == "normalization") {
      data::Normalization::named(value);
      t.normalization = value;
    } else if (key == "init_std") t.init_std = parse_number<double>(key, value);
    else if (key == "adam_beta1") t.adam_beta1 = parse_number<double>(key, value);
    else if (key == "adam_beta2") t.adam_beta2 = parse_number<double>(key, value);
    else if (key == "adam_eps") t.adam_eps = parse_number<double>(key, value);
    else if (key == "weight_decay") t.weight_decay = parse_number<double>(key, value);
    else if (key == "grad_clip") t.grad_clip = parse_number<double>(key, value);
    else if (key == "eval_split") {
      data::parse_split(value);
      eval_split = value;
    } else if (key == "report_name") report_name = value;
    else if (key == "pr_curve_name") pr_curve_name = value;
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

std::string ExperimentConfig::get(const std::string& key) const {
  const auto& t = train;
  if (key == "data_root") return data_root.string();
  if (key == "out_dir") return out_dir.string();
  if (key == "seed") return std::to_string(t.seed);
  if (key == "epochs") return std::to_string(t.epochs);
  if (key == "batch_size") return std::to_string(t.batch_size);
  if (key == "lr") return num(t.lr);
  if (key == "lr_decay_epoch") return std::to_string(t.decay_epoch);
  if (key == "lr_decay_factor") return num(t.decay_factor);
  if (key == "max_iterations") return std::to_string(t.max_iterations);
  if (key == "ablation") return to_string(t.ablation);
  if (key == "loss_mode") return loss::to_string(t.loss_mode);
  if (key == "backbone") return t.backbone;
  if (key == "backbone_weights") return t.backbone_weights.string();
  if (key == "micro") return t.micro ? "true" : "false";
  if (key == "augment") return t.augment ? "true" : "false";
  if (key == "normalization") return t.normalization;
  if (key == "init_std") return num(t.init_std);
  if (key == "adam_beta1") return num(t.adam_beta1);
  if (key == "adam_beta2") return num(t.adam_beta2);
  if (key == "adam_eps") return num(t.adam_eps);
  if (key == "weight_decay") return num(t.weight_decay);
  if (key == "grad_clip") return num(t.grad_clip);
  if (key == "eval_split") return eval_split;
  if (key == "report_name") return report_name;
  if (key == "pr_curve_name") return pr_curve_name;
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const ConfigKey& k : config_keys()) out.emplace_back(k.name, get(k.name));
  return out;
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text,
                       const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.entries()) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace acconet
