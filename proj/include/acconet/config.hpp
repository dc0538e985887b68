#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "acconet/trainer.hpp"

namespace acconet {

/// Everything a CLI run needs. Stored on disk as `key = value` lines; `#`
/// starts a comment. Keys not listed in config_keys() are rejected.
struct ExperimentConfig {
  train::TrainConfig train;
  std::filesystem::path data_root;
  std::filesystem::path out_dir = "runs/acconet";
  std::string eval_split = "test";
  std::string report_name = "report.json";
  std::string pr_curve_name = "pr_curve.csv";

  /// Assigns one key from its text form. Throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Resolved key/value table in documentation order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
  const char* name;
  const char* help;
};
const std::vector<ConfigKey>& config_keys();

/// Applies the `key = value` lines of text on top of cfg. `origin` prefixes
/// error messages (typically the file name).
void apply_config_text(ExperimentConfig& cfg, const std::string& text,
                       const std::string& origin = "config");
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// Text that apply_config_text parses back into the same configuration.
std::string to_config_text(const ExperimentConfig& cfg);

}  // namespace acconet
