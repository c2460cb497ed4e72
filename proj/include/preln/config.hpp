#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "preln/data.hpp"
#include "preln/model.hpp"
#include "preln/scheme.hpp"
#include "preln/trainer.hpp"

namespace preln {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BoundsConfig {
  int probe_batches = 4;
  int probe_seq_len = 0;  // 0: model.seq_len
  int layers = 0;         // 0: every layer (preln bounds only)
  Precision precision = Precision::Double;

  bool operator==(const BoundsConfig&) const = default;
};

// Everything one run needs. model.embed_mode is not read from files; it
// comes from the scheme (see model_config()).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SchemeSpec scheme;
  DataConfig data;
  BoundsConfig bounds;
  std::string output_dir = "out";

  ModelConfig model_config() const { return with_scheme(model, scheme); }
  void validate() const;  // throws ConfigError

  bool operator==(const RunConfig&) const = default;
};

// Line-oriented "section.key = value"; '#' starts a comment. Unknown keys,
// malformed lines and invalid values raise ConfigError.
RunConfig parse_run_config(std::string_view text, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path);
void apply_override(RunConfig& config, std::string_view assignment);  // "key=value"
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string serialize_run_config(const RunConfig& config);

// ModelConfig fields as (key, value) text pairs, keys without a section
// prefix; embed-mode keys included. Used by the checkpoint header.
std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& config);
void set_model_config_value(ModelConfig& config, std::string_view key, std::string_view value);

std::vector<std::string> split_list(std::string_view csv);

}  // namespace preln
