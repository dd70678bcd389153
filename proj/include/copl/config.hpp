#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "copl/dims.hpp"
#include "copl/eval.hpp"
#include "copl/synthdata.hpp"
#include "copl/trainer.hpp"

namespace copl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat experiment configuration. Defaults follow the training recipe
/// (prompt_len 4, base_lr 0.002, warmup 1e-5 for one epoch, 10 epochs,
/// batch size 1). Unknown keys are a hard error so a typo cannot silently
/// change an experiment.
struct ExperimentConfig {
  std::string method = "copl";
  std::vector<std::string> methods = {"coop", "cocoop", "copl", "copl_global"};

  DatasetDescriptor data;  // data.seed is the "data_seed" key
  ModelDims dims;          // patch_dim shared with the descriptor
  Scalar gamma = 0.01;
  SgdConfig sgd;  // sgd.seed is the "seed" key
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int k_shots = 16;
  int jobs = 1;
  std::string output_dir = "out";
  std::optional<std::string> data_path;

  RunConfig run_config() const;
};

/// Parses a config object, rejecting unknown keys. Values already parsed
/// may be overridden afterwards via apply_override.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path);

/// Applies one `--key value` override onto the raw JSON object. The value
/// is parsed as a JSON literal when possible and kept as a string
/// otherwise.
void apply_override(nlohmann::json& j, const std::string& key,
                    const std::string& value);

void write_config_echo(const ExperimentConfig& cfg, const std::string& path);

}  // namespace copl
