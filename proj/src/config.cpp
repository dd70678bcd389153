#include "copl/config.hpp"

#include <fstream>

namespace copl {

RunConfig ExperimentConfig::run_config() const {
  RunConfig run;
  run.dims = dims;
  run.sgd = sgd;
  run.gamma = gamma;
  return run;
}

namespace {
template <typename T>
T get_as(const nlohmann::json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for config key: " + key);
  }
}
}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "method") {
      cfg.method = get_as<std::string>(value, key);
    } else if (key == "methods") {
      cfg.methods = get_as<std::vector<std::string>>(value, key);
    } else if (key == "num_classes") {
      cfg.data.num_classes = get_as<int>(value, key);
    } else if (key == "split_fraction") {
      cfg.data.split_fraction = get_as<double>(value, key);
    } else if (key == "patches") {
      cfg.data.patches = get_as<int>(value, key);
    } else if (key == "patch_dim") {
      cfg.data.patch_dim = get_as<int>(value, key);
    } else if (key == "foreground_patches") {
      cfg.data.foreground_patches = get_as<int>(value, key);
    } else if (key == "clutter_pool_size") {
      cfg.data.clutter_pool_size = get_as<int>(value, key);
    } else if (key == "noise_sigma") {
      cfg.data.noise_sigma = get_as<double>(value, key);
    } else if (key == "salience") {
      cfg.data.salience = get_as<double>(value, key);
    } else if (key == "samples_per_class") {
      cfg.data.samples_per_class = get_as<int>(value, key);
    } else if (key == "data_seed") {
      cfg.data.seed = get_as<std::uint64_t>(value, key);
    } else if (key == "clutter_seed") {
      if (!value.is_null()) {
        cfg.data.clutter_seed = get_as<std::uint64_t>(value, key);
      }
    } else if (key == "prompt_len") {
      cfg.dims.prompt_len = get_as<int>(value, key);
    } else if (key == "token_dim") {
      cfg.dims.token_dim = get_as<int>(value, key);
    } else if (key == "joint_dim") {
      cfg.dims.joint_dim = get_as<int>(value, key);
    } else if (key == "gamma") {
      cfg.gamma = get_as<double>(value, key);
    } else if (key == "base_lr") {
      cfg.sgd.base_lr = get_as<double>(value, key);
    } else if (key == "warmup_lr") {
      cfg.sgd.warmup_lr = get_as<double>(value, key);
    } else if (key == "warmup_epochs") {
      cfg.sgd.warmup_epochs = get_as<int>(value, key);
    } else if (key == "epochs") {
      cfg.sgd.epochs = get_as<int>(value, key);
    } else if (key == "batch_size") {
      cfg.sgd.batch_size = get_as<int>(value, key);
    } else if (key == "momentum") {
      cfg.sgd.momentum = get_as<double>(value, key);
    } else if (key == "seed") {
      cfg.sgd.seed = get_as<std::uint64_t>(value, key);
    } else if (key == "seeds") {
      cfg.seeds = get_as<std::vector<std::uint64_t>>(value, key);
    } else if (key == "k_shots") {
      cfg.k_shots = get_as<int>(value, key);
    } else if (key == "jobs") {
      cfg.jobs = get_as<int>(value, key);
    } else if (key == "output_dir") {
      cfg.output_dir = get_as<std::string>(value, key);
    } else if (key == "data_path") {
      if (!value.is_null()) {
        cfg.data_path = get_as<std::string>(value, key);
      }
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  cfg.dims.patch_dim = cfg.data.patch_dim;

  if (cfg.dims.prompt_len < 1) throw ConfigError("prompt_len must be >= 1");
  if (cfg.dims.token_dim < 1 || cfg.dims.joint_dim < 1 ||
      cfg.dims.patch_dim < 1) {
    throw ConfigError("dimensions must be positive");
  }
  if (cfg.gamma <= 0.0) throw ConfigError("gamma must be positive");
  if (cfg.k_shots < 1) throw ConfigError("k_shots must be >= 1");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (cfg.methods.empty()) throw ConfigError("methods must be non-empty");
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  method_from_name(cfg.method);
  for (const std::string& m : cfg.methods) method_from_name(m);
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["method"] = cfg.method;
  j["methods"] = cfg.methods;
  j["num_classes"] = cfg.data.num_classes;
  j["split_fraction"] = cfg.data.split_fraction;
  j["patches"] = cfg.data.patches;
  j["patch_dim"] = cfg.data.patch_dim;
  j["foreground_patches"] = cfg.data.foreground_patches;
  j["clutter_pool_size"] = cfg.data.clutter_pool_size;
  j["noise_sigma"] = cfg.data.noise_sigma;
  j["salience"] = cfg.data.salience;
  j["samples_per_class"] = cfg.data.samples_per_class;
  j["data_seed"] = cfg.data.seed;
  j["clutter_seed"] = effective_clutter_seed(cfg.data);
  j["prompt_len"] = cfg.dims.prompt_len;
  j["token_dim"] = cfg.dims.token_dim;
  j["joint_dim"] = cfg.dims.joint_dim;
  j["gamma"] = cfg.gamma;
  j["base_lr"] = cfg.sgd.base_lr;
  j["warmup_lr"] = cfg.sgd.warmup_lr;
  j["warmup_epochs"] = cfg.sgd.warmup_epochs;
  j["epochs"] = cfg.sgd.epochs;
  j["batch_size"] = cfg.sgd.batch_size;
  j["momentum"] = cfg.sgd.momentum;
  j["seed"] = cfg.sgd.seed;
  j["seeds"] = cfg.seeds;
  j["k_shots"] = cfg.k_shots;
  j["jobs"] = cfg.jobs;
  j["output_dir"] = cfg.output_dir;
  j["data_path"] = cfg.data_path ? nlohmann::json(*cfg.data_path)
                                 : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& key,
                    const std::string& value) {
  const nlohmann::json parsed =
      nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) {
    j[key] = value;  // plain string, e.g. a method name or a path
  } else {
    j[key] = parsed;
  }
}

void write_config_echo(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << config_to_json(cfg).dump(2) << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace copl
