#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "copl/checkpoint.hpp"
#include "copl/config.hpp"
#include "copl/eval.hpp"
#include "copl/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace copl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;

const std::vector<std::string> kConfigKeys = {
    "method",        "methods",        "num_classes",      "split_fraction",
    "patches",       "patch_dim",      "foreground_patches",
    "clutter_pool_size",               "noise_sigma",      "salience",
    "samples_per_class",               "data_seed",        "clutter_seed",
    "prompt_len",    "token_dim",      "joint_dim",        "gamma",
    "base_lr",       "warmup_lr",      "warmup_epochs",    "epochs",
    "batch_size",    "momentum",       "seed",             "seeds",
    "k_shots",       "jobs",           "output_dir",       "data_path"};

const std::vector<std::string> kProtocols = {
    "base_to_new", "one_shot", "cross_dataset", "incremental",
    "ablation_local_global", "hm_check"};

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> overrides;  // only parsed keys applied
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config JSON")->required();
    for (const std::string& key : kConfigKeys) {
      options[key] = cmd->add_option("--" + key, overrides[key],
                                     "override config key '" + key + "'");
    }
  }

  ExperimentConfig resolve() const {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config: " + config_path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& [key, option] : options) {
      if (option->count() > 0) apply_override(j, key, overrides.at(key));
    }
    return config_from_json(j);
  }
};

Dataset load_training_data(const ExperimentConfig& cfg) {
  if (cfg.data_path) {
    Dataset ds = load_feature_cache(*cfg.data_path);
    apply_descriptor_split(ds, cfg.data);
    return ds;
  }
  return generate(cfg.data);
}

void print_row(const MetricRow& row) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return std::string(buf);
  };
  std::cout << row.protocol << " method=" << row.method << " seed=" << row.seed
            << " seen=" << cell(row.seen_acc) << " unseen=" << cell(row.unseen_acc)
            << " hm=" << cell(row.hm) << "\n";
}

int cmd_gen_data(const ConfigCli& cli, const std::string& out_path) {
  const ExperimentConfig cfg = cli.resolve();
  const Dataset ds = generate(cfg.data);
  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_feature_cache(ds, out_path);
  write_config_echo(cfg, out_path + ".config.json");
  std::cout << "wrote " << out_path << ": classes=" << ds.classes.size()
            << " (base=" << ds.base_ids().size() << ", new="
            << ds.new_ids().size() << ") patches=" << cfg.data.patches
            << " patch_dim=" << cfg.data.patch_dim
            << " samples=" << ds.samples.size() << "\n";
  return kExitOk;
}

int cmd_train(const ConfigCli& cli) {
  const ExperimentConfig cfg = cli.resolve();
  const Dataset ds = load_training_data(cfg);
  const ProtocolRun run =
      train_on_base(method_from_name(cfg.method), ds, cfg.k_shots,
                    cfg.run_config(), cfg.sgd.seed);

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  save_checkpoint(run.model, (out / "checkpoint.copl").string());
  write_history_csv(run.history, (out / "history.csv").string());
  write_config_echo(cfg, (out / "train.config.json").string());

  const Scalar last_loss =
      run.history.epoch_mean_loss.empty() ? 0.0 : run.history.epoch_mean_loss.back();
  std::cout << "trained " << cfg.method << " for " << cfg.sgd.epochs
            << " epochs on " << run.shot_indices.size() << " samples; "
            << "final epoch mean loss " << last_loss << "\n"
            << "checkpoint: " << (out / "checkpoint.copl").string() << "\n";
  return kExitOk;
}

struct EvalTask {
  std::string protocol;
  Method method;
  std::uint64_t seed;
};

int cmd_eval(const ConfigCli& cli, const std::string& protocol,
             const std::vector<double>& hm_args) {
  if (std::find(kProtocols.begin(), kProtocols.end(), protocol) ==
      kProtocols.end()) {
    std::string names;
    for (const std::string& p : kProtocols) names += " " + p;
    throw ConfigError("unknown protocol '" + protocol + "'; valid:" + names);
  }

  if (protocol == "hm_check") {
    if (hm_args.size() != 2) {
      throw ConfigError("hm_check needs two accuracy values");
    }
    std::printf("%.2f\n", harmonic_mean(hm_args[0], hm_args[1]));
    return kExitOk;
  }

  const ExperimentConfig cfg = cli.resolve();
  const Dataset ds = load_training_data(cfg);

  Dataset target;  // cross-dataset only
  if (protocol == "cross_dataset") {
    if (cfg.data_path) {
      throw ConfigError("cross_dataset derives its target from the generator; "
                        "data_path is not supported here");
    }
    target = generate(transfer_target_descriptor(cfg.data));
  }

  std::vector<EvalTask> tasks;
  if (protocol == "ablation_local_global") {
    for (std::uint64_t seed : cfg.seeds) {
      tasks.push_back({protocol, Method::kCopl, seed});
    }
  } else {
    for (const std::string& m : cfg.methods) {
      for (std::uint64_t seed : cfg.seeds) {
        tasks.push_back({protocol, method_from_name(m), seed});
      }
    }
  }

  const RunConfig run_cfg = cfg.run_config();
  auto run_one = [&](const EvalTask& task) -> std::vector<MetricRow> {
    if (task.protocol == "base_to_new") {
      return {run_base_to_new(task.method, ds, cfg.k_shots, run_cfg, task.seed)};
    }
    if (task.protocol == "one_shot") {
      MetricRow row = run_base_to_new(task.method, ds, 1, run_cfg, task.seed);
      row.protocol = "one_shot";
      return {row};
    }
    if (task.protocol == "incremental") {
      return {run_incremental(task.method, ds, cfg.k_shots, run_cfg, task.seed)};
    }
    if (task.protocol == "cross_dataset") {
      return {run_cross_dataset(task.method, ds, target, cfg.k_shots, run_cfg,
                                task.seed)};
    }
    auto [local, global] =
        run_ablation_global_vs_local(ds, cfg.k_shots, run_cfg, task.seed);
    return {local, global};
  };

  std::vector<std::vector<MetricRow>> outputs(tasks.size());
  const int jobs = std::max(1, std::min<int>(cfg.jobs, tasks.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) outputs[i] = run_one(tasks[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          outputs[i] = run_one(tasks[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<MetricRow> fresh;
  for (const auto& out : outputs) {
    fresh.insert(fresh.end(), out.begin(), out.end());
  }

  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  const std::string csv_path = (out / "results.csv").string();
  const std::string json_path = (out / "results.json").string();

  // The JSON mirror is the full-precision store; fall back to the CSV so
  // hand-deleted mirrors do not lose rows.
  std::vector<MetricRow> rows = read_results_json(json_path);
  if (rows.empty()) rows = read_results_csv(csv_path);
  upsert_rows(rows, fresh);
  write_results_csv(rows, csv_path);
  write_results_json(rows, json_path);
  write_config_echo(cfg, (out / "eval.config.json").string());

  for (const MetricRow& row : fresh) print_row(row);
  std::cout << "results: " << csv_path << "\n";
  return kExitOk;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
  GradSuiteOptions options;
  options.instances = instances;
  options.seed = seed;
  const GradSuiteResult result = run_gradcheck_suite(options);

  std::map<std::string, double> by_group;
  for (const auto& [label, report] : result.reports) {
    for (const auto& group : report.groups) {
      by_group[group.name] = std::max(by_group[group.name], group.max_rel_error);
    }
  }
  std::cout << "gradient check: " << result.instances_run
            << " instances, tolerance " << options.tolerance << "\n";
  for (const auto& [name, err] : by_group) {
    std::printf("  %-8s worst rel error %.3e\n", name.c_str(), err);
  }
  std::cout << "parameter groups checked: " << result.parameter_groups.size()
            << "\n";
  if (!result.pass) {
    std::printf("FAIL: %s rel error %.3e exceeds %.0e\n",
                result.worst_param.c_str(), result.worst_rel_error,
                options.tolerance);
    return kExitCheckFailure;
  }
  std::printf("PASS: worst %s rel error %.3e\n", result.worst_param.c_str(),
              result.worst_rel_error);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual prompt learning harness"};
  app.require_subcommand(1);

  ConfigCli gen_cli, train_cli, eval_cli;
  std::string gen_out;
  std::string eval_protocol;
  std::vector<double> hm_args;
  int gradcheck_instances = 20;
  std::uint64_t gradcheck_seed = 2024;
  double hm_a = 0.0, hm_b = 0.0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a feature cache");
  gen_cli.attach(gen);
  gen->add_option("out", gen_out, "output CPFC1 path")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train one method");
  train_cli.attach(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "run an evaluation protocol");
  eval_cli.attach(eval_cmd);
  eval_cmd->add_option("protocol", eval_protocol, "protocol name")->required();
  eval_cmd->add_option("values", hm_args, "accuracy pair for hm_check");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference suite");
  grad->add_option("--instances", gradcheck_instances, "random instances");
  grad->add_option("--suite-seed", gradcheck_seed, "suite seed");

  CLI::App* hm = app.add_subcommand("hm-check", "harmonic mean of two values");
  hm->add_option("a", hm_a, "seen accuracy")->required();
  hm->add_option("b", hm_b, "unseen accuracy")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_cli, gen_out);
    if (train_cmd->parsed()) return cmd_train(train_cli);
    if (eval_cmd->parsed()) return cmd_eval(eval_cli, eval_protocol, hm_args);
    if (grad->parsed()) return cmd_gradcheck(gradcheck_instances, gradcheck_seed);
    if (hm->parsed()) {
      std::printf("%.2f\n", harmonic_mean(hm_a, hm_b));
      return kExitOk;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumericalError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const CacheError& e) {
    std::cerr << "data file error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
  return kExitOk;
}
