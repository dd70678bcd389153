#include "copl/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace copl {

namespace {
constexpr std::uint64_t kSaltEncoders = 0x41;
constexpr std::uint64_t kSaltTable = 0x42;
constexpr std::uint64_t kSaltInit = 0x43;
constexpr std::uint64_t kSaltShots = 0x44;
constexpr std::uint64_t kSaltTrain = 0x45;
constexpr std::uint64_t kSaltProjector = 0x47;
constexpr std::uint64_t kSaltTransferTarget = 0x48;

std::vector<Vector> prototypes_of(const Dataset& ds) {
  std::vector<Vector> protos;
  protos.reserve(ds.classes.size());
  for (const ClassSpec& c : ds.classes) protos.push_back(c.prototype);
  return protos;
}

double evaluate(const ProtocolRun& run, const ClassEmbeddingTable& table,
                const std::vector<const Sample*>& samples,
                const std::vector<int>& class_ids, Scalar gamma) {
  if (samples.empty()) throw std::invalid_argument("empty evaluation set");
  ClassifierConfig cls;
  cls.gamma = gamma;
  cls.class_ids = class_ids;

  std::vector<int> predictions;
  std::vector<int> truth;
  predictions.reserve(samples.size());
  for (const Sample* sample : samples) {
    const SampleForward fwd = forward_sample(run.model, run.text, run.proj,
                                             table, cls, sample->patches);
    const int predicted = class_ids[posterior_argmax(fwd.posterior)];
    if (std::find(class_ids.begin(), class_ids.end(), predicted) ==
        class_ids.end()) {
      throw std::logic_error("prediction escaped the active label space");
    }
    predictions.push_back(predicted);
    truth.push_back(sample->label);
  }
  return accuracy(predictions, truth);
}

std::vector<const Sample*> held_out_samples(const Dataset& dataset,
                                            const std::vector<int>& class_ids,
                                            const std::vector<int>& excluded) {
  const std::set<int> skip(excluded.begin(), excluded.end());
  const std::set<int> keep(class_ids.begin(), class_ids.end());
  std::vector<const Sample*> out;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (skip.count(static_cast<int>(i))) continue;
    if (!keep.count(dataset.samples[i].label)) continue;
    out.push_back(&dataset.samples[i]);
  }
  return out;
}
}  // namespace

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& truth) {
  if (predictions.empty()) throw std::invalid_argument("empty prediction list");
  if (predictions.size() != truth.size()) {
    throw std::invalid_argument("length mismatch");
  }
  long correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == truth[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(predictions.size());
}

double harmonic_mean(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("negative input");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

ProtocolRun train_on_base(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed) {
  ProtocolRun run{
      PromptLearner::init(method, cfg.dims, derive_seed(seed, kSaltInit)),
      TextEncoderStub(cfg.dims, derive_seed(seed, kSaltEncoders)),
      GlobalProjector(cfg.dims, derive_seed(seed, kSaltProjector)),
      ClassEmbeddingTable(prototypes_of(dataset), cfg.dims,
                          derive_seed(seed, kSaltTable)),
      {},
      {}};

  run.shot_indices = sample_kshot(dataset, k_shots, derive_seed(seed, kSaltShots));
  std::sort(run.shot_indices.begin(), run.shot_indices.end());

  std::vector<const Sample*> train_set;
  train_set.reserve(run.shot_indices.size());
  for (int idx : run.shot_indices) train_set.push_back(&dataset.samples[idx]);

  ClassifierConfig cls;
  cls.gamma = cfg.gamma;
  cls.class_ids = dataset.base_ids();

  SgdConfig sgd = cfg.sgd;
  sgd.seed = derive_seed(seed, kSaltTrain);
  run.history = train(run.model, run.text, run.proj, run.table, cls, train_set, sgd);
  return run;
}

MetricRow run_base_to_new(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed) {
  const std::vector<int> base = dataset.base_ids();
  const std::vector<int> fresh = dataset.new_ids();
  if (fresh.empty()) {
    throw std::invalid_argument("dataset has no new classes");
  }
  const ProtocolRun run = train_on_base(method, dataset, k_shots, cfg, seed);

  MetricRow row;
  row.protocol = "base_to_new";
  row.method = method_name(method);
  row.seed = seed;
  row.seen_acc = evaluate(run, run.table,
                          held_out_samples(dataset, base, run.shot_indices),
                          base, cfg.gamma);
  row.unseen_acc =
      evaluate(run, run.table, held_out_samples(dataset, fresh, {}), fresh,
               cfg.gamma);
  row.hm = harmonic_mean(*row.seen_acc, *row.unseen_acc);
  return row;
}

MetricRow run_cross_dataset(Method method, const Dataset& source,
                            const Dataset& target, int k_shots,
                            const RunConfig& cfg, std::uint64_t seed) {
  if (source.desc.patch_dim != target.desc.patch_dim) {
    throw std::invalid_argument("dimension mismatch");
  }
  const ProtocolRun run = train_on_base(method, source, k_shots, cfg, seed);

  MetricRow row;
  row.protocol = "cross_dataset";
  row.method = method_name(method);
  row.seed = seed;

  const std::vector<int> source_base = source.base_ids();
  row.seen_acc = evaluate(run, run.table,
                          held_out_samples(source, source_base, run.shot_indices),
                          source_base, cfg.gamma);

  // Zero-shot on the target: its own class embeddings (from the shared
  // frozen table seed), the same shot subset excluded so that
  // target == source degenerates to the seen evaluation exactly.
  const ClassEmbeddingTable target_table(prototypes_of(target), cfg.dims,
                                         derive_seed(seed, kSaltTable));
  const std::vector<int> target_base = target.base_ids();
  const std::vector<int> target_shots =
      sample_kshot(target, k_shots, derive_seed(seed, kSaltShots));
  row.unseen_acc = evaluate(run, target_table,
                            held_out_samples(target, target_base, target_shots),
                            target_base, cfg.gamma);
  row.hm = harmonic_mean(*row.seen_acc, *row.unseen_acc);
  return row;
}

MetricRow run_incremental(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed) {
  const ProtocolRun run = train_on_base(method, dataset, k_shots, cfg, seed);

  std::vector<int> joint = dataset.base_ids();
  const std::vector<int> fresh = dataset.new_ids();
  joint.insert(joint.end(), fresh.begin(), fresh.end());
  std::sort(joint.begin(), joint.end());

  MetricRow row;
  row.protocol = "incremental";
  row.method = method_name(method);
  row.seed = seed;
  row.seen_acc = evaluate(run, run.table,
                          held_out_samples(dataset, joint, run.shot_indices),
                          joint, cfg.gamma);
  return row;
}

std::pair<MetricRow, MetricRow> run_ablation_global_vs_local(
    const Dataset& dataset, int k_shots, const RunConfig& cfg,
    std::uint64_t seed) {
  MetricRow local = run_base_to_new(Method::kCopl, dataset, k_shots, cfg, seed);
  MetricRow global =
      run_base_to_new(Method::kCoplGlobal, dataset, k_shots, cfg, seed);
  local.protocol = "ablation_local_global";
  global.protocol = "ablation_local_global";
  return {local, global};
}

DatasetDescriptor transfer_target_descriptor(const DatasetDescriptor& source) {
  DatasetDescriptor target = source;
  target.clutter_seed = effective_clutter_seed(source);
  target.seed = derive_seed(source.seed, kSaltTransferTarget);
  target.split_fraction = 1.0;
  return target;
}

void upsert_rows(std::vector<MetricRow>& rows,
                 const std::vector<MetricRow>& fresh) {
  for (const MetricRow& row : fresh) {
    auto match = std::find_if(rows.begin(), rows.end(), [&](const MetricRow& r) {
      return r.protocol == row.protocol && r.method == row.method &&
             r.seed == row.seed;
    });
    if (match != rows.end()) {
      *match = row;
    } else {
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    if (a.protocol != b.protocol) return a.protocol < b.protocol;
    if (a.method != b.method) return a.method < b.method;
    return a.seed < b.seed;
  });
}

namespace {
std::string format_cell(const std::optional<double>& value) {
  if (!value) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *value);
  return buf;
}

std::optional<double> parse_cell(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::strtod(cell.c_str(), nullptr);
}
}  // namespace

void write_results_csv(const std::vector<MetricRow>& rows,
                       const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "protocol,method,seed,seen_acc,unseen_acc,hm\n";
  for (const MetricRow& row : rows) {
    os << row.protocol << ',' << row.method << ',' << row.seed << ','
       << format_cell(row.seen_acc) << ',' << format_cell(row.unseen_acc)
       << ',' << format_cell(row.hm) << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<MetricRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) return {};
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    MetricRow row;
    std::getline(ss, row.protocol, ',');
    std::getline(ss, row.method, ',');
    std::getline(ss, cell, ',');
    row.seed = std::strtoull(cell.c_str(), nullptr, 10);
    std::getline(ss, cell, ',');
    row.seen_acc = parse_cell(cell);
    std::getline(ss, cell, ',');
    row.unseen_acc = parse_cell(cell);
    std::getline(ss, cell, ',');
    row.hm = parse_cell(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_results_json(const std::vector<MetricRow>& rows,
                        const std::string& path) {
  nlohmann::json out = nlohmann::json::array();
  for (const MetricRow& row : rows) {
    nlohmann::json j;
    j["protocol"] = row.protocol;
    j["method"] = row.method;
    j["seed"] = row.seed;
    j["seen_acc"] = row.seen_acc ? nlohmann::json(*row.seen_acc)
                                 : nlohmann::json(nullptr);
    j["unseen_acc"] = row.unseen_acc ? nlohmann::json(*row.unseen_acc)
                                     : nlohmann::json(nullptr);
    j["hm"] = row.hm ? nlohmann::json(*row.hm) : nlohmann::json(nullptr);
    out.push_back(std::move(j));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << out.dump(2) << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<MetricRow> read_results_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) return {};
  nlohmann::json in;
  try {
    is >> in;
  } catch (const nlohmann::json::exception&) {
    return {};
  }
  std::vector<MetricRow> rows;
  for (const auto& j : in) {
    MetricRow row;
    row.protocol = j.value("protocol", "");
    row.method = j.value("method", "");
    row.seed = j.value("seed", std::uint64_t(0));
    if (j.contains("seen_acc") && !j["seen_acc"].is_null()) {
      row.seen_acc = j["seen_acc"].get<double>();
    }
    if (j.contains("unseen_acc") && !j["unseen_acc"].is_null()) {
      row.unseen_acc = j["unseen_acc"].get<double>();
    }
    if (j.contains("hm") && !j["hm"].is_null()) {
      row.hm = j["hm"].get<double>();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace copl

