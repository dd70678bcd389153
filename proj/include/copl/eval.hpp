#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copl/model.hpp"
#include "copl/synthdata.hpp"
#include "copl/trainer.hpp"

namespace copl {

struct MetricRow {
  std::string protocol;
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> seen_acc;
  std::optional<double> unseen_acc;
  std::optional<double> hm;
};

/// Percent of matching positions.
double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& truth);

/// 2ab / (a + b); zero when both arguments are zero.
double harmonic_mean(double a, double b);

/// Everything a protocol run needs besides the data and the run seed.
struct RunConfig {
  ModelDims dims;
  SgdConfig sgd;
  Scalar gamma = 0.01;
};

/// A trained model plus the frozen pieces it was trained against. The run
/// seed drives decoupled streams for the encoders, the class table, the
/// shot selection, the init, and the training order, so two methods at the
/// same seed are compared on identical everything else.
struct ProtocolRun {
  PromptLearner model;
  TextEncoderStub text;
  GlobalProjector proj;
  ClassEmbeddingTable table;
  std::vector<int> shot_indices;  // sorted training sample indices
  TrainHistory history;
};

ProtocolRun train_on_base(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed);

/// Trains on a k-shot subset of the base classes, then scores seen
/// accuracy (held-out base samples, base label space) and unseen accuracy
/// (new-class samples, new label space) plus their harmonic mean.
MetricRow run_base_to_new(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed);

/// Trains on the source exactly like run_base_to_new, then evaluates the
/// target dataset with the target's class embeddings (zero-shot transfer).
/// seen_acc carries the source test accuracy, unseen_acc the target
/// accuracy. With target == source this reduces to the seen evaluation.
MetricRow run_cross_dataset(Method method, const Dataset& source,
                            const Dataset& target, int k_shots,
                            const RunConfig& cfg, std::uint64_t seed);

/// Base-trained model scored once over all test samples against the joint
/// base-plus-new label space. The joint accuracy is reported in seen_acc.
MetricRow run_incremental(Method method, const Dataset& dataset, int k_shots,
                          const RunConfig& cfg, std::uint64_t seed);

/// Local-vs-global ablation: identical training and evaluation for copl
/// and copl_global (per-patch features replaced by P copies of the mean).
std::pair<MetricRow, MetricRow> run_ablation_global_vs_local(
    const Dataset& dataset, int k_shots, const RunConfig& cfg,
    std::uint64_t seed);

/// Derived target descriptor for the default transfer pair: same geometry
/// and clutter pool as the source, disjoint prototypes, every class
/// evaluable (split_fraction 1).
DatasetDescriptor transfer_target_descriptor(const DatasetDescriptor& source);

// Results files. Rows are keyed by (protocol, method, seed); rewriting is
// an upsert, so reruns never duplicate and identical inputs produce
// byte-identical files.
void upsert_rows(std::vector<MetricRow>& rows,
                 const std::vector<MetricRow>& fresh);
void write_results_csv(const std::vector<MetricRow>& rows,
                       const std::string& path);
std::vector<MetricRow> read_results_csv(const std::string& path);
void write_results_json(const std::vector<MetricRow>& rows,
                        const std::string& path);
/// Full-precision mirror; preferred over the CSV when merging reruns.
std::vector<MetricRow> read_results_json(const std::string& path);

}  // namespace copl
