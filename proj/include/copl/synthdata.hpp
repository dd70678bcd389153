#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "copl/numerics.hpp"

namespace copl {

enum class Split { kBase, kNew };

struct ClassSpec {
  int id = 0;
  Vector prototype;  // patch_dim
  Split split = Split::kBase;
};

/// Generative model parameters. Discriminative signal is local: only the
/// foreground patches carry the class prototype, everything else is drawn
/// from a clutter pool shared across classes. `salience` is the
/// probability that a sample contains any foreground patches at all.
struct DatasetDescriptor {
  int num_classes = 8;
  double split_fraction = 0.5;
  int patches = 9;
  int patch_dim = 16;
  int foreground_patches = 3;
  int clutter_pool_size = 32;
  double noise_sigma = 0.3;
  double salience = 1.0;
  int samples_per_class = 40;
  std::uint64_t seed = 0;
  // When unset, derived from `seed`. Cross-dataset transfer pairs share
  // this value so their clutter pools match while prototypes differ.
  std::optional<std::uint64_t> clutter_seed;
};

std::uint64_t effective_clutter_seed(const DatasetDescriptor& desc);

struct Sample {
  int label = 0;
  Matrix patches;  // P x patch_dim
  // Diagnostic only; no model path may read this.
  std::vector<bool> foreground_mask;
};

struct Dataset {
  DatasetDescriptor desc;
  std::vector<ClassSpec> classes;
  std::vector<Sample> samples;

  std::vector<int> base_ids() const;
  std::vector<int> new_ids() const;
  std::vector<int> class_sample_indices(int class_id) const;
};

/// Deterministic in the descriptor: prototypes ~ N(0, I), a shared clutter
/// pool ~ N(0, I), then per sample f foreground patches at seeded random
/// positions and clutter everywhere else, all with N(0, sigma^2 I) noise.
Dataset generate(const DatasetDescriptor& desc);

/// Base/new partition as a pure function of (seed, split_fraction): a
/// seeded shuffle of the class ids, first ceil-rounded fraction base.
void apply_split(Dataset& dataset, double split_fraction, std::uint64_t seed);

/// The partition generate() applies, derived from the descriptor. Also
/// used to split datasets loaded from a feature cache.
void apply_descriptor_split(Dataset& dataset, const DatasetDescriptor& desc);

/// Exactly k sample indices per base class, deterministic in the seed.
/// New-class samples are never selected.
std::vector<int> sample_kshot(const Dataset& dataset, int k,
                              std::uint64_t seed);

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : CacheError {
  using CacheError::CacheError;
};
struct TruncatedError : CacheError {
  using CacheError::CacheError;
};
struct RecordLengthError : CacheError {
  using CacheError::CacheError;
};
struct DimMismatchError : CacheError {
  using CacheError::CacheError;
};

/// CPFC1 feature cache: magic "CPFC1", little-endian u32 header
/// (num_classes, patches, patch_dim, sample count), then per sample a u32
/// label and P * patch_dim little-endian f64 values, row-major.
void save_feature_cache(const Dataset& dataset, const std::string& path);

/// Loads a cache. Class prototypes are reconstructed as the per-class mean
/// patch feature (the file carries samples only); every class starts in
/// the base split until apply_split is called.
Dataset load_feature_cache(const std::string& path);

}  // namespace copl
