#include "copl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"

namespace copl {

namespace {
constexpr char kMagic[5] = {'C', 'P', 'F', 'C', '1'};
constexpr std::uint64_t kSaltClutter = 0x31;
constexpr std::uint64_t kSaltPrototypes = 0x32;
constexpr std::uint64_t kSaltSamples = 0x33;
constexpr std::uint64_t kSaltSplit = 0x34;

void validate(const DatasetDescriptor& d) {
  if (d.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (d.patches < 1) throw std::invalid_argument("need at least 1 patch");
  if (d.patch_dim < 1) throw std::invalid_argument("patch_dim must be positive");
  if (d.foreground_patches < 0 || d.foreground_patches > d.patches) {
    throw std::invalid_argument(
        "foreground_patches must lie in [0, patches]");
  }
  if (d.salience < 0.0 || d.salience > 1.0) {
    throw std::invalid_argument("salience must lie in [0, 1]");
  }
  if (d.noise_sigma < 0.0) throw std::invalid_argument("negative noise_sigma");
  if (d.clutter_pool_size < 1) {
    throw std::invalid_argument("clutter_pool_size must be positive");
  }
  if (d.samples_per_class < 1) {
    throw std::invalid_argument("samples_per_class must be positive");
  }
  if (d.split_fraction < 0.0 || d.split_fraction > 1.0) {
    throw std::invalid_argument("split_fraction must lie in [0, 1]");
  }
}

// First `count` entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<int> pick_distinct(Rng& rng, int n, int count) {
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  return ids;
}
}  // namespace

std::uint64_t effective_clutter_seed(const DatasetDescriptor& desc) {
  return desc.clutter_seed.value_or(derive_seed(desc.seed, kSaltClutter));
}

std::vector<int> Dataset::base_ids() const {
  std::vector<int> ids;
  for (const ClassSpec& c : classes) {
    if (c.split == Split::kBase) ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> Dataset::new_ids() const {
  std::vector<int> ids;
  for (const ClassSpec& c : classes) {
    if (c.split == Split::kNew) ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> Dataset::class_sample_indices(int class_id) const {
  std::vector<int> indices;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label == class_id) indices.push_back(static_cast<int>(i));
  }
  return indices;
}

Dataset generate(const DatasetDescriptor& desc) {
  validate(desc);
  Dataset ds;
  ds.desc = desc;

  Rng proto_rng(derive_seed(desc.seed, kSaltPrototypes));
  ds.classes.resize(desc.num_classes);
  for (int c = 0; c < desc.num_classes; ++c) {
    ds.classes[c].id = c;
    ds.classes[c].prototype =
        sample_gaussian_vector(proto_rng, desc.patch_dim, 0.0, 1.0);
  }
  for (int i = 0; i < desc.num_classes; ++i) {
    for (int j = i + 1; j < desc.num_classes; ++j) {
      if ((ds.classes[i].prototype - ds.classes[j].prototype).norm() == 0.0) {
        throw std::runtime_error("prototype collision");
      }
    }
  }

  Rng clutter_rng(effective_clutter_seed(desc));
  const Matrix pool = sample_gaussian(clutter_rng, desc.clutter_pool_size,
                                      desc.patch_dim, 0.0, 1.0);

  Rng sample_rng(derive_seed(desc.seed, kSaltSamples));
  ds.samples.reserve(static_cast<std::size_t>(desc.num_classes) *
                     desc.samples_per_class);
  for (int c = 0; c < desc.num_classes; ++c) {
    for (int s = 0; s < desc.samples_per_class; ++s) {
      Sample sample;
      sample.label = c;
      sample.patches.resize(desc.patches, desc.patch_dim);
      sample.foreground_mask.assign(desc.patches, false);

      const bool salient = sample_rng.next_double() < desc.salience;
      if (salient) {
        for (int p : pick_distinct(sample_rng, desc.patches,
                                   desc.foreground_patches)) {
          sample.foreground_mask[p] = true;
        }
      }
      for (int p = 0; p < desc.patches; ++p) {
        Vector base;
        if (sample.foreground_mask[p]) {
          base = ds.classes[c].prototype;
        } else {
          base = pool.row(static_cast<Index>(
                              sample_rng.below(desc.clutter_pool_size)))
                     .transpose();
        }
        sample.patches.row(p) =
            (base + sample_gaussian_vector(sample_rng, desc.patch_dim, 0.0,
                                           desc.noise_sigma))
                .transpose();
      }
      ds.samples.push_back(std::move(sample));
    }
  }

  apply_descriptor_split(ds, desc);
  return ds;
}

void apply_descriptor_split(Dataset& dataset, const DatasetDescriptor& desc) {
  apply_split(dataset, desc.split_fraction, derive_seed(desc.seed, kSaltSplit));
}

void apply_split(Dataset& dataset, double split_fraction, std::uint64_t seed) {
  const int k = static_cast<int>(dataset.classes.size());
  if (k == 0) throw std::invalid_argument("dataset has no classes");
  int num_base = static_cast<int>(std::lround(k * split_fraction));
  num_base = std::clamp(num_base, 1, k);

  Rng rng(seed);
  std::vector<int> order = pick_distinct(rng, k, k);
  for (int i = 0; i < k; ++i) {
    dataset.classes[order[i]].split = i < num_base ? Split::kBase : Split::kNew;
  }
}

std::vector<int> sample_kshot(const Dataset& dataset, int k,
                              std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  Rng rng(seed);
  std::vector<int> subset;
  for (int class_id : dataset.base_ids()) {
    const std::vector<int> pool = dataset.class_sample_indices(class_id);
    if (static_cast<int>(pool.size()) < k) {
      throw std::invalid_argument(
          "class " + std::to_string(class_id) + " has " +
          std::to_string(pool.size()) + " samples, need " + std::to_string(k));
    }
    for (int pick : pick_distinct(rng, static_cast<int>(pool.size()), k)) {
      subset.push_back(pool[pick]);
    }
  }
  return subset;
}

void save_feature_cache(const Dataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CacheError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  detail::write_u32(os, static_cast<std::uint32_t>(dataset.classes.size()));
  detail::write_u32(os, static_cast<std::uint32_t>(dataset.desc.patches));
  detail::write_u32(os, static_cast<std::uint32_t>(dataset.desc.patch_dim));
  detail::write_u32(os, static_cast<std::uint32_t>(dataset.samples.size()));
  for (const Sample& sample : dataset.samples) {
    detail::write_u32(os, static_cast<std::uint32_t>(sample.label));
    for (Index i = 0; i < sample.patches.size(); ++i) {
      detail::write_f64(os, sample.patches.data()[i]);
    }
  }
  if (!os) throw CacheError("write failed: " + path);
}

Dataset load_feature_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CacheError("cannot open for reading: " + path);

  char magic[5];
  if (!is.read(magic, sizeof(magic))) throw TruncatedError("truncated header");
  if (!std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw BadMagicError("bad magic");
  }
  std::uint32_t num_classes = 0, patches = 0, patch_dim = 0, count = 0;
  if (!detail::read_u32(is, num_classes) || !detail::read_u32(is, patches) ||
      !detail::read_u32(is, patch_dim) || !detail::read_u32(is, count)) {
    throw TruncatedError("truncated header");
  }
  if (num_classes == 0 || patches == 0 || patch_dim == 0) {
    throw DimMismatchError("invalid header dimensions");
  }

  Dataset ds;
  ds.desc.num_classes = static_cast<int>(num_classes);
  ds.desc.patches = static_cast<int>(patches);
  ds.desc.patch_dim = static_cast<int>(patch_dim);
  ds.desc.samples_per_class = 0;

  ds.samples.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t label = 0;
    if (!detail::read_u32(is, label)) {
      throw RecordLengthError("record length mismatch");
    }
    if (label >= num_classes) {
      throw DimMismatchError("label out of range");
    }
    Sample sample;
    sample.label = static_cast<int>(label);
    sample.patches.resize(patches, patch_dim);
    for (Index i = 0; i < sample.patches.size(); ++i) {
      if (!detail::read_f64(is, sample.patches.data()[i])) {
        throw RecordLengthError("record length mismatch");
      }
    }
    sample.foreground_mask.assign(patches, false);
    ds.samples.push_back(std::move(sample));
  }
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw RecordLengthError("trailing bytes");
  }

  // The file carries samples only; prototypes are reconstructed as class
  // means and every class starts in the base split.
  ds.classes.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    ds.classes[c].id = static_cast<int>(c);
    Vector mean = Vector::Zero(patch_dim);
    long rows = 0;
    for (const Sample& sample : ds.samples) {
      if (sample.label == static_cast<int>(c)) {
        mean += sample.patches.colwise().sum().transpose();
        rows += sample.patches.rows();
      }
    }
    ds.classes[c].prototype = rows > 0 ? Vector(mean / rows) : mean;
  }
  return ds;
}

}  // namespace copl
