#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "copl/synthdata.hpp"

using namespace copl;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

DatasetDescriptor small_desc() {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.patches = 5;
  desc.patch_dim = 6;
  desc.foreground_patches = 2;
  desc.clutter_pool_size = 8;
  desc.samples_per_class = 10;
  desc.seed = 3;
  return desc;
}
}  // namespace

TEST_CASE("split partition arithmetic") {
  const Dataset ds = generate(small_desc());
  CHECK(ds.base_ids().size() == 2);
  CHECK(ds.new_ids().size() == 2);

  // disjoint and exhaustive
  std::set<int> all;
  for (int id : ds.base_ids()) all.insert(id);
  for (int id : ds.new_ids()) all.insert(id);
  CHECK(all.size() == 4);
}

TEST_CASE("split fraction one keeps every class in base") {
  DatasetDescriptor desc = small_desc();
  desc.split_fraction = 1.0;
  const Dataset ds = generate(desc);
  CHECK(ds.base_ids().size() == 4);
  CHECK(ds.new_ids().empty());
}

TEST_CASE("noiseless all-foreground samples equal their prototype") {
  DatasetDescriptor desc = small_desc();
  desc.noise_sigma = 0.0;
  desc.salience = 1.0;
  desc.foreground_patches = desc.patches;
  const Dataset ds = generate(desc);
  for (const Sample& sample : ds.samples) {
    const Vector& mu = ds.classes[sample.label].prototype;
    for (Index p = 0; p < sample.patches.rows(); ++p) {
      CHECK((sample.patches.row(p).transpose() - mu).cwiseAbs().maxCoeff() ==
            0.0);
    }
  }
}

TEST_CASE("salience zero produces no foreground anywhere") {
  DatasetDescriptor desc = small_desc();
  desc.salience = 0.0;
  const Dataset ds = generate(desc);
  for (const Sample& sample : ds.samples) {
    for (bool fg : sample.foreground_mask) CHECK_FALSE(fg);
  }
}

TEST_CASE("salient samples carry exactly f foreground patches") {
  const Dataset ds = generate(small_desc());  // salience 1.0
  for (const Sample& sample : ds.samples) {
    CHECK(std::count(sample.foreground_mask.begin(),
                     sample.foreground_mask.end(), true) == 2);
  }
}

TEST_CASE("generation is a pure function of the descriptor") {
  const Dataset a = generate(small_desc());
  const Dataset b = generate(small_desc());
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK((a.samples[i].patches - b.samples[i].patches).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("foreground exceeding patches is rejected") {
  DatasetDescriptor desc = small_desc();
  desc.foreground_patches = desc.patches + 1;
  CHECK_THROWS_AS(generate(desc), std::invalid_argument);
}

TEST_CASE("shared clutter seed reproduces the pool across prototype seeds") {
  DatasetDescriptor source = small_desc();
  DatasetDescriptor target = small_desc();
  target.seed = 77;  // disjoint prototypes
  target.clutter_seed = effective_clutter_seed(source);
  source.clutter_seed = target.clutter_seed;
  source.salience = 0.0;
  target.salience = 0.0;
  source.noise_sigma = 0.0;
  target.noise_sigma = 0.0;

  const Dataset a = generate(source);
  const Dataset b = generate(target);
  // prototypes differ
  CHECK((a.classes[0].prototype - b.classes[0].prototype).norm() > 0.0);
  // with salience 0 and sigma 0 every patch comes straight from the pool
  std::set<std::string> pool_a, pool_b;
  auto key = [](const Matrix& patches, Index p) {
    std::string k;
    for (Index j = 0; j < patches.cols(); ++j) {
      k += std::to_string(patches(p, j)) + ",";
    }
    return k;
  };
  for (const Sample& s : a.samples) {
    for (Index p = 0; p < s.patches.rows(); ++p) pool_a.insert(key(s.patches, p));
  }
  for (const Sample& s : b.samples) {
    for (Index p = 0; p < s.patches.rows(); ++p) pool_b.insert(key(s.patches, p));
  }
  CHECK(pool_a == pool_b);
}

TEST_CASE("k-shot sampling is deterministic and base only") {
  const Dataset ds = generate(small_desc());
  const std::vector<int> a = sample_kshot(ds, 3, 9);
  const std::vector<int> b = sample_kshot(ds, 3, 9);
  CHECK(a == b);
  CHECK(a.size() == 6);  // 2 base classes x 3 shots

  const std::vector<int> base_ids = ds.base_ids();
  const std::set<int> base(base_ids.begin(), base_ids.end());
  std::set<int> seen_indices;
  for (int idx : a) {
    CHECK(base.count(ds.samples[idx].label) == 1);
    seen_indices.insert(idx);
  }
  CHECK(seen_indices.size() == a.size());  // distinct

  CHECK_THROWS_AS(sample_kshot(ds, 11, 9), std::invalid_argument);
}

TEST_CASE("one-shot subset has one sample per base class") {
  const Dataset ds = generate(small_desc());
  const std::vector<int> subset = sample_kshot(ds, 1, 4);
  CHECK(subset.size() == 2);
}

TEST_CASE("sixteen-shot count and membership") {
  DatasetDescriptor desc = small_desc();
  desc.num_classes = 4;
  desc.samples_per_class = 50;
  const Dataset ds = generate(desc);
  const std::vector<int> subset = sample_kshot(ds, 16, 1);
  CHECK(subset.size() == 32);
  const std::vector<int> base_ids = ds.base_ids();
  const std::set<int> base(base_ids.begin(), base_ids.end());
  for (int idx : subset) CHECK(base.count(ds.samples[idx].label) == 1);
}

TEST_CASE("feature cache round trips") {
  const Dataset ds = generate(small_desc());
  const std::string path = temp_path("copl_cache.cpfc");
  save_feature_cache(ds, path);
  const Dataset loaded = load_feature_cache(path);

  CHECK(loaded.classes.size() == ds.classes.size());
  REQUIRE(loaded.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(loaded.samples[i].label == ds.samples[i].label);
    CHECK((loaded.samples[i].patches - ds.samples[i].patches)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // saving the loaded dataset again reproduces the file bit for bit
  const std::string path2 = temp_path("copl_cache2.cpfc");
  save_feature_cache(loaded, path2);
  std::ifstream fa(path, std::ios::binary), fb(path2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("cache corruption raises distinct error variants") {
  const Dataset ds = generate(small_desc());
  const std::string path = temp_path("copl_cache_bad.cpfc");

  SUBCASE("bad magic") {
    save_feature_cache(ds, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOPE!", 5);
    f.close();
    CHECK_THROWS_WITH_AS(load_feature_cache(path), "bad magic", BadMagicError);
  }
  SUBCASE("truncated header") {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write("CPFC1\x04", 7);
    f.close();
    CHECK_THROWS_AS(load_feature_cache(path), TruncatedError);
  }
  SUBCASE("short records") {
    // claim more samples than the body holds
    save_feature_cache(ds, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const std::size_t record = 4 + 5 * 6 * 8;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<long>(bytes.size() - record / 2));
    out.close();
    CHECK_THROWS_WITH_AS(load_feature_cache(path), "record length mismatch",
                         RecordLengthError);
  }
  SUBCASE("trailing bytes") {
    save_feature_cache(ds, path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.write("zz", 2);
    out.close();
    CHECK_THROWS_AS(load_feature_cache(path), RecordLengthError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("signal locality: the best foreground patch beats the global mean") {
  // the generator premise: mean-pooling dilutes the class signal
  DatasetDescriptor desc;  // defaults: P=9, f=3, sigma=0.3
  desc.num_classes = 4;
  desc.samples_per_class = 250;  // 1000 samples total
  desc.seed = 13;
  const Dataset ds = generate(desc);
  long better = 0, total = 0;
  for (const Sample& sample : ds.samples) {
    const Vector& mu = ds.classes[sample.label].prototype;
    const Vector mean = sample.patches.colwise().mean().transpose();
    double best = -2.0;
    for (Index p = 0; p < sample.patches.rows(); ++p) {
      if (!sample.foreground_mask[p]) continue;
      best = std::max(best, cosine_sim(sample.patches.row(p).transpose(), mu));
    }
    if (best > cosine_sim(mean, mu)) ++better;
    ++total;
  }
  CHECK(total == 1000);
  // "strictly lower expected similarity" for the mean: overwhelming majority
  CHECK(better > total * 95 / 100);
}

TEST_CASE("loaded caches can be split deterministically") {
  const Dataset ds = generate(small_desc());
  const std::string path = temp_path("copl_cache_split.cpfc");
  save_feature_cache(ds, path);
  Dataset loaded = load_feature_cache(path);
  CHECK(loaded.new_ids().empty());
  apply_descriptor_split(loaded, small_desc());
  CHECK(loaded.base_ids() == ds.base_ids());
  CHECK(loaded.new_ids() == ds.new_ids());
  std::filesystem::remove(path);
}
