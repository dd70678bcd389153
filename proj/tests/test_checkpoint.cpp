#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "copl/checkpoint.hpp"

using namespace copl;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

PromptLearner random_model(std::uint64_t seed) {
  ModelDims dims;
  dims.prompt_len = 4;
  dims.token_dim = 6;
  dims.patch_dim = 5;
  dims.joint_dim = 7;
  return PromptLearner::init(Method::kCopl, dims, seed);
}

bool bit_equal(const PromptLearner& a, const PromptLearner& b) {
  auto eq = [](const auto& x, const auto& y) {
    return (x - y).cwiseAbs().maxCoeff() == 0.0;
  };
  return eq(a.prompts, b.prompts) && eq(a.net.u1, b.net.u1) &&
         eq(a.net.c1, b.net.c1) && eq(a.net.u2, b.net.u2) &&
         eq(a.net.c2, b.net.c2) && eq(a.w_a, b.w_a);
}
}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const PromptLearner model = random_model(5);
  const std::string path = temp_path("copl_test_ckpt.copl");
  save_checkpoint(model, path);
  const PromptLearner restored = load_checkpoint(path, model.method, model.dims);
  CHECK(bit_equal(model, restored));
  std::filesystem::remove(path);
}

TEST_CASE("rewriting a checkpoint yields identical bytes") {
  const PromptLearner model = random_model(6);
  const std::string a = temp_path("copl_ckpt_a.copl");
  const std::string b = temp_path("copl_ckpt_b.copl");
  save_checkpoint(model, a);
  save_checkpoint(model, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
  CHECK(bytes_a.size() > 5);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("corrupted magic and truncation raise distinct errors") {
  const PromptLearner model = random_model(7);
  const std::string path = temp_path("copl_ckpt_bad.copl");
  save_checkpoint(model, path);

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXX", 5);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path, model.method, model.dims),
                    CheckpointBadMagicError);
  }
  SUBCASE("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<long>(bytes.size() - 9));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path, model.method, model.dims),
                    CheckpointTruncatedError);
  }
  SUBCASE("dim mismatch") {
    ModelDims other = model.dims;
    other.prompt_len = 2;
    CHECK_THROWS_AS(load_checkpoint(path, model.method, other),
                    CheckpointDimError);
  }
  std::filesystem::remove(path);
}
