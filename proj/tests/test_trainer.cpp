#include <doctest.h>

#include "copl/eval.hpp"
#include "copl/trainer.hpp"

using namespace copl;

namespace {
SgdConfig defaults() { return SgdConfig{}; }

bool bit_equal(const PromptLearner& a, const PromptLearner& b) {
  auto eq = [](const auto& x, const auto& y) {
    return (x - y).cwiseAbs().maxCoeff() == 0.0;
  };
  return eq(a.prompts, b.prompts) && eq(a.net.u1, b.net.u1) &&
         eq(a.net.c1, b.net.c1) && eq(a.net.u2, b.net.u2) &&
         eq(a.net.c2, b.net.c2) && eq(a.w_a, b.w_a);
}
}  // namespace

TEST_CASE("warmup lr is the constant 1e-5 and the first cosine step is 0.002") {
  const SgdConfig cfg = defaults();  // 1 warmup epoch of 10
  const long total = 100;            // 10 steps per epoch
  for (long step = 0; step < 10; ++step) {
    CHECK(lr_at(cfg, step, total) == 1e-5);
  }
  CHECK(lr_at(cfg, 10, total) == 0.002);
}

TEST_CASE("cosine midpoint halves the base lr") {
  SgdConfig cfg = defaults();
  cfg.warmup_epochs = 0;
  cfg.epochs = 10;
  // T = 100 post-warmup steps, t = 50 is the midpoint
  CHECK(lr_at(cfg, 50, 100) == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("schedule is non-increasing after warmup with max base_lr") {
  const SgdConfig cfg = defaults();
  const long total = 230;
  double prev = 1e9;
  double max_seen = 0.0;
  for (long step = 23; step < total; ++step) {  // post warmup
    const double lr = lr_at(cfg, step, total);
    CHECK(lr <= prev + 1e-18);
    CHECK(lr >= 0.0);
    prev = lr;
    max_seen = std::max(max_seen, lr);
  }
  CHECK(max_seen == cfg.base_lr);
  CHECK_THROWS_AS(lr_at(cfg, total, total), std::out_of_range);
}

TEST_CASE("sgd_step examples") {
  ModelDims dims;
  dims.prompt_len = 1;
  dims.token_dim = 1;
  dims.patch_dim = 1;
  PromptLearner model;
  model.method = Method::kCoop;
  model.dims = dims;
  model.prompts = Matrix::Constant(1, 1, 5.0);
  model.net = MetaNet::zeros(dims);
  model.w_a = Vector::Zero(2);
  Velocity vel = Velocity::zeros_like(model);
  ParamGrads grads = ParamGrads::zeros_like(model);

  SUBCASE("vanilla step") {
    grads.prompts(0, 0) = 2.0;
    sgd_step(model, vel, grads, 1.0, 0.0);
    CHECK(model.prompts(0, 0) == 3.0);
  }
  SUBCASE("zero gradient leaves parameters untouched") {
    sgd_step(model, vel, grads, 1.0, 0.9);
    CHECK(model.prompts(0, 0) == 5.0);
  }
  SUBCASE("momentum unroll over two steps") {
    model.prompts(0, 0) = 0.0;
    grads.prompts(0, 0) = 1.0;
    sgd_step(model, vel, grads, 1.0, 0.9);
    CHECK(model.prompts(0, 0) == doctest::Approx(-1.0));
    sgd_step(model, vel, grads, 1.0, 0.9);
    CHECK(model.prompts(0, 0) == doctest::Approx(-2.9));
  }
  SUBCASE("shape mismatch is rejected") {
    grads.prompts = Matrix::Zero(2, 1);
    CHECK_THROWS_WITH_AS(sgd_step(model, vel, grads, 1.0, 0.9),
                         "shape mismatch", std::invalid_argument);
  }
}

TEST_CASE("zero epochs preserves the initialization bit for bit") {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.samples_per_class = 8;
  desc.seed = 2;
  const Dataset ds = generate(desc);

  RunConfig cfg;
  cfg.sgd.epochs = 0;
  cfg.sgd.warmup_epochs = 0;
  const ProtocolRun run = train_on_base(Method::kCopl, ds, 4, cfg, 5);
  const PromptLearner untouched =
      PromptLearner::init(Method::kCopl, cfg.dims, derive_seed(5, 0x43));
  CHECK(bit_equal(run.model, untouched));
  CHECK(run.history.step.empty());
}

TEST_CASE("training is deterministic and leaves encoders frozen") {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.samples_per_class = 10;
  desc.seed = 6;
  const Dataset ds = generate(desc);

  RunConfig cfg;
  cfg.sgd.epochs = 3;
  const ProtocolRun a = train_on_base(Method::kCopl, ds, 4, cfg, 7);
  const ProtocolRun b = train_on_base(Method::kCopl, ds, 4, cfg, 7);
  CHECK(bit_equal(a.model, b.model));
  REQUIRE(a.history.loss.size() == b.history.loss.size());
  for (std::size_t i = 0; i < a.history.loss.size(); ++i) {
    CHECK(a.history.loss[i] == b.history.loss[i]);
  }

  // frozen encoders: weights equal a fresh construction from the same seed
  const TextEncoderStub fresh(cfg.dims, derive_seed(7, 0x41));
  CHECK((a.text.w1() - fresh.w1()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.text.w2() - fresh.w2()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.text.b1() - fresh.b1()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.text.b2() - fresh.b2()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training reduces the loss on a separable problem") {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.samples_per_class = 20;
  desc.noise_sigma = 0.1;
  desc.seed = 8;
  const Dataset ds = generate(desc);

  RunConfig cfg;
  const ProtocolRun run = train_on_base(Method::kCopl, ds, 16, cfg, 9);
  REQUIRE(run.history.epoch_mean_loss.size() == 10);
  CHECK(run.history.epoch_mean_loss.back() <
        run.history.epoch_mean_loss.front());
}

TEST_CASE("history lengths stay consistent") {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.samples_per_class = 6;
  desc.seed = 10;
  const Dataset ds = generate(desc);

  RunConfig cfg;
  cfg.sgd.epochs = 4;
  cfg.sgd.batch_size = 3;
  const ProtocolRun run = train_on_base(Method::kCocoop, ds, 6, cfg, 11);
  // 2 base classes x 6 shots = 12 samples, batch 3 -> 4 steps per epoch
  CHECK(run.history.step.size() == 16);
  CHECK(run.history.epoch_mean_loss.size() == 4);
  for (std::size_t i = 0; i < run.history.step.size(); ++i) {
    CHECK(run.history.step[i] == static_cast<long>(i));
  }
}

TEST_CASE("training samples outside the label space are rejected") {
  DatasetDescriptor desc;
  desc.num_classes = 4;
  desc.samples_per_class = 4;
  desc.seed = 12;
  const Dataset ds = generate(desc);

  ModelDims dims;
  PromptLearner model = PromptLearner::init(Method::kCopl, dims, 1);
  const TextEncoderStub text(dims, 2);
  const GlobalProjector proj(dims, 3);
  std::vector<Vector> protos;
  for (const ClassSpec& c : ds.classes) protos.push_back(c.prototype);
  const ClassEmbeddingTable table(protos, dims, 4);

  ClassifierConfig cls;
  cls.gamma = 1.0;
  cls.class_ids = {0};  // most samples fall outside
  std::vector<const Sample*> all;
  for (const Sample& s : ds.samples) all.push_back(&s);
  CHECK_THROWS_AS(train(model, text, proj, table, cls, all, SgdConfig{}),
                  std::invalid_argument);
}
