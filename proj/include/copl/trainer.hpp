#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "copl/model.hpp"
#include "copl/synthdata.hpp"

namespace copl {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SgdConfig {
  Scalar base_lr = 0.002;
  Scalar warmup_lr = 1e-5;
  int warmup_epochs = 1;
  int epochs = 10;
  int batch_size = 1;
  std::uint64_t seed = 0;
  Scalar momentum = 0.9;
};

/// Constant warmup, then cosine decay from base_lr over the remaining
/// steps: base_lr * 0.5 * (1 + cos(pi * t / T)) with t counting
/// post-warmup steps from zero.
Scalar lr_at(const SgdConfig& cfg, long step, long total_steps);

struct Velocity {
  Matrix prompts;
  MetaNet net;
  Vector w_a;

  static Velocity zeros_like(const PromptLearner& model);
};

/// One SGD-with-momentum update: velocity <- momentum * velocity + grad,
/// param <- param - lr * velocity. Groups with zero gradient stay put, so
/// methods that do not use the meta net or the alignment weights leave
/// them untouched.
void sgd_step(PromptLearner& model, Velocity& velocity, const ParamGrads& grads,
              Scalar lr, Scalar momentum);

struct TrainHistory {
  std::vector<long> step;
  std::vector<int> epoch;
  std::vector<Scalar> lr;
  std::vector<Scalar> loss;
  std::vector<Scalar> epoch_mean_loss;
};

/// Epochs x samples in an order fully determined by cfg.seed (per-epoch
/// reshuffle with the derived seed cfg.seed xor epoch). Updates only the
/// learnable prompt groups; the frozen encoders are read-only throughout.
/// Aborts with a NumericalError naming the step and lr if the loss or a
/// gradient goes non-finite.
TrainHistory train(PromptLearner& model, const TextEncoderStub& text,
                   const GlobalProjector& proj,
                   const ClassEmbeddingTable& table,
                   const ClassifierConfig& cfg,
                   const std::vector<const Sample*>& train_set,
                   const SgdConfig& sgd);

void write_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace copl
