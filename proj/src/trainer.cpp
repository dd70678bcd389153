#include "copl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

namespace copl {

namespace {
constexpr double kPi = 3.14159265358979323846;

void check_sgd(const SgdConfig& cfg) {
  if (cfg.base_lr <= 0.0) throw std::invalid_argument("base_lr must be positive");
  if (cfg.warmup_lr <= 0.0) throw std::invalid_argument("warmup_lr must be positive");
  if (cfg.warmup_epochs < 0 || cfg.epochs < cfg.warmup_epochs) {
    throw std::invalid_argument("need epochs >= warmup_epochs >= 0");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

void axpy_update(Matrix& param, Matrix& velocity, const Matrix& grad,
                 Scalar lr, Scalar momentum) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

void axpy_update(Vector& param, Vector& velocity, const Vector& grad,
                 Scalar lr, Scalar momentum) {
  if (param.size() != grad.size()) {
    throw std::invalid_argument("shape mismatch");
  }
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}
}  // namespace

Scalar lr_at(const SgdConfig& cfg, long step, long total_steps) {
  check_sgd(cfg);
  if (step < 0 || step >= total_steps) {
    throw std::out_of_range("step out of range");
  }
  const long warmup_steps =
      cfg.epochs > 0 ? total_steps * cfg.warmup_epochs / cfg.epochs : 0;
  if (step < warmup_steps) return cfg.warmup_lr;
  const long t = step - warmup_steps;
  const long horizon = total_steps - warmup_steps;
  return cfg.base_lr * 0.5 *
         (1.0 + std::cos(kPi * static_cast<double>(t) /
                         static_cast<double>(horizon)));
}

Velocity Velocity::zeros_like(const PromptLearner& model) {
  Velocity v;
  v.prompts = Matrix::Zero(model.prompts.rows(), model.prompts.cols());
  v.net = MetaNet::zeros_like(model.net);
  v.w_a = Vector::Zero(model.w_a.size());
  return v;
}

void sgd_step(PromptLearner& model, Velocity& velocity, const ParamGrads& grads,
              Scalar lr, Scalar momentum) {
  axpy_update(model.prompts, velocity.prompts, grads.prompts, lr, momentum);
  axpy_update(model.net.u1, velocity.net.u1, grads.net.u1, lr, momentum);
  axpy_update(model.net.c1, velocity.net.c1, grads.net.c1, lr, momentum);
  axpy_update(model.net.u2, velocity.net.u2, grads.net.u2, lr, momentum);
  axpy_update(model.net.c2, velocity.net.c2, grads.net.c2, lr, momentum);
  axpy_update(model.w_a, velocity.w_a, grads.w_a, lr, momentum);
}

TrainHistory train(PromptLearner& model, const TextEncoderStub& text,
                   const GlobalProjector& proj,
                   const ClassEmbeddingTable& table,
                   const ClassifierConfig& cfg,
                   const std::vector<const Sample*>& train_set,
                   const SgdConfig& sgd) {
  check_sgd(sgd);
  if (train_set.empty()) throw std::invalid_argument("empty training set");

  std::unordered_map<int, Index> label_index;
  for (std::size_t i = 0; i < cfg.class_ids.size(); ++i) {
    label_index[cfg.class_ids[i]] = static_cast<Index>(i);
  }
  for (const Sample* sample : train_set) {
    if (!label_index.count(sample->label)) {
      throw std::invalid_argument("training sample outside the label space");
    }
  }

  const long n = static_cast<long>(train_set.size());
  const long steps_per_epoch = (n + sgd.batch_size - 1) / sgd.batch_size;
  const long total_steps = steps_per_epoch * sgd.epochs;

  TrainHistory history;
  Velocity velocity = Velocity::zeros_like(model);
  long global_step = 0;

  for (int epoch = 0; epoch < sgd.epochs; ++epoch) {
    Rng order_rng(sgd.seed ^ static_cast<std::uint64_t>(epoch));
    std::vector<long> order(n);
    for (long i = 0; i < n; ++i) order[i] = i;
    for (long i = 0; i + 1 < n; ++i) {
      const long j =
          i + static_cast<long>(order_rng.below(static_cast<std::uint64_t>(n - i)));
      std::swap(order[i], order[j]);
    }

    Scalar epoch_loss = 0.0;
    for (long start = 0; start < n; start += sgd.batch_size) {
      const long end = std::min(n, start + sgd.batch_size);
      ParamGrads grads = ParamGrads::zeros_like(model);
      Scalar batch_loss = 0.0;
      for (long i = start; i < end; ++i) {
        const Sample& sample = *train_set[order[i]];
        const SampleForward fwd = forward_sample(model, text, proj, table, cfg,
                                                 sample.patches);
        const Index label = label_index.at(sample.label);
        batch_loss += cross_entropy(fwd.posterior, label).loss;
        grads.accumulate(full_backward(model, text, cfg, fwd, label));
      }
      const Scalar inv = 1.0 / static_cast<Scalar>(end - start);
      batch_loss *= inv;
      grads.scale(inv);

      const Scalar lr = lr_at(sgd, global_step, total_steps);
      if (!std::isfinite(batch_loss) || !grads.all_finite()) {
        throw NumericalError("non-finite loss at step " +
                             std::to_string(global_step) + " (lr " +
                             std::to_string(lr) + ")");
      }
      sgd_step(model, velocity, grads, lr, sgd.momentum);

      history.step.push_back(global_step);
      history.epoch.push_back(epoch);
      history.lr.push_back(lr);
      history.loss.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++global_step;
    }
    history.epoch_mean_loss.push_back(epoch_loss /
                                      static_cast<Scalar>(steps_per_epoch));
  }
  return history;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "step,epoch,lr,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.step.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%ld,%d,%.12g,%.12g", history.step[i],
                  history.epoch[i], history.lr[i], history.loss[i]);
    os << buf << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace copl
