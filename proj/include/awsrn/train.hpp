#pragma once

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "awsrn/autodiff.hpp"
#include "awsrn/checkpoint.hpp"
#include "awsrn/errors.hpp"
#include "awsrn/model.hpp"
#include "awsrn/sampler.hpp"

namespace awsrn {

struct TrainConfig {
  double lr0 = 1e-3;
  std::size_t halve_every = 200000;
  std::size_t batch = 16;
  std::size_t patch = 48;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t max_iters = 0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;
  std::size_t prefetch = 0;  // batches produced ahead by a worker thread; 0 samples inline

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (halve_every == 0) throw ConfigError("halve_every must be positive");
    if (batch == 0 || patch == 0) throw ConfigError("batch and patch must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("beta1 and beta2 must lie in (0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (checkpoint_every > 0 && checkpoint_path.empty()) {
      throw ConfigError("checkpoint_every requires a checkpoint path");
    }
  }
};

/// lr0 * 0.5^floor(t / halve_every).
inline double lr_schedule(const TrainConfig& cfg, std::size_t t) {
  return cfg.lr0 * std::pow(0.5, static_cast<double>(t / cfg.halve_every));
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam first/second moments, one buffer per registry entry in registry order.
template <class T>
struct OptimizerState {
  std::vector<std::string> names;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;

  static OptimizerState for_registry(const ParameterRegistry<T>& reg) {
    OptimizerState s;
    for (const auto& p : reg) {
      s.names.push_back(p.name);
      s.m.emplace_back(p.value().size(), T(0));
      s.v.emplace_back(p.value().size(), T(0));
    }
    return s;
  }
};

/// One bias-corrected Adam update of every trainable parameter. Gradients are
/// left in place; the caller zeroes them.
template <class T>
void adam_step(ParameterRegistry<T>& reg, OptimizerState<T>& state, double lr,
               const AdamHyper& hp = {}) {
  if (state.names.size() != reg.size()) {
    throw TrainingError("optimizer state does not match the parameter registry");
  }
  std::size_t i = 0;
  for (auto& p : reg) {
    if (state.names[i] != p.name || state.m[i].size() != p.value().size()) {
      throw TrainingError("optimizer state does not match parameter '" + p.name + "'");
    }
    if (p.trainable && !p.value().has_grad()) {
      throw TrainingError("missing gradient for trainable parameter '" + p.name + "'");
    }
    ++i;
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  i = 0;
  for (auto& p : reg) {
    if (p.trainable) {
      auto w = p.value().data();
      const auto g = p.value().grad();
      auto& m = state.m[i];
      auto& v = state.v[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        const double mj = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
        const double vj = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double step = lr * (mj / bc1) / (std::sqrt(vj / bc2) + hp.eps);
        w[j] = static_cast<T>(w[j] - step);
      }
    }
    ++i;
  }
}

/// Bounded single-producer queue of training batches. One worker owns the
/// generator, so batch order depends only on the seed.
template <class T>
class BatchPrefetcher {
 public:
  BatchPrefetcher(const std::vector<ImagePair>& pairs, int scale, std::uint64_t seed,
                  std::size_t patch, std::size_t batch, std::size_t total, std::size_t capacity)
      : capacity_(std::max<std::size_t>(capacity, 1)) {
    worker_ = std::thread([this, &pairs, scale, seed, patch, batch, total] {
      std::mt19937_64 rng(seed);
      for (std::size_t i = 0; i < total; ++i) {
        std::optional<PatchBatch<T>> item;
        std::exception_ptr err;
        try {
          item = sample_batch<T>(pairs, scale, rng, patch, batch);
        } catch (...) {
          err = std::current_exception();
        }
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [this] { return stop_ || queue_.size() < capacity_; });
        if (stop_) return;
        if (err) {
          error_ = err;
          not_empty_.notify_all();
          return;
        }
        queue_.push_back(std::move(*item));
        not_empty_.notify_all();
      }
    });
  }

  ~BatchPrefetcher() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    not_full_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  PatchBatch<T> next() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [this] { return !queue_.empty() || error_; });
    if (queue_.empty() && error_) std::rethrow_exception(error_);
    PatchBatch<T> b = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_all();
    return b;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<PatchBatch<T>> queue_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread worker_;
};

struct TrainResult {
  std::vector<double> losses;  // one entry per iteration
};

/// sample -> forward -> L1 -> backward -> Adam -> zero grads, for max_iters steps.
/// `start_iter` offsets the learning-rate schedule (resumed runs).
template <class T>
TrainResult train(AwsrnModel<T>& model, const std::vector<ImagePair>& pairs,
                  const TrainConfig& cfg, std::size_t start_iter = 0,
                  const std::function<void(std::size_t, double)>& on_step = {}) {
  cfg.validate();
  TrainResult result;
  if (cfg.max_iters == 0) return result;
  auto& reg = model.params();
  reg.zero_grad();
  auto state = OptimizerState<T>::for_registry(reg);
  const AdamHyper hp{cfg.beta1, cfg.beta2, cfg.eps};
  const int scale = model.config().scale;

  std::mt19937_64 rng(cfg.seed);
  std::optional<BatchPrefetcher<T>> prefetch;
  if (cfg.prefetch > 0) {
    prefetch.emplace(pairs, scale, cfg.seed, cfg.patch, cfg.batch, cfg.max_iters, cfg.prefetch);
  }

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const std::size_t step = start_iter + it;
    PatchBatch<T> batch = prefetch ? prefetch->next()
                                   : sample_batch<T>(pairs, scale, rng, cfg.patch, cfg.batch);
    Tape<T> tape;
    const Var<T> pred = model.forward(tape, Var<T>::constant(std::move(batch.lr)));
    const Var<T> loss = l1_loss(tape, pred, Var<T>::constant(std::move(batch.hr)));
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at iteration " + std::to_string(step));
    }
    tape.backward(loss);
    adam_step(reg, state, lr_schedule(cfg, step), hp);
    reg.zero_grad();
    result.losses.push_back(value);
    if (on_step) on_step(step, value);
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(model, cfg.checkpoint_path);
    }
  }
  return result;
}

/// Two whitespace-separated columns: iteration, loss.
inline void write_loss_trace(const std::string& path, const std::vector<double>& losses,
                             std::size_t start_iter = 0) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TrainingError("cannot write loss trace '" + path + "'");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << start_iter + i << ' ' << losses[i] << '\n';
}

}  // namespace awsrn
