#pragma once

#include "rap/nn/parameters.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace rap::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.2;
};

/// AdamW with decoupled weight decay: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config), lr_(config.lr) {}

  /// Throws "diverged" if any gradient is non-finite; parameters are untouched then.
  void step(ParameterStore& params);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  double lr_;
  long steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct PlateauConfig {
  double factor = 0.5;
  int patience = 10;
  double threshold = 1e-4;  // relative improvement needed to reset patience
  double min_lr = 1e-6;
};

/// Reduce-on-plateau learning-rate schedule driven by a metric to minimize.
class ReduceOnPlateau {
 public:
  explicit ReduceOnPlateau(PlateauConfig config = {}) : config_(config) {}

  /// Returns true when the learning rate was reduced.
  bool step(double metric, AdamW& optimizer);

  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }

 private:
  PlateauConfig config_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct FitConfig {
  int epochs = 50;
  int batch_size = 32;
  AdamWConfig optimizer;
  PlateauConfig scheduler;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0;
  double validation_loss = 0;
  double lr = 0;
};

struct FitResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_validation_loss = 0;
};

/// Mini-batch training loop. `sample_loss(i)` must add the gradient of sample
/// i's loss into `params` and return the loss. `validation_loss()` is
/// evaluated after every epoch (and once before training); the parameters
/// with the lowest validation loss are restored at the end. On a non-finite
/// loss the best parameters so far are restored and "diverged" is thrown.
FitResult fit(ParameterStore& params, int num_samples, const std::function<double(int)>& sample_loss,
              const std::function<double()>& validation_loss, const FitConfig& config);

}  // namespace rap::nn
