#include "rap/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace rap::nn {

void AdamW::step(ParameterStore& params) {
  if (!params.grads_finite()) throw Error("diverged", "non-finite gradient at optimizer step " + std::to_string(steps_));
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++steps_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  std::size_t i = 0;
  for (auto& p : params) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    if (p.decay && config_.weight_decay != 0.0) p.value *= 1.0 - lr_ * config_.weight_decay;
    m = config_.beta1 * m + (1.0 - config_.beta1) * p.grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m.array() / bias1) / ((v.array() / bias2).sqrt() + config_.eps);
  }
}

bool ReduceOnPlateau::step(double metric, AdamW& optimizer) {
  if (metric < best_ * (1.0 - config_.threshold) || best_ == std::numeric_limits<double>::infinity()) {
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ <= config_.patience) return false;
  bad_epochs_ = 0;
  const double next = std::max(config_.min_lr, optimizer.lr() * config_.factor);
  const bool reduced = next < optimizer.lr();
  optimizer.set_lr(next);
  return reduced;
}

FitResult fit(ParameterStore& params, int num_samples, const std::function<double(int)>& sample_loss,
              const std::function<double()>& validation_loss, const FitConfig& config) {
  if (num_samples <= 0) throw Error("empty dataset", "no training samples");
  if (config.batch_size <= 0) throw Error("invalid config", "batch_size must be positive");

  AdamW optimizer(config.optimizer);
  ReduceOnPlateau scheduler(config.scheduler);
  Rng rng(config.seed);

  FitResult result;
  double best = validation_loss();
  if (!std::isfinite(best)) throw Error("diverged", "non-finite validation loss before training");
  ParameterStore best_params = params;
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), best, optimizer.lr()});
  result.best_epoch = 0;

  std::vector<int> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      params.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) batch_loss += sample_loss(order[i]);
      if (!std::isfinite(batch_loss)) {
        params = best_params;
        throw Error("diverged", "non-finite training loss in epoch " + std::to_string(epoch) +
                                    "; parameters reset to best epoch " + std::to_string(result.best_epoch));
      }
      total += batch_loss;
      params.scale_grad(1.0 / static_cast<double>(stop - start));
      try {
        optimizer.step(params);
      } catch (const Error&) {
        params = best_params;
        throw;
      }
    }
    const double val = validation_loss();
    if (!std::isfinite(val)) {
      params = best_params;
      throw Error("diverged", "non-finite validation loss in epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, total / num_samples, val, optimizer.lr()});
    if (config.verbose) {
      std::fprintf(stderr, "epoch %3d  train %.5f  val %.5f  lr %.2e\n", epoch, total / num_samples, val,
                   optimizer.lr());
    }
    if (val < best) {
      best = val;
      best_params = params;
      result.best_epoch = epoch;
    }
    scheduler.step(val, optimizer);
  }
  params = best_params;
  params.zero_grad();
  result.best_validation_loss = best;
  return result;
}

}  // namespace rap::nn
