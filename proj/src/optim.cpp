#include "ran/optim.hpp"

#include <cmath>

namespace ran {

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

double poly_lr(std::int64_t iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.max_iter) throw IterationError("poly_lr: iteration outside [0, max_iter]");
  const double progress = static_cast<double>(iter) / static_cast<double>(cfg.max_iter);
  return cfg.base_lr * std::pow(1.0 - progress, cfg.lr_power);
}

void sgd_step(std::span<Parameter> params, std::span<const ArrayXd> grads, std::span<ArrayXd> momentum_buffers,
              double lr, const TrainConfig& cfg) {
  if (grads.size() != params.size() || momentum_buffers.size() != params.size())
    throw ShapeError("sgd_step: parameter, gradient and momentum counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ArrayXd& p = params[i].value.data;
    if (grads[i].size() != p.size() || momentum_buffers[i].size() != p.size())
      throw ShapeError("sgd_step: buffer size mismatch for '" + params[i].name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ArrayXd& p = params[i].value.data;
    ArrayXd& v = momentum_buffers[i];
    const double decay = params[i].decays ? cfg.weight_decay : 0.0;
    v = cfg.momentum * v + grads[i] + decay * p;
    p -= lr * v;
  }
}

}  // namespace ran
