#pragma once

#include <cstdint>
#include <span>

#include "ran/model.hpp"

namespace ran {

struct TrainConfig {
  double base_lr = 0.00025;
  double lr_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::int64_t max_iter = 2000;
  std::int64_t batch_size = 8;
  bool augment = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// base_lr * (1 - iter / max_iter)^power.
double poly_lr(std::int64_t iter, const TrainConfig& cfg);

/// v <- momentum * v + grad + weight_decay * param (decay only where
/// Parameter::decays), then param <- param - lr * v. Parameters are updated in
/// registration order.
void sgd_step(std::span<Parameter> params, std::span<const ArrayXd> grads, std::span<ArrayXd> momentum_buffers,
              double lr, const TrainConfig& cfg);

}  // namespace ran
