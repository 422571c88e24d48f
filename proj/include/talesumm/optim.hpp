#pragma once

#include <cstdint>
#include <vector>

#include "talesumm/autograd.hpp"

namespace talesumm::optim {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// First/second moments per parameter (same order as the store) plus the
/// step counter.
template <typename T>
struct AdamWState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;
};

template <typename T>
AdamWState<T> make_adamw_state(const ag::ParameterStore<T>& params);

/// One AdamW update over every trainable parameter:
///   t += 1; w -= lr*wd*w; m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
///   w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Throws (naming the parameter) on any non-finite gradient, before
/// touching any value.
template <typename T>
void adamw_step(ag::ParameterStore<T>& params, AdamWState<T>& state, double lr,
                const AdamWOptions& options);

/// One-cycle learning rate with cosine phases.
struct OneCycleSchedule {
  double max_lr = 1e-3;
  std::uint64_t total_steps = 1;
  double pct_start = 0.3;
  double initial_div = 25.0;
  double final_div = 1e4;

  std::uint64_t peak_step() const;
  /// Rises from max_lr/initial_div to max_lr at peak_step(), then decays to
  /// max_lr/final_div at total_steps-1. Throws on step >= total_steps.
  double lr(std::uint64_t step) const;
};

}  // namespace talesumm::optim
