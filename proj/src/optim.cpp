#include "talesumm/optim.hpp"

#include <cmath>
#include <numbers>

#include "talesumm/error.hpp"

namespace talesumm::optim {

template <typename T>
AdamWState<T> make_adamw_state(const ag::ParameterStore<T>& params) {
  AdamWState<T> state;
  for (const auto& p : params.all()) {
    state.first_moment.emplace_back(p.value().dims());
    state.second_moment.emplace_back(p.value().dims());
  }
  return state;
}

template <typename T>
void adamw_step(ag::ParameterStore<T>& params, AdamWState<T>& state, double lr,
                const AdamWOptions& options) {
  auto& all = params.all();
  if (state.first_moment.size() != all.size() || state.second_moment.size() != all.size()) {
    throw invalid_input("adamw_step: optimizer state does not match parameter list");
  }
  for (auto& p : all) {
    if (!p.trainable) continue;
    for (const auto g : p.grad().data()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw numerical_error("adamw_step: non-finite gradient in parameter " + p.name);
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  const double decay = 1.0 - lr * options.weight_decay;
  for (std::size_t idx = 0; idx < all.size(); ++idx) {
    auto& p = all[idx];
    if (!p.trainable) continue;
    auto& value = p.value();
    const auto& grad = p.grad();
    auto& m = state.first_moment[idx];
    auto& v = state.second_moment[idx];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = options.beta1 * m[i] + (1.0 - options.beta1) * g;
      const double vi = options.beta2 * v[i] + (1.0 - options.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / correction1) / (std::sqrt(vi / correction2) + options.eps);
      value[i] = static_cast<T>(value[i] * decay - lr * update);
    }
  }
}

std::uint64_t OneCycleSchedule::peak_step() const {
  const auto peak = static_cast<std::uint64_t>(std::llround(pct_start * static_cast<double>(total_steps)));
  return total_steps == 0 ? 0 : std::min(peak, total_steps - 1);
}

double OneCycleSchedule::lr(std::uint64_t step) const {
  if (total_steps == 0 || step >= total_steps) {
    throw invalid_input("onecycle: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + ")");
  }
  const auto anneal = [](double from, double to, double pct) {
    return to + (from - to) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
  };
  const std::uint64_t peak = peak_step();
  if (step == peak) return max_lr;
  if (step < peak) {
    return anneal(max_lr / initial_div, max_lr,
                  static_cast<double>(step) / static_cast<double>(peak));
  }
  const std::uint64_t tail = total_steps - 1 - peak;
  return anneal(max_lr, max_lr / final_div,
                static_cast<double>(step - peak) / static_cast<double>(tail));
}

template AdamWState<float> make_adamw_state<float>(const ag::ParameterStore<float>&);
template AdamWState<double> make_adamw_state<double>(const ag::ParameterStore<double>&);
template void adamw_step<float>(ag::ParameterStore<float>&, AdamWState<float>&, double,
                                const AdamWOptions&);
template void adamw_step<double>(ag::ParameterStore<double>&, AdamWState<double>&, double,
                                 const AdamWOptions&);

}  // namespace talesumm::optim
