#include "talesumm/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "talesumm/error.hpp"
#include "talesumm/metrics.hpp"
#include "talesumm/rng.hpp"

namespace talesumm::train {

void TrainOptions::validate() const {
  if (epochs == 0) throw config_error("train: epochs must be >= 1");
  if (batch == 0) throw config_error("train: batch must be >= 1");
  if (!(max_lr > 0.0)) throw config_error("train: max_lr must be positive");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw config_error("train: pct_start must lie in (0, 1)");
  if (!(weight_decay >= 0.0)) throw config_error("train: weight_decay must be >= 0");
}

std::optional<double> macro_video_ap(const model::TaleSumm<float>& model,
                                     const std::vector<TrainingEpisode>& episodes) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& e : episodes) {
    const auto labels = metrics::binarize(e.labels.shot_scores, e.labels.binarize_threshold);
    if (std::count(labels.begin(), labels.end(), 1) == 0) continue;
    total += metrics::average_precision(model.predict(e.episode).shots, labels);
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return total / static_cast<double>(counted);
}

TrainResult fit(model::TaleSumm<float>& model, const std::vector<TrainingEpisode>& train_set,
                const std::vector<TrainingEpisode>& val_set, const TrainOptions& options) {
  options.validate();
  if (train_set.empty()) throw invalid_input("train: empty training set");
  for (const auto& e : train_set) {
    model.check_compatible(e.episode);
    e.labels.validate(e.episode.shots.size(), e.episode.utterances.size());
  }
  for (const auto& e : val_set) model.check_compatible(e.episode);

  auto& params = model.parameters();
  const std::size_t batches_per_epoch = (train_set.size() + options.batch - 1) / options.batch;
  optim::OneCycleSchedule schedule;
  schedule.max_lr = options.max_lr;
  schedule.pct_start = options.pct_start;
  schedule.total_steps = options.epochs * batches_per_epoch;
  optim::AdamWOptions adam;
  adam.weight_decay = options.weight_decay;

  TrainResult result;
  result.optimizer = optim::make_adamw_state(params);
  std::vector<Tensor<float>> best;
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(options.seed, 0x5eed0000u + epoch));
    shuffler.shuffle(order);

    EpochRecord record;
    record.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * options.batch;
      const std::size_t end = std::min(begin + options.batch, order.size());
      params.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const auto& item = train_set[order[i]];
        model::ForwardOptions fo;
        fo.train = true;
        fo.seed = derive_seed(options.seed, step * 1000003u + i);
        const auto out = model.forward(item.episode, fo);
        auto loss = model::compute_loss(out, item.labels);
        const double value = loss->value[0];
        if (!std::isfinite(value)) {
          throw numerical_error("non-finite training loss " + std::to_string(value) + " on episode " +
                                item.episode.episode_id + " at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step));
        }
        loss_sum += value;
        ag::backward(ag::scale(loss, 1.0f / static_cast<float>(end - begin)));
      }
      record.lr = schedule.lr(step);
      optim::adamw_step(params, result.optimizer, record.lr, adam);
      ++step;
    }
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.val_ap = macro_video_ap(model, val_set);
    result.history.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    // Earliest epoch wins ties.
    const double score = record.val_ap ? *record.val_ap : -record.train_loss;
    if (epoch == 0) result.selected_by_val = record.val_ap.has_value();
    if (record.val_ap.has_value() == result.selected_by_val && score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : params.all()) best.push_back(p.value());
    }
  }
  auto& all = params.all();
  for (std::size_t i = 0; i < all.size(); ++i) all[i].value() = best[i];
  return result;
}

}  // namespace talesumm::train
