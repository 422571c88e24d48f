#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "talesumm/episode.hpp"
#include "talesumm/labeling.hpp"
#include "talesumm/model.hpp"
#include "talesumm/optim.hpp"

namespace talesumm::train {

struct TrainingEpisode {
  EpisodeFeatures episode;
  LabelSet labels;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;        // mean per-episode loss in training mode
  std::optional<double> val_ap;   // macro video AP, absent without val positives
  double lr = 0.0;                // rate of the epoch's last step
};

struct TrainOptions {
  std::size_t epochs = 65;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  double max_lr = 1e-3;
  double pct_start = 0.3;
  double weight_decay = 1e-3;
  /// Called after every epoch (logging, early inspection).
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool selected_by_val = false;
  optim::AdamWState<float> optimizer;
};

/// Macro-averaged video (shot) AP over episodes that have at least one
/// positive label; nullopt if none do.
std::optional<double> macro_video_ap(const model::TaleSumm<float>& model,
                                     const std::vector<TrainingEpisode>& episodes);

/// Mini-batch AdamW with a one-cycle schedule. Each epoch shuffles the
/// training episodes with a seed-derived stream; a batch accumulates
/// per-episode gradients scaled by 1/|batch| before one optimizer step.
/// On return `model` holds the parameters of the best epoch: highest
/// validation AP, or lowest training loss when `val` gives no AP.
/// A non-finite loss raises a numerical error naming episode and epoch.
TrainResult fit(model::TaleSumm<float>& model, const std::vector<TrainingEpisode>& train_set,
                const std::vector<TrainingEpisode>& val_set, const TrainOptions& options);

}  // namespace talesumm::train
