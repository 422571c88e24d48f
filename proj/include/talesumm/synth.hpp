#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "talesumm/episode.hpp"
#include "talesumm/json_io.hpp"
#include "talesumm/labeling.hpp"

namespace talesumm::io {

/// Synthetic episodes with a recap built from planted important segments.
///
/// Background shots come in scenes whose shots cycle through
/// `thread_period` latents (shot threads). Each planted segment is a run of
/// `planted_width` consecutive shots with its own fresh thread latents,
/// nudged along a fixed "importance" direction by `signal_strength`.
/// Frames are latent + frame_jitter noise. The recap holds a trimmed copy of
/// every planted shot plus noise_sigma noise, and `recap_distractors` shots
/// that appear nowhere in the episode.
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t num_episodes = 1;
  std::size_t shots = 50;
  std::size_t utterances = 30;
  std::array<std::size_t, kBackbones> shot_dims{16, 12, 8};
  std::size_t utterance_dim = 24;
  std::size_t min_frames = 4;
  std::size_t max_frames = 12;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  std::size_t planted_segments = 3;
  std::size_t planted_width = 5;
  double recap_trim_fraction = 0.5;
  double noise_sigma = 0.01;
  double frame_jitter = 0.1;
  double min_shot_s = 1.5;
  double max_shot_s = 4.0;
  std::size_t min_scene = 4;
  std::size_t max_scene = 8;
  std::size_t thread_period = 2;
  std::size_t recap_distractors = 2;
  double signal_strength = 1.0;
  double invalid_frame_rate = 0.0;

  void validate() const;
};

Json to_json(const SynthConfig& config);
/// Missing keys keep defaults; unknown keys are a config error.
SynthConfig synth_config_from_json(const Json& doc);

struct SynthEpisode {
  EpisodeFeatures episode;
  EpisodeFeatures recap;
  LabelSet planted;  // binary: 1 on planted shots, dialogs inherit
  std::vector<std::vector<std::size_t>> segments;
};

/// Pure function of the config.
std::vector<SynthEpisode> synth_generate(const SynthConfig& config);

/// Writes `<out>/<episode_id>/{episode.json, recap.json, planted_labels.json,
/// tensors/}`, `<out>/catalog.json` (an episode list pointing at the planted
/// labels) and `<out>/synth_config.json`.
void write_synth(const std::filesystem::path& out_dir, const SynthConfig& config,
                 const std::vector<SynthEpisode>& episodes);

}  // namespace talesumm::io
