#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "talesumm/labeling.hpp"
#include "talesumm/tensor.hpp"

namespace talesumm {

inline constexpr std::size_t kBackbones = 3;

struct ShotFeatures {
  std::string id;
  Span span;
  /// One T_i x D^k frame matrix per backbone; all share the frame count.
  std::array<Tensor<float>, kBackbones> frames;
  /// Per-frame validity (empty = all valid); only matching consults it.
  std::vector<std::uint8_t> validity;

  std::size_t frame_count() const { return frames[0].rows(); }
};

struct UtteranceFeatures {
  std::string id;
  Span span;
  Tensor<float> tokens;  // T_l x D_U
};

/// Precomputed features of one episode: N shots and M utterances in
/// temporal order.
struct EpisodeFeatures {
  std::string episode_id;
  double duration_s = 0.0;
  std::array<std::size_t, kBackbones> shot_dims{};
  std::size_t utterance_dim = 0;
  std::vector<ShotFeatures> shots;
  std::vector<UtteranceFeatures> utterances;

  std::vector<Span> shot_spans() const;
  std::vector<Span> utterance_spans() const;

  /// Frames of one backbone, with validity, for recap matching.
  labeling::FrameBank frame_bank(std::size_t backbone) const;

  /// Throws on inconsistent dims, empty shots, unordered or overlapping
  /// spans, or a duration shorter than the last span end. With
  /// `check_features = false` only the timeline is checked.
  void validate(bool check_features = true) const;
};

}  // namespace talesumm
