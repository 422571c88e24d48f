#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "talesumm/tensor.hpp"

namespace talesumm {

/// Half-open time interval [start_s, end_s) in seconds.
struct Span {
  double start_s = 0.0;
  double end_s = 0.0;

  double mid() const { return 0.5 * (start_s + end_s); }
  double duration() const { return end_s - start_s; }
};

/// Soft importance targets for one episode.
struct LabelSet {
  std::vector<double> shot_scores;
  std::vector<double> dialog_scores;
  std::string provenance = "recap";
  double binarize_threshold = 0.5;

  /// Throws unless lengths equal (shots, dialogs) and every score is in [0, 1].
  void validate(std::size_t shots, std::size_t dialogs) const;
};

}  // namespace talesumm

namespace talesumm::labeling {

/// Frame embeddings of a sequence of shots on one backbone. An empty
/// validity vector for a shot means every frame is valid.
struct FrameBank {
  std::vector<Tensor<float>> shots;
  std::vector<std::vector<std::uint8_t>> validity;

  std::size_t size() const { return shots.size(); }
  bool frame_valid(std::size_t shot, std::size_t frame) const;
};

struct MatchConfig {
  double sim_threshold = 0.85;
  std::size_t top_k = 3;
  std::size_t window_radius = 10;
  std::size_t max_rounds = 64;

  void validate() const;
};

/// Outcome of matching one recap shot against the episode.
struct MatchResult {
  std::vector<std::size_t> candidates;         // every shot owning a frame >= threshold
  std::map<std::size_t, double> scores;        // accumulated top-k scores per shot
  std::optional<std::size_t> best_shot;
  std::vector<std::size_t> matched;            // windowed closure around best_shot, sorted
  std::size_t rounds = 0;
  bool max_rounds_reached = false;

  bool operator==(const MatchResult&) const = default;
};

/// Entry (i, j) = <a_i, b_j> / (|a_i| |b_j|). Pairs involving an invalid
/// frame get the sentinel -2. Throws on a zero-norm valid row.
Tensor<double> cosine_similarity_matrix(const Tensor<double>& a, const Tensor<double>& b,
                                        const std::vector<std::uint8_t>& a_valid = {},
                                        const std::vector<std::uint8_t>& b_valid = {});

/// Candidate mining, top-k frame scoring, best-shot selection and windowed
/// closure for a single recap shot. Shots in `episode` are in temporal order.
MatchResult match_recap_shot(const Tensor<float>& recap_frames,
                             const std::vector<std::uint8_t>& recap_valid,
                             const FrameBank& episode, const MatchConfig& config);

/// match_recap_shot for every recap shot, each independent.
std::vector<MatchResult> match_recap(const FrameBank& recap, const FrameBank& episode,
                                     const MatchConfig& config);

/// Position i is 1 iff i belongs to some result's matched set.
std::vector<std::uint8_t> binary_labels_from_matches(const std::vector<MatchResult>& results,
                                                     std::size_t shot_count);

struct SmoothConfig {
  std::size_t window = 17;

  void validate() const;
};

/// Triangle kernel k(d) = 1 - |d|/(h+1), h = (window-1)/2, centered on every
/// positive; overlapping contributions are added and clipped at 1.
std::vector<double> triangle_smooth(const std::vector<std::uint8_t>& binary,
                                    const SmoothConfig& config);

/// Each utterance takes the score of the shot containing its mid-time; in a
/// gap, the shot with the nearest boundary (earlier shot on ties).
std::vector<double> inherit_dialog_labels(const std::vector<double>& shot_scores,
                                          const std::vector<Span>& shot_spans,
                                          const std::vector<Span>& utterance_spans);

/// match -> binary -> smooth -> dialog inheritance.
LabelSet labels_from_recap(const FrameBank& episode, const std::vector<Span>& shot_spans,
                           const std::vector<Span>& utterance_spans, const FrameBank& recap,
                           const MatchConfig& match_config, const SmoothConfig& smooth_config,
                           std::vector<MatchResult>* matches = nullptr);

}  // namespace talesumm::labeling
