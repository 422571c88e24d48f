#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "talesumm/autograd.hpp"
#include "talesumm/episode.hpp"
#include "talesumm/labeling.hpp"
#include "talesumm/nn.hpp"

namespace talesumm::model {

using ag::Var;

struct DropoutConfig {
  double projection = 0.1;
  double attention = 0.2;
  double head = 0.2;

  bool operator==(const DropoutConfig&) const = default;
};

struct TaleSummConfig {
  std::size_t d_model = 128;
  std::size_t heads = 8;
  std::size_t shot_layers = 1;
  std::size_t episode_layers = 6;
  std::size_t group_size = 20;     // tokens per local story group
  double time_bin_s = 1.0;
  std::size_t frame_cap = 25;
  DropoutConfig dropout;
  std::array<std::size_t, kBackbones> shot_dims{1664, 768, 512};
  std::size_t utterance_dim = 1024;
  std::size_t max_groups = 256;
  double max_duration_s = 4096.0;  // sizes the frozen time table
  std::size_t ff_multiplier = 4;

  void validate() const;
  std::size_t time_bins() const;

  bool operator==(const TaleSummConfig&) const = default;
};

/// Frame indices fed to the shot encoder. Infer: min(T, cap) evenly spaced
/// indices round(j (T-1)/(cap-1)). Train: min(T, cap) distinct indices drawn
/// uniformly, sorted.
std::vector<std::size_t> sample_frames(std::size_t frame_count, bool train, std::size_t cap,
                                       Rng& rng);

enum class TokenKind : std::uint8_t { kShot, kDialog, kGroup };

struct Token {
  TokenKind kind = TokenKind::kShot;
  std::size_t source = 0;  // shot / utterance index, or group index for kGroup
  double mid_s = 0.0;
  std::size_t group = 0;
};

/// Time-ordered interleaved shot/dialog tokens cut into local story groups,
/// with one group token closing every group.
struct GroupPartition {
  std::vector<Token> tokens;                 // length S + G, in sequence order
  std::vector<std::size_t> block_sizes;      // content tokens per group (before the group token)
  std::vector<std::uint8_t> group_indicator; // o: 1 at group-token positions

  std::size_t group_count() const { return block_sizes.size(); }
  std::size_t content_count() const { return tokens.size() - block_sizes.size(); }
};

GroupPartition build_group_partition(const std::vector<Span>& shot_spans,
                                     const std::vector<Span>& utterance_spans,
                                     std::size_t group_size);

/// Block-diagonal mask over groups (group tokens included) OR o o^T.
/// `group_channel = false` drops the o o^T term. `padding` extra positions
/// are appended that attend only to themselves and are invisible to
/// every other position.
AttentionMask build_attention_mask(const GroupPartition& partition, bool group_channel = true,
                                   std::size_t padding = 0);

struct ForwardOptions {
  bool train = false;
  std::uint64_t seed = 0;
  bool group_channel = true;
  std::size_t pad_to = 0;  // total sequence length incl. padding; 0 = none
};

template <typename T>
struct ForwardOutput {
  Var<T> shot_probs;    // N x 1
  Var<T> dialog_probs;  // M x 1, null when M = 0
};

struct EpisodeScores {
  std::vector<double> shots;
  std::vector<double> dialogs;
};

/// Negatives-to-positives ratio with positive meaning label >= threshold.
double positive_weight(const std::vector<double>& labels, double threshold);

/// BCE(shots; w_S) + BCE(dialogs; w_U) with per-episode positive weights.
template <typename T>
Var<T> compute_loss(const ForwardOutput<T>& output, const LabelSet& labels);

/// The two-level hierarchical scorer. Level 1 turns frames into shot
/// vectors (projected backbone fusion, frame positions, CLS-pooled shot
/// transformer) and word features into utterance vectors (projection +
/// mean). Level 2 runs a masked transformer over the grouped episode
/// sequence and scores every shot and utterance with one shared classifier.
template <typename T>
class TaleSumm {
 public:
  TaleSumm(const TaleSummConfig& config, std::uint64_t init_seed);

  const TaleSummConfig& config() const { return config_; }
  ag::ParameterStore<T>& parameters() { return store_; }
  const ag::ParameterStore<T>& parameters() const { return store_; }

  struct Fusion {
    Var<T> fused;    // L x D
    Var<T> weights;  // L x 3, rows on the simplex
  };

  /// Projects each backbone's frames to D, scores the concatenation with
  /// softmax(tanh(W_P f)) and returns the weighted sum of the projections.
  Fusion fuse_frame_features(const std::array<Var<T>, kBackbones>& frames, bool train,
                             Rng& rng) const;

  /// Encodes a batch of shots whose sampled frames are stacked row-wise per
  /// backbone; `offsets` delimits shots (size N + 1). Returns N x D.
  Var<T> encode_shots(const std::array<Tensor<T>, kBackbones>& stacked_frames,
                      const std::vector<std::size_t>& offsets, bool train, Rng& rng) const;

  /// Stacked word features with utterance offsets (size M + 1) -> M x D.
  Var<T> encode_utterances(const Tensor<T>& stacked_tokens, const std::vector<std::size_t>& offsets,
                           bool train, Rng& rng) const;

  /// Adds type, time-bin and group embeddings, inserts group tokens in
  /// partition order, appends zero padding rows up to pad_to and applies the
  /// input layer norm. `utterances` may be null when M = 0.
  Var<T> assemble_tokens(const Var<T>& shots, const Var<T>& utterances,
                         const GroupPartition& partition, std::size_t pad_to = 0) const;

  ForwardOutput<T> forward(const EpisodeFeatures& episode, const ForwardOptions& options) const;

  /// Inference-mode scores.
  EpisodeScores predict(const EpisodeFeatures& episode) const;

  /// Throws unless the episode's dims match the configured backbones.
  void check_compatible(const EpisodeFeatures& episode) const;

 private:
  TaleSummConfig config_;
  ag::ParameterStore<T> store_;
  std::array<nn::Linear<T>, kBackbones> shot_projection_;
  nn::Linear<T> fusion_scorer_;
  Var<T> shot_cls_;
  std::vector<nn::EncoderLayer<T>> shot_encoder_;
  nn::Linear<T> utterance_projection_;
  Var<T> type_embedding_;
  Var<T> time_embedding_;
  Var<T> group_embedding_;
  Var<T> group_token_;
  nn::LayerNorm<T> input_norm_;
  std::vector<nn::EncoderLayer<T>> episode_encoder_;
  nn::Linear<T> classifier_;
  Tensor<T> frame_positions_;
};

extern template class TaleSumm<float>;
extern template class TaleSumm<double>;

}  // namespace talesumm::model
