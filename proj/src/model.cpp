#include "talesumm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "talesumm/error.hpp"

namespace talesumm::model {

void TaleSummConfig::validate() const {
  const auto fail = [](const std::string& what) { throw config_error("model config: " + what); };
  if (d_model < 2 || d_model % 2 != 0) fail("d_model must be even and >= 2");
  if (heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (shot_layers == 0) fail("shot_layers must be >= 1");
  if (episode_layers == 0) fail("episode_layers must be >= 1");
  if (group_size < 2) fail("group_size must be >= 2");
  if (!(time_bin_s > 0.0)) fail("time_bin_s must be positive");
  if (frame_cap == 0) fail("frame_cap must be >= 1");
  for (const double rate : {dropout.projection, dropout.attention, dropout.head}) {
    if (!(rate >= 0.0 && rate < 1.0)) fail("dropout rates must lie in [0, 1)");
  }
  for (const auto d : shot_dims)
    if (d == 0) fail("shot backbone dims must be positive");
  if (utterance_dim == 0) fail("utterance_dim must be positive");
  if (max_groups == 0) fail("max_groups must be >= 1");
  if (!(max_duration_s > 0.0)) fail("max_duration_s must be positive");
  if (ff_multiplier == 0) fail("ff_multiplier must be >= 1");
}

std::size_t TaleSummConfig::time_bins() const {
  return static_cast<std::size_t>(std::ceil(max_duration_s / time_bin_s));
}

std::vector<std::size_t> sample_frames(std::size_t frame_count, bool train, std::size_t cap,
                                       Rng& rng) {
  if (frame_count == 0) throw invalid_input("sample_frames: shot has no frames");
  if (cap == 0) throw invalid_input("sample_frames: cap must be >= 1");
  std::vector<std::size_t> idx;
  if (frame_count <= cap) {
    idx.resize(frame_count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  if (!train) {
    idx.reserve(cap);
    if (cap == 1) return {0};
    for (std::size_t j = 0; j < cap; ++j) {
      const double pos = static_cast<double>(j) * static_cast<double>(frame_count - 1) /
                         static_cast<double>(cap - 1);
      idx.push_back(static_cast<std::size_t>(std::llround(pos)));
    }
    return idx;
  }
  std::vector<std::size_t> pool(frame_count);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < cap; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(frame_count) - 1));
    std::swap(pool[i], pool[j]);
  }
  idx.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

GroupPartition build_group_partition(const std::vector<Span>& shot_spans,
                                     const std::vector<Span>& utterance_spans,
                                     std::size_t group_size) {
  if (group_size < 2) throw invalid_input("build_group_partition: group size must be >= 2");
  std::vector<Token> content;
  content.reserve(shot_spans.size() + utterance_spans.size());
  for (std::size_t i = 0; i < shot_spans.size(); ++i)
    content.push_back({TokenKind::kShot, i, shot_spans[i].mid(), 0});
  for (std::size_t l = 0; l < utterance_spans.size(); ++l)
    content.push_back({TokenKind::kDialog, l, utterance_spans[l].mid(), 0});
  if (content.empty()) throw invalid_input("build_group_partition: no shot or dialog tokens");
  std::stable_sort(content.begin(), content.end(), [](const Token& a, const Token& b) {
    if (a.mid_s != b.mid_s) return a.mid_s < b.mid_s;
    if (a.kind != b.kind) return a.kind == TokenKind::kShot;
    return a.source < b.source;
  });

  GroupPartition partition;
  const std::size_t groups = (content.size() + group_size - 1) / group_size;
  partition.tokens.reserve(content.size() + groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t begin = g * group_size;
    const std::size_t end = std::min(content.size(), begin + group_size);
    double last_mid = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      Token tok = content[t];
      tok.group = g;
      last_mid = tok.mid_s;
      partition.tokens.push_back(tok);
      partition.group_indicator.push_back(0);
    }
    partition.tokens.push_back({TokenKind::kGroup, g, last_mid, g});
    partition.group_indicator.push_back(1);
    partition.block_sizes.push_back(end - begin);
  }
  return partition;
}

AttentionMask build_attention_mask(const GroupPartition& partition, bool group_channel,
                                   std::size_t padding) {
  const std::size_t total = partition.tokens.size();
  std::vector<std::uint32_t> group_positions;
  for (std::size_t i = 0; i < total; ++i)
    if (partition.group_indicator[i]) group_positions.push_back(static_cast<std::uint32_t>(i));

  std::vector<std::vector<std::uint32_t>> rows(total + padding);
  std::size_t start = 0;
  for (const auto n : partition.block_sizes) {
    const std::size_t block = n + 1;
    std::vector<std::uint32_t> cols(block);
    std::iota(cols.begin(), cols.end(), static_cast<std::uint32_t>(start));
    for (std::size_t i = start; i < start + block; ++i) {
      rows[i] = cols;
      if (group_channel && partition.group_indicator[i]) {
        rows[i].insert(rows[i].end(), group_positions.begin(), group_positions.end());
      }
    }
    start += block;
  }
  for (std::size_t p = 0; p < padding; ++p)
    rows[total + p] = {static_cast<std::uint32_t>(total + p)};
  return AttentionMask(std::move(rows));
}

double positive_weight(const std::vector<double>& labels, double threshold) {
  std::size_t pos = 0;
  for (const auto y : labels) pos += y >= threshold;
  const std::size_t neg = labels.size() - pos;
  return static_cast<double>(neg) / static_cast<double>(std::max<std::size_t>(1, pos));
}

template <typename T>
Var<T> compute_loss(const ForwardOutput<T>& output, const LabelSet& labels) {
  const std::size_t n = output.shot_probs ? output.shot_probs->value.size() : 0;
  const std::size_t m = output.dialog_probs ? output.dialog_probs->value.size() : 0;
  labels.validate(n, m);
  const auto to_tensor = [](const std::vector<double>& v) {
    return Tensor<T>(Dims{v.size()}, std::vector<T>(v.begin(), v.end()));
  };
  const double theta = labels.binarize_threshold;
  auto loss = ag::weighted_bce(output.shot_probs, to_tensor(labels.shot_scores),
                               static_cast<T>(positive_weight(labels.shot_scores, theta)));
  if (m > 0) {
    loss = ag::add(loss, ag::weighted_bce(output.dialog_probs, to_tensor(labels.dialog_scores),
                                          static_cast<T>(positive_weight(labels.dialog_scores, theta))));
  }
  return loss;
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(Dims dims, double bound, Rng& rng) {
  Tensor<T> t(std::move(dims));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

template <typename T>
TaleSumm<T>::TaleSumm(const TaleSummConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t D = config_.d_model;
  const double embed_bound = 1.0 / std::sqrt(static_cast<double>(D));
  for (std::size_t k = 0; k < kBackbones; ++k) {
    shot_projection_[k] = nn::make_linear(store_, "shot_projection." + std::to_string(k),
                                          config_.shot_dims[k], D, rng);
  }
  fusion_scorer_ = nn::make_linear(store_, "fusion_scorer", kBackbones * D, kBackbones, rng);
  shot_cls_ = store_.add("shot_cls", uniform_tensor<T>({1, D}, embed_bound, rng));
  for (std::size_t l = 0; l < config_.shot_layers; ++l) {
    shot_encoder_.push_back(nn::make_encoder_layer(store_, "shot_encoder." + std::to_string(l), D,
                                                   config_.ff_multiplier * D, rng));
  }
  utterance_projection_ =
      nn::make_linear(store_, "utterance_projection", config_.utterance_dim, D, rng);
  type_embedding_ = store_.add("type_embedding", uniform_tensor<T>({2, D}, embed_bound, rng));
  time_embedding_ = store_.add("time_embedding",
                               nn::sinusoidal_encoding<T>(config_.time_bins(), D), false);
  group_embedding_ = store_.add("group_embedding",
                                uniform_tensor<T>({config_.max_groups, D}, embed_bound, rng));
  group_token_ = store_.add("group_token", uniform_tensor<T>({1, D}, embed_bound, rng));
  input_norm_ = nn::make_layer_norm(store_, "input_norm", D);
  for (std::size_t l = 0; l < config_.episode_layers; ++l) {
    episode_encoder_.push_back(nn::make_encoder_layer(
        store_, "episode_encoder." + std::to_string(l), D, config_.ff_multiplier * D, rng));
  }
  classifier_ = nn::make_linear(store_, "classifier", D, 1, rng);
  frame_positions_ = nn::sinusoidal_encoding<T>(config_.frame_cap, D);
}

template <typename T>
typename TaleSumm<T>::Fusion TaleSumm<T>::fuse_frame_features(
    const std::array<Var<T>, kBackbones>& frames, bool train, Rng& rng) const {
  std::vector<Var<T>> projected;
  for (std::size_t k = 0; k < kBackbones; ++k) {
    if (frames[k]->value.cols() != config_.shot_dims[k]) {
      throw invalid_input("fuse_frame_features: backbone " + std::to_string(k) + " width " +
                          std::to_string(frames[k]->value.cols()) + " != configured " +
                          std::to_string(config_.shot_dims[k]));
    }
    projected.push_back(
        ag::dropout(shot_projection_[k](frames[k]), config_.dropout.projection, train, rng));
  }
  auto concatenated = ag::concat_cols(projected);
  auto weights = ag::softmax_rows(ag::tanh(fusion_scorer_(concatenated)));
  return {ag::weighted_block_sum(concatenated, weights), weights};
}

template <typename T>
Var<T> TaleSumm<T>::encode_shots(const std::array<Tensor<T>, kBackbones>& stacked_frames,
                                 const std::vector<std::size_t>& offsets, bool train,
                                 Rng& rng) const {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != stacked_frames[0].rows()) {
    throw invalid_input("encode_shots: offsets do not cover the stacked frames");
  }
  const std::size_t shots = offsets.size() - 1;
  const std::size_t D = config_.d_model;
  std::array<Var<T>, kBackbones> inputs;
  for (std::size_t k = 0; k < kBackbones; ++k) inputs[k] = ag::constant(stacked_frames[k]);
  auto fused = fuse_frame_features(inputs, train, rng).fused;

  Tensor<T> positions = Tensor<T>::matrix(fused->value.rows(), D);
  std::vector<ag::RowRef> picks;
  std::vector<std::size_t> block_sizes;
  std::vector<ag::RowRef> cls_rows;
  for (std::size_t s = 0; s < shots; ++s) {
    const std::size_t count = offsets[s + 1] - offsets[s];
    if (count == 0) throw invalid_input("encode_shots: shot " + std::to_string(s) + " has no frames");
    if (count > config_.frame_cap) {
      throw invalid_input("encode_shots: shot " + std::to_string(s) + " has " +
                          std::to_string(count) + " frames, cap is " +
                          std::to_string(config_.frame_cap));
    }
    cls_rows.push_back({0, picks.size()});
    picks.push_back({0, 0});
    for (std::size_t j = 0; j < count; ++j) {
      const auto src = frame_positions_.row(j);
      std::copy(src.begin(), src.end(), positions.row(offsets[s] + j).begin());
      picks.push_back({1, offsets[s] + j});
    }
    block_sizes.push_back(count + 1);
  }
  auto frames = ag::add(fused, ag::constant(std::move(positions)));
  auto sequence = ag::gather_rows<T>({shot_cls_, frames}, picks, D);
  const auto mask = AttentionMask::block_diagonal(block_sizes);
  for (const auto& layer : shot_encoder_) {
    sequence = nn::encoder_layer(sequence, mask, layer, config_.heads, train,
                                 config_.dropout.attention, rng);
  }
  return ag::gather_rows<T>({sequence}, cls_rows, D);
}

template <typename T>
Var<T> TaleSumm<T>::encode_utterances(const Tensor<T>& stacked_tokens,
                                      const std::vector<std::size_t>& offsets, bool train,
                                      Rng& rng) const {
  if (stacked_tokens.cols() != config_.utterance_dim) {
    throw invalid_input("encode_utterances: token width " + std::to_string(stacked_tokens.cols()) +
                        " != configured " + std::to_string(config_.utterance_dim));
  }
  auto projected = ag::dropout(utterance_projection_(ag::constant(stacked_tokens)),
                               config_.dropout.projection, train, rng);
  return ag::segment_mean(projected, offsets);
}

template <typename T>
Var<T> TaleSumm<T>::assemble_tokens(const Var<T>& shots, const Var<T>& utterances,
                                    const GroupPartition& partition, std::size_t pad_to) const {
  const std::size_t D = config_.d_model;
  const std::size_t length = partition.tokens.size();
  if (partition.group_count() > config_.max_groups) {
    throw invalid_input("episode needs " + std::to_string(partition.group_count()) +
                        " story groups, model supports at most " +
                        std::to_string(config_.max_groups));
  }
  if (pad_to != 0 && pad_to < length) {
    throw invalid_input("assemble_tokens: pad_to shorter than the token sequence");
  }
  const std::size_t total = std::max(pad_to, length);
  const std::size_t bins = config_.time_bins();

  std::vector<Var<T>> content{shots, group_token_};
  const int shot_src = 0, group_src = 1;
  int utt_src = -1;
  if (utterances) {
    utt_src = static_cast<int>(content.size());
    content.push_back(utterances);
  }
  std::vector<ag::RowRef> content_rows(total, {-1, 0}), type_rows(total, {-1, 0}),
      time_rows(total, {-1, 0}), group_rows(total, {-1, 0});
  for (std::size_t p = 0; p < length; ++p) {
    const auto& tok = partition.tokens[p];
    group_rows[p] = {0, tok.group};
    if (tok.kind == TokenKind::kGroup) {
      content_rows[p] = {group_src, 0};
      continue;
    }
    const bool is_shot = tok.kind == TokenKind::kShot;
    if (!is_shot && utt_src < 0) throw invalid_input("assemble_tokens: dialog token without utterances");
    content_rows[p] = {is_shot ? shot_src : utt_src, tok.source};
    type_rows[p] = {0, is_shot ? std::size_t{0} : std::size_t{1}};
    const double bin = std::floor(tok.mid_s / config_.time_bin_s);
    if (!(bin >= 0.0) || bin >= static_cast<double>(bins)) {
      throw invalid_input(std::string(is_shot ? "shot " : "utterance ") +
                          std::to_string(tok.source) + " mid-time " + std::to_string(tok.mid_s) +
                          " s falls outside the " + std::to_string(bins) + "-bin time table");
    }
    time_rows[p] = {0, static_cast<std::size_t>(bin)};
  }
  auto x = ag::gather_rows<T>(content, content_rows, D);
  x = ag::add(x, ag::gather_rows<T>({type_embedding_}, type_rows, D));
  x = ag::add(x, ag::gather_rows<T>({time_embedding_}, time_rows, D));
  x = ag::add(x, ag::gather_rows<T>({group_embedding_}, group_rows, D));
  return input_norm_(x);
}

template <typename T>
void TaleSumm<T>::check_compatible(const EpisodeFeatures& episode) const {
  for (std::size_t k = 0; k < kBackbones; ++k) {
    if (episode.shot_dims[k] != config_.shot_dims[k]) {
      throw config_error("episode " + episode.episode_id + " backbone " + std::to_string(k) +
                         " width " + std::to_string(episode.shot_dims[k]) +
                         " does not match model width " + std::to_string(config_.shot_dims[k]));
    }
  }
  if (!episode.utterances.empty() && episode.utterance_dim != config_.utterance_dim) {
    throw config_error("episode " + episode.episode_id + " utterance width " +
                       std::to_string(episode.utterance_dim) + " does not match model width " +
                       std::to_string(config_.utterance_dim));
  }
}

template <typename T>
ForwardOutput<T> TaleSumm<T>::forward(const EpisodeFeatures& episode,
                                      const ForwardOptions& options) const {
  episode.validate();
  check_compatible(episode);
  const bool train = options.train;
  Rng sampler(derive_seed(options.seed, 1));
  Rng rng(derive_seed(options.seed, 2));
  const std::size_t D = config_.d_model;

  // Level 1: shots.
  std::vector<std::vector<std::size_t>> sampled;
  std::vector<std::size_t> shot_offsets{0};
  for (const auto& shot : episode.shots) {
    sampled.push_back(sample_frames(shot.frame_count(), train, config_.frame_cap, sampler));
    shot_offsets.push_back(shot_offsets.back() + sampled.back().size());
  }
  std::array<Tensor<T>, kBackbones> stacked;
  for (std::size_t k = 0; k < kBackbones; ++k) {
    stacked[k] = Tensor<T>::matrix(shot_offsets.back(), config_.shot_dims[k]);
    for (std::size_t s = 0; s < episode.shots.size(); ++s) {
      const auto& frames = episode.shots[s].frames[k];
      for (std::size_t j = 0; j < sampled[s].size(); ++j) {
        const auto src = frames.row(sampled[s][j]);
        auto dst = stacked[k].row(shot_offsets[s] + j);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
  }
  const auto shots = encode_shots(stacked, shot_offsets, train, rng);

  // Level 1: utterances.
  Var<T> utterances;
  if (!episode.utterances.empty()) {
    std::vector<std::size_t> offsets{0};
    for (const auto& u : episode.utterances) offsets.push_back(offsets.back() + u.tokens.rows());
    Tensor<T> tokens = Tensor<T>::matrix(offsets.back(), config_.utterance_dim);
    for (std::size_t l = 0; l < episode.utterances.size(); ++l) {
      const auto& src = episode.utterances[l].tokens;
      std::copy(src.data().begin(), src.data().end(),
                tokens.data().begin() + static_cast<std::ptrdiff_t>(offsets[l] * config_.utterance_dim));
    }
    utterances = encode_utterances(tokens, offsets, train, rng);
  }

  // Level 2: grouped episode sequence.
  const auto partition =
      build_group_partition(episode.shot_spans(), episode.utterance_spans(), config_.group_size);
  const std::size_t length = partition.tokens.size();
  auto sequence = assemble_tokens(shots, utterances, partition, options.pad_to);
  const std::size_t padding = sequence->value.rows() - length;
  const auto mask = build_attention_mask(partition, options.group_channel, padding);
  for (const auto& layer : episode_encoder_) {
    sequence = nn::encoder_layer(sequence, mask, layer, config_.heads, train,
                                 config_.dropout.attention, rng);
  }

  std::vector<ag::RowRef> shot_rows(episode.shots.size()), dialog_rows(episode.utterances.size());
  for (std::size_t p = 0; p < length; ++p) {
    const auto& tok = partition.tokens[p];
    if (tok.kind == TokenKind::kShot) shot_rows[tok.source] = {0, p};
    if (tok.kind == TokenKind::kDialog) dialog_rows[tok.source] = {0, p};
  }
  const auto score = [&](const std::vector<ag::RowRef>& rows) {
    auto picked = ag::gather_rows<T>({sequence}, rows, D);
    picked = ag::dropout(picked, config_.dropout.head, train, rng);
    return ag::sigmoid(classifier_(picked));
  };
  ForwardOutput<T> out;
  out.shot_probs = score(shot_rows);
  if (!dialog_rows.empty()) out.dialog_probs = score(dialog_rows);
  return out;
}

template <typename T>
EpisodeScores TaleSumm<T>::predict(const EpisodeFeatures& episode) const {
  const auto out = forward(episode, ForwardOptions{});
  EpisodeScores scores;
  scores.shots.assign(out.shot_probs->value.data().begin(), out.shot_probs->value.data().end());
  if (out.dialog_probs) {
    scores.dialogs.assign(out.dialog_probs->value.data().begin(),
                          out.dialog_probs->value.data().end());
  }
  return scores;
}

template class TaleSumm<float>;
template class TaleSumm<double>;
template Var<float> compute_loss<float>(const ForwardOutput<float>&, const LabelSet&);
template Var<double> compute_loss<double>(const ForwardOutput<double>&, const LabelSet&);

}  // namespace talesumm::model
