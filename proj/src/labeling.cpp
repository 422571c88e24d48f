#include "talesumm/labeling.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <set>

#include "talesumm/error.hpp"

namespace talesumm {

void LabelSet::validate(std::size_t shots, std::size_t dialogs) const {
  if (shot_scores.size() != shots) {
    throw invalid_input("label set has " + std::to_string(shot_scores.size()) +
                        " shot scores, episode has " + std::to_string(shots) + " shots");
  }
  if (dialog_scores.size() != dialogs) {
    throw invalid_input("label set has " + std::to_string(dialog_scores.size()) +
                        " dialog scores, episode has " + std::to_string(dialogs) + " utterances");
  }
  const auto check = [](const std::vector<double>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
        throw invalid_input(std::string(what) + " score " + std::to_string(i) +
                            " outside [0, 1]: " + std::to_string(v[i]));
      }
    }
  };
  check(shot_scores, "shot");
  check(dialog_scores, "dialog");
}

}  // namespace talesumm

namespace talesumm::labeling {

bool FrameBank::frame_valid(std::size_t shot, std::size_t frame) const {
  if (shot >= validity.size() || validity[shot].empty()) return true;
  return validity[shot][frame] != 0;
}

void MatchConfig::validate() const {
  if (!(sim_threshold > 0.0 && sim_threshold <= 1.0)) {
    throw invalid_input("similarity threshold must lie in (0, 1], got " +
                        std::to_string(sim_threshold));
  }
  if (top_k < 1) throw invalid_input("top_k must be >= 1");
  if (max_rounds < 1) throw invalid_input("max_rounds must be >= 1");
}

void SmoothConfig::validate() const {
  if (window < 1 || window % 2 == 0) {
    throw invalid_input("smoothing window must be a positive odd integer, got " +
                        std::to_string(window));
  }
}

namespace {

bool is_valid(const std::vector<std::uint8_t>& valid, std::size_t i) {
  return valid.empty() || valid[i] != 0;
}

/// Normalized copy of the valid rows; invalid rows are left as zeros.
Tensor<double> normalize_rows(const Tensor<double>& m, const std::vector<std::uint8_t>& valid,
                              const char* which) {
  if (!valid.empty() && valid.size() != m.rows()) {
    throw invalid_input(std::string(which) + ": validity length does not match frame count");
  }
  Tensor<double> out = Tensor<double>::matrix(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!is_valid(valid, r)) continue;
    const auto row = m.row(r);
    double norm = 0.0;
    for (const auto v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) {
      throw invalid_input(std::string(which) + " frame " + std::to_string(r) +
                          " has zero norm and cannot be compared");
    }
    auto dst = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) dst[c] = row[c] / norm;
  }
  return out;
}

struct EpisodeFrames {
  Tensor<double> unit;                 // all valid frames, normalized
  std::vector<std::size_t> owner;      // shot index per row
};

EpisodeFrames flatten_episode(const FrameBank& episode) {
  std::size_t dim = 0, total = 0;
  for (std::size_t s = 0; s < episode.size(); ++s) {
    const auto& frames = episode.shots[s];
    if (s == 0) dim = frames.cols();
    if (frames.cols() != dim) throw invalid_input("episode frame bank has mixed embedding widths");
    std::size_t valid = 0;
    for (std::size_t f = 0; f < frames.rows(); ++f) valid += episode.frame_valid(s, f);
    if (valid == 0) {
      throw invalid_input("episode shot " + std::to_string(s) + " has no valid frame to match");
    }
    total += valid;
  }
  EpisodeFrames out{Tensor<double>::matrix(total, dim), {}};
  out.owner.reserve(total);
  std::size_t row = 0;
  for (std::size_t s = 0; s < episode.size(); ++s) {
    const auto& frames = episode.shots[s];
    for (std::size_t f = 0; f < frames.rows(); ++f) {
      if (!episode.frame_valid(s, f)) continue;
      const auto src = frames.row(f);
      double norm = 0.0;
      for (const auto v : src) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) {
        throw invalid_input("episode shot " + std::to_string(s) + " frame " + std::to_string(f) +
                            " has zero norm and cannot be compared");
      }
      auto dst = out.unit.row(row);
      for (std::size_t c = 0; c < dim; ++c) dst[c] = src[c] / norm;
      out.owner.push_back(s);
      ++row;
    }
  }
  return out;
}

MatchResult match_against(const Tensor<float>& recap_frames,
                          const std::vector<std::uint8_t>& recap_valid,
                          const EpisodeFrames& episode, const MatchConfig& config) {
  const auto recap = normalize_rows(recap_frames.cast<double>(), recap_valid, "recap");
  if (recap.rows() > 0 && recap.cols() != episode.unit.cols()) {
    throw invalid_input("recap embedding width " + std::to_string(recap.cols()) +
                        " differs from episode width " + std::to_string(episode.unit.cols()));
  }
  bool any_valid = false;
  for (std::size_t r = 0; r < recap.rows(); ++r) any_valid |= is_valid(recap_valid, r);
  if (!any_valid) throw invalid_input("recap shot has no valid frame to match");

  MatchResult result;
  std::set<std::size_t> candidates;
  std::vector<std::pair<double, std::size_t>> passing;  // (similarity, episode row)
  const std::size_t dim = episode.unit.cols();
  for (std::size_t r = 0; r < recap.rows(); ++r) {
    if (!is_valid(recap_valid, r)) continue;
    const auto rv = recap.row(r);
    passing.clear();
    for (std::size_t e = 0; e < episode.unit.rows(); ++e) {
      const auto ev = episode.unit.row(e);
      double sim = 0.0;
      for (std::size_t c = 0; c < dim; ++c) sim += rv[c] * ev[c];
      if (sim >= config.sim_threshold) passing.emplace_back(sim, e);
    }
    if (passing.empty()) continue;
    for (const auto& [sim, e] : passing) candidates.insert(episode.owner[e]);
    const std::size_t keep = std::min(config.top_k, passing.size());
    std::partial_sort(passing.begin(), passing.begin() + static_cast<std::ptrdiff_t>(keep),
                      passing.end(), [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    std::map<std::size_t, double> best_per_shot;
    for (std::size_t n = 0; n < keep; ++n) {
      const auto shot = episode.owner[passing[n].second];
      auto [it, inserted] = best_per_shot.emplace(shot, passing[n].first);
      if (!inserted) it->second = std::max(it->second, passing[n].first);
    }
    for (const auto& [shot, sim] : best_per_shot) result.scores[shot] += sim;
  }
  result.candidates.assign(candidates.begin(), candidates.end());
  if (result.candidates.empty()) return result;

  // std::map iterates in ascending shot order, so strict > keeps the lowest
  // index among equal scores.
  double best_score = -1.0;
  for (const auto& [shot, score] : result.scores) {
    if (score > best_score) {
      best_score = score;
      result.best_shot = shot;
    }
  }

  std::vector<std::uint8_t> in_set(result.candidates.back() + 1, 0);
  in_set[*result.best_shot] = 1;
  std::vector<std::size_t> members{*result.best_shot};
  const auto radius = config.window_radius;
  while (true) {
    if (result.rounds >= config.max_rounds) {
      // Only flag when the closure has not converged yet.
      bool more = false;
      for (const auto s : result.candidates) {
        if (in_set[s]) continue;
        for (const auto m : members)
          if ((s > m ? s - m : m - s) <= radius) more = true;
      }
      result.max_rounds_reached = more;
      break;
    }
    std::vector<std::size_t> added;
    for (const auto s : result.candidates) {
      if (in_set[s]) continue;
      for (const auto m : members) {
        if ((s > m ? s - m : m - s) <= radius) {
          added.push_back(s);
          break;
        }
      }
    }
    ++result.rounds;
    if (added.empty()) break;
    for (const auto s : added) {
      in_set[s] = 1;
      members.push_back(s);
    }
  }
  std::sort(members.begin(), members.end());
  result.matched = std::move(members);
  return result;
}

}  // namespace

Tensor<double> cosine_similarity_matrix(const Tensor<double>& a, const Tensor<double>& b,
                                        const std::vector<std::uint8_t>& a_valid,
                                        const std::vector<std::uint8_t>& b_valid) {
  if (a.cols() != b.cols()) {
    throw invalid_input("cosine_similarity_matrix: widths differ (" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.cols()) + ")");
  }
  const auto ua = normalize_rows(a, a_valid, "left");
  const auto ub = normalize_rows(b, b_valid, "right");
  Tensor<double> out = Tensor<double>::matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      if (!is_valid(a_valid, i) || !is_valid(b_valid, j)) {
        out(i, j) = -2.0;
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) dot += ua(i, c) * ub(j, c);
      out(i, j) = std::clamp(dot, -1.0, 1.0);
    }
  }
  return out;
}

MatchResult match_recap_shot(const Tensor<float>& recap_frames,
                             const std::vector<std::uint8_t>& recap_valid,
                             const FrameBank& episode, const MatchConfig& config) {
  config.validate();
  return match_against(recap_frames, recap_valid, flatten_episode(episode), config);
}

std::vector<MatchResult> match_recap(const FrameBank& recap, const FrameBank& episode,
                                     const MatchConfig& config) {
  config.validate();
  const auto frames = flatten_episode(episode);
  std::vector<MatchResult> results;
  results.reserve(recap.size());
  static const std::vector<std::uint8_t> kAllValid;
  for (std::size_t s = 0; s < recap.size(); ++s) {
    const auto& valid = s < recap.validity.size() ? recap.validity[s] : kAllValid;
    results.push_back(match_against(recap.shots[s], valid, frames, config));
  }
  return results;
}

std::vector<std::uint8_t> binary_labels_from_matches(const std::vector<MatchResult>& results,
                                                     std::size_t shot_count) {
  std::vector<std::uint8_t> labels(shot_count, 0);
  for (const auto& r : results) {
    for (const auto s : r.matched) {
      if (s >= shot_count) {
        throw invalid_input("matched shot " + std::to_string(s) + " outside episode of " +
                            std::to_string(shot_count) + " shots");
      }
      labels[s] = 1;
    }
  }
  return labels;
}

std::vector<double> triangle_smooth(const std::vector<std::uint8_t>& binary,
                                    const SmoothConfig& config) {
  config.validate();
  const std::size_t n = binary.size();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>((config.window - 1) / 2);
  const double denom = static_cast<double>(half + 1);
  std::vector<double> out(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (binary[p] > 1) throw invalid_input("triangle_smooth: entries must be 0 or 1");
    if (!binary[p]) continue;
    const auto center = static_cast<std::ptrdiff_t>(p);
    for (std::ptrdiff_t d = -half; d <= half; ++d) {
      const std::ptrdiff_t i = center + d;
      if (i < 0 || i >= static_cast<std::ptrdiff_t>(n)) continue;
      out[static_cast<std::size_t>(i)] += 1.0 - static_cast<double>(std::abs(d)) / denom;
    }
  }
  for (auto& v : out) v = std::min(1.0, v);
  return out;
}

std::vector<double> inherit_dialog_labels(const std::vector<double>& shot_scores,
                                          const std::vector<Span>& shot_spans,
                                          const std::vector<Span>& utterance_spans) {
  if (shot_spans.empty()) throw invalid_input("inherit_dialog_labels: episode has no shots");
  if (shot_scores.size() != shot_spans.size()) {
    throw invalid_input("inherit_dialog_labels: score and span counts differ");
  }
  std::vector<double> out;
  out.reserve(utterance_spans.size());
  for (const auto& u : utterance_spans) {
    const double t = u.mid();
    // First shot whose start is > t; the shot before it is the only one
    // that can contain t.
    const auto it = std::upper_bound(shot_spans.begin(), shot_spans.end(), t,
                                     [](double v, const Span& s) { return v < s.start_s; });
    const std::size_t next = static_cast<std::size_t>(it - shot_spans.begin());
    if (next > 0 && t < shot_spans[next - 1].end_s) {
      out.push_back(shot_scores[next - 1]);
      continue;
    }
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < shot_spans.size(); ++i) {
      const auto& s = shot_spans[i];
      const double dist = t < s.start_s ? s.start_s - t : std::max(0.0, t - s.end_s);
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    out.push_back(shot_scores[best]);
  }
  return out;
}

LabelSet labels_from_recap(const FrameBank& episode, const std::vector<Span>& shot_spans,
                           const std::vector<Span>& utterance_spans, const FrameBank& recap,
                           const MatchConfig& match_config, const SmoothConfig& smooth_config,
                           std::vector<MatchResult>* matches) {
  if (shot_spans.size() != episode.size()) {
    throw invalid_input("labels_from_recap: span count differs from episode shot count");
  }
  auto results = match_recap(recap, episode, match_config);
  const auto binary = binary_labels_from_matches(results, episode.size());
  LabelSet labels;
  labels.shot_scores = triangle_smooth(binary, smooth_config);
  labels.dialog_scores = inherit_dialog_labels(labels.shot_scores, shot_spans, utterance_spans);
  labels.provenance = "recap";
  if (matches) *matches = std::move(results);
  return labels;
}

}  // namespace talesumm::labeling
