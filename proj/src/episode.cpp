#include "talesumm/episode.hpp"

#include <algorithm>

#include "talesumm/error.hpp"

namespace talesumm {

std::vector<Span> EpisodeFeatures::shot_spans() const {
  std::vector<Span> spans;
  spans.reserve(shots.size());
  for (const auto& s : shots) spans.push_back(s.span);
  return spans;
}

std::vector<Span> EpisodeFeatures::utterance_spans() const {
  std::vector<Span> spans;
  spans.reserve(utterances.size());
  for (const auto& u : utterances) spans.push_back(u.span);
  return spans;
}

labeling::FrameBank EpisodeFeatures::frame_bank(std::size_t backbone) const {
  if (backbone >= kBackbones) throw invalid_input("backbone index out of range");
  labeling::FrameBank bank;
  bank.shots.reserve(shots.size());
  for (const auto& s : shots) {
    bank.shots.push_back(s.frames[backbone]);
    bank.validity.push_back(s.validity);
  }
  return bank;
}

namespace {

template <typename Item>
void check_spans(const std::vector<Item>& items, const char* what, bool positive_length) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& span = items[i].span;
    if (!(span.start_s >= 0.0) || !(span.end_s >= span.start_s) ||
        (positive_length && !(span.end_s > span.start_s))) {
      throw invalid_input(std::string(what) + " " + items[i].id + " has an invalid span [" +
                          std::to_string(span.start_s) + ", " + std::to_string(span.end_s) + ")");
    }
    if (i > 0 && items[i - 1].span.end_s > span.start_s) {
      throw invalid_input(std::string(what) + " spans out of order or overlapping: " +
                          items[i - 1].id + " ends at " + std::to_string(items[i - 1].span.end_s) +
                          " after " + items[i].id + " starts at " + std::to_string(span.start_s));
    }
  }
}

}  // namespace

void EpisodeFeatures::validate(bool check_features) const {
  if (shots.empty()) throw invalid_input("episode " + episode_id + " has no shots");
  check_spans(shots, "shot", true);
  check_spans(utterances, "utterance", false);
  double last_end = 0.0;
  for (const auto& s : shots) {
    last_end = std::max(last_end, s.span.end_s);
    if (!check_features) continue;
    const std::size_t frames_count = s.frames[0].rows();
    if (frames_count == 0) throw invalid_input("shot " + s.id + " has no frames");
    for (std::size_t k = 0; k < kBackbones; ++k) {
      const auto& f = s.frames[k];
      if (f.rank() != 2 || f.cols() != shot_dims[k]) {
        throw invalid_input("shot " + s.id + " backbone " + std::to_string(k) + " has dims " +
                            dims_to_string(f.dims()) + ", expected width " +
                            std::to_string(shot_dims[k]));
      }
      if (f.rows() != frames_count) {
        throw invalid_input("shot " + s.id + " backbones disagree on frame count");
      }
    }
    if (!s.validity.empty() && s.validity.size() != frames_count) {
      throw invalid_input("shot " + s.id + " validity mask length " +
                          std::to_string(s.validity.size()) + " != frame count " +
                          std::to_string(frames_count));
    }
  }
  for (const auto& u : utterances) {
    last_end = std::max(last_end, u.span.end_s);
    if (!check_features) continue;
    if (u.tokens.rank() != 2 || u.tokens.rows() == 0 || u.tokens.cols() != utterance_dim) {
      throw invalid_input("utterance " + u.id + " has token dims " + dims_to_string(u.tokens.dims()) +
                          ", expected [T x " + std::to_string(utterance_dim) + "] with T >= 1");
    }
  }
  if (duration_s < last_end) {
    throw invalid_input("episode " + episode_id + " duration " + std::to_string(duration_s) +
                        " s is shorter than its last span end " + std::to_string(last_end) + " s");
  }
}

}  // namespace talesumm
