#pragma once

// Helpers shared by the test binaries: finite-difference gradient checks,
// small random episodes and scratch directories.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "talesumm/autograd.hpp"
#include "talesumm/episode.hpp"
#include "talesumm/rng.hpp"

namespace talesumm::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // name or index of the worst tensor
};

/// Worst per-tensor relative error max|a - n| / max(max|a|, max|n|) between
/// analytic and central-difference gradients of a scalar `loss_fn()` with
/// respect to every node in `nodes`. Tensors whose gradients are both
/// below 1e-10 everywhere count as exact.
template <typename LossFn>
GradCheck check_gradients(const std::vector<ag::Var<double>>& nodes,
                          const std::vector<std::string>& names, LossFn loss_fn, double h = 1e-5) {
  for (const auto& n : nodes) n->ensure_grad().fill(0.0);
  ag::backward(loss_fn());
  GradCheck result;
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    auto& value = nodes[t]->value;
    const Tensor<double> analytic = nodes[t]->ensure_grad();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = loss_fn()->value[0];
      value[i] = orig - h;
      const double down = loss_fn()->value[0];
      value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
    const double rel = scale < 1e-10 ? 0.0 : diff / scale;
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = names.empty() ? std::to_string(t) : names[t];
    }
  }
  return result;
}

/// Same check over every trainable parameter of a store.
template <typename LossFn>
GradCheck check_parameter_gradients(ag::ParameterStore<double>& store, LossFn loss_fn, double h = 1e-5) {
  std::vector<ag::Var<double>> nodes;
  std::vector<std::string> names;
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    nodes.push_back(p.node);
    names.push_back(p.name);
  }
  return check_gradients(nodes, names, loss_fn, h);
}

template <typename T = double>
Tensor<T> random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
  return t;
}

struct EpisodeShape {
  std::size_t shots = 4;
  std::size_t utterances = 3;
  std::array<std::size_t, kBackbones> dims{5, 4, 3};
  std::size_t utterance_dim = 6;
  std::size_t min_frames = 1;
  std::size_t max_frames = 4;
  double shot_length_s = 2.0;
};

/// Contiguous shots of equal length; utterance l sits inside the
/// (l * N / M)-th shot.
inline EpisodeFeatures random_episode(Rng& rng, const EpisodeShape& shape, const std::string& id = "ep") {
  EpisodeFeatures ep;
  ep.episode_id = id;
  ep.shot_dims = shape.dims;
  ep.utterance_dim = shape.utterance_dim;
  for (std::size_t i = 0; i < shape.shots; ++i) {
    ShotFeatures s;
    s.id = "s" + std::to_string(i);
    s.span = Span{shape.shot_length_s * i, shape.shot_length_s * (i + 1)};
    const auto frames = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(shape.min_frames), static_cast<std::int64_t>(shape.max_frames)));
    for (std::size_t k = 0; k < kBackbones; ++k) s.frames[k] = random_matrix<float>(rng, frames, shape.dims[k]);
    ep.shots.push_back(std::move(s));
  }
  for (std::size_t l = 0; l < shape.utterances; ++l) {
    UtteranceFeatures u;
    u.id = "u" + std::to_string(l);
    const std::size_t host = l * shape.shots / std::max<std::size_t>(shape.utterances, 1);
    const double start = shape.shot_length_s * host + 0.25 * shape.shot_length_s;
    u.span = Span{start, start + 0.4 * shape.shot_length_s};
    const auto tokens = static_cast<std::size_t>(rng.uniform_int(1, 4));
    u.tokens = random_matrix<float>(rng, tokens, shape.utterance_dim);
    ep.utterances.push_back(std::move(u));
  }
  ep.duration_s = shape.shot_length_s * shape.shots + 1.0;
  return ep;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() /
            ("talesumm_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007u));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace talesumm::testing
