#include "talesumm/synth.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "talesumm/error.hpp"
#include "talesumm/manifest.hpp"
#include "talesumm/rng.hpp"

namespace talesumm::io {
namespace {

// Importance directions are fixed across seeds so that models trained on
// one synthetic draw transfer to another.
constexpr std::uint64_t kDirectionSeed = 0x7a1e5u;

using Vec = std::vector<double>;

Vec gaussian(Rng& rng, std::size_t dim) {
  Vec v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

Vec unit_direction(std::uint64_t stream, std::size_t dim) {
  Rng rng(derive_seed(kDirectionSeed, stream));
  Vec v = gaussian(rng, dim);
  double norm = 0.0;
  for (const auto x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

/// Millisecond grid keeps manifests readable.
double ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

std::string item_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
  return buf;
}

/// One latent per backbone.
using Latent = std::array<Vec, kBackbones>;

Latent draw_latent(Rng& rng, const SynthConfig& cfg, bool important,
                   const std::array<Vec, kBackbones>& directions) {
  Latent l;
  for (std::size_t k = 0; k < kBackbones; ++k) {
    l[k] = gaussian(rng, cfg.shot_dims[k]);
    if (important) {
      const double scale = cfg.signal_strength * std::sqrt(static_cast<double>(cfg.shot_dims[k]));
      for (std::size_t d = 0; d < l[k].size(); ++d) l[k][d] += scale * directions[k][d];
    }
  }
  return l;
}

std::array<Tensor<float>, kBackbones> draw_frames(Rng& rng, const Latent& latent, std::size_t count,
                                                 double jitter) {
  std::array<Tensor<float>, kBackbones> frames;
  for (std::size_t k = 0; k < kBackbones; ++k) {
    frames[k] = Tensor<float>::matrix(count, latent[k].size());
    for (std::size_t f = 0; f < count; ++f) {
      for (std::size_t d = 0; d < latent[k].size(); ++d) {
        frames[k](f, d) = static_cast<float>(latent[k][d] + jitter * rng.normal());
      }
    }
  }
  return frames;
}

std::size_t draw_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

SynthEpisode generate_one(const SynthConfig& cfg, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, index));
  std::array<Vec, kBackbones> directions;
  for (std::size_t k = 0; k < kBackbones; ++k) directions[k] = unit_direction(k, cfg.shot_dims[k]);
  const Vec utterance_direction = unit_direction(kBackbones, cfg.utterance_dim);

  SynthEpisode out;
  auto& ep = out.episode;
  char name[32];
  std::snprintf(name, sizeof name, "ep%03zu", index);
  ep.episode_id = name;
  ep.shot_dims = cfg.shot_dims;
  ep.utterance_dim = cfg.utterance_dim;

  // Planted segments: one per equal slot, uniformly placed inside it.
  const std::size_t N = cfg.shots;
  const std::size_t slot = N / cfg.planted_segments;
  std::vector<int> segment_of(N, -1);
  for (std::size_t s = 0; s < cfg.planted_segments; ++s) {
    const std::size_t start = s * slot + draw_count(rng, 0, slot - cfg.planted_width);
    out.segments.emplace_back();
    for (std::size_t j = start; j < start + cfg.planted_width; ++j) {
      segment_of[j] = static_cast<int>(s);
      out.segments.back().push_back(j);
    }
  }

  // Latent per shot: threads cycling within background scenes and within
  // each planted segment.
  std::vector<Latent> latents(N);
  std::size_t j = 0;
  while (j < N) {
    const int segment = segment_of[j];
    if (segment >= 0) {
      std::vector<Latent> thread;
      for (std::size_t t = 0; t < cfg.thread_period; ++t) thread.push_back(draw_latent(rng, cfg, true, directions));
      for (std::size_t t = 0; j < N && segment_of[j] == segment; ++t, ++j) {
        latents[j] = thread[t % cfg.thread_period];
      }
      continue;
    }
    const std::size_t scene = draw_count(rng, cfg.min_scene, cfg.max_scene);
    std::vector<Latent> thread;
    for (std::size_t t = 0; t < cfg.thread_period; ++t) thread.push_back(draw_latent(rng, cfg, false, directions));
    for (std::size_t t = 0; t < scene && j < N && segment_of[j] < 0; ++t, ++j) {
      latents[j] = thread[t % cfg.thread_period];
    }
  }

  double clock = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    ShotFeatures s;
    s.id = item_id('s', i);
    const double start = ms(clock);
    clock = start + ms(rng.uniform(cfg.min_shot_s, cfg.max_shot_s));
    s.span = Span{start, ms(clock)};
    const std::size_t count = draw_count(rng, cfg.min_frames, cfg.max_frames);
    s.frames = draw_frames(rng, latents[i], count, cfg.frame_jitter);
    if (cfg.invalid_frame_rate > 0.0) {
      s.validity.assign(count, 1);
      bool any_valid = false;
      for (auto& v : s.validity) {
        v = rng.uniform() >= cfg.invalid_frame_rate;
        any_valid = any_valid || v;
      }
      if (!any_valid) s.validity[0] = 1;
    }
    ep.shots.push_back(std::move(s));
  }
  const double shots_end = clock;
  ep.duration_s = ms(shots_end + 1.0);

  // Utterances: one per equal time slot, partially filling it.
  std::vector<double> planted_scores(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) planted_scores[i] = segment_of[i] >= 0 ? 1.0 : 0.0;
  const double width = shots_end / static_cast<double>(std::max<std::size_t>(cfg.utterances, 1));
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    UtteranceFeatures utt;
    utt.id = item_id('u', u);
    const double start = ms(u * width + rng.uniform(0.0, 0.3) * width);
    const double end = ms(start + rng.uniform(0.3, 0.6) * width);
    utt.span = Span{start, std::max(end, start)};
    ep.utterances.push_back(std::move(utt));
  }
  out.planted.shot_scores = planted_scores;
  out.planted.dialog_scores =
      labeling::inherit_dialog_labels(planted_scores, ep.shot_spans(), ep.utterance_spans());
  out.planted.provenance = "planted";
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    const bool important = out.planted.dialog_scores[u] >= 0.5;
    Vec latent = gaussian(rng, cfg.utterance_dim);
    if (important) {
      const double scale = cfg.signal_strength * std::sqrt(static_cast<double>(cfg.utterance_dim));
      for (std::size_t d = 0; d < latent.size(); ++d) latent[d] += scale * utterance_direction[d];
    }
    const std::size_t count = draw_count(rng, cfg.min_tokens, cfg.max_tokens);
    auto& tokens = ep.utterances[u].tokens;
    tokens = Tensor<float>::matrix(count, cfg.utterance_dim);
    for (std::size_t t = 0; t < count; ++t) {
      for (std::size_t d = 0; d < cfg.utterance_dim; ++d) {
        tokens(t, d) = static_cast<float>(latent[d] + cfg.frame_jitter * rng.normal());
      }
    }
  }

  // Recap: trimmed noisy copies of every planted shot, then distractors.
  auto& recap = out.recap;
  recap.episode_id = ep.episode_id + "_recap";
  recap.shot_dims = cfg.shot_dims;
  recap.utterance_dim = cfg.utterance_dim;
  double recap_clock = 0.0;
  const auto add_recap_shot = [&](std::array<Tensor<float>, kBackbones> frames, double seconds) {
    ShotFeatures r;
    r.id = item_id('r', recap.shots.size());
    const double start = ms(recap_clock);
    recap_clock = start + std::max(0.001, ms(seconds));
    r.span = Span{start, ms(recap_clock)};
    r.frames = std::move(frames);
    recap.shots.push_back(std::move(r));
  };
  for (const auto& segment : out.segments) {
    for (const auto member : segment) {
      const auto& src = ep.shots[member];
      const std::size_t total = src.frame_count();
      const std::size_t keep = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::ceil(cfg.recap_trim_fraction * static_cast<double>(total))), 1, total);
      const std::size_t offset = draw_count(rng, 0, total - keep);
      std::array<Tensor<float>, kBackbones> frames;
      for (std::size_t k = 0; k < kBackbones; ++k) {
        frames[k] = Tensor<float>::matrix(keep, cfg.shot_dims[k]);
        for (std::size_t f = 0; f < keep; ++f) {
          for (std::size_t d = 0; d < cfg.shot_dims[k]; ++d) {
            const float noise = cfg.noise_sigma > 0.0 ? static_cast<float>(cfg.noise_sigma * rng.normal()) : 0.0f;
            frames[k](f, d) = src.frames[k](offset + f, d) + noise;
          }
        }
      }
      add_recap_shot(std::move(frames), src.span.duration() * static_cast<double>(keep) / static_cast<double>(total));
    }
  }
  for (std::size_t d = 0; d < cfg.recap_distractors; ++d) {
    const Latent latent = draw_latent(rng, cfg, false, directions);
    const std::size_t count = draw_count(rng, cfg.min_frames, cfg.max_frames);
    add_recap_shot(draw_frames(rng, latent, count, cfg.frame_jitter), rng.uniform(cfg.min_shot_s, cfg.max_shot_s));
  }
  recap.duration_s = ms(recap_clock + 0.5);

  ep.validate();
  recap.validate();
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  const auto fail = [](const std::string& m) { throw config_error("synth config: " + m); };
  if (num_episodes == 0) fail("num_episodes must be >= 1");
  if (shots == 0) fail("shots must be >= 1");
  if (planted_segments == 0) fail("planted_segments must be >= 1");
  if (planted_width == 0) fail("planted_width must be >= 1");
  if (planted_width > shots) {
    fail("planted_width " + std::to_string(planted_width) + " exceeds the shot count " + std::to_string(shots));
  }
  if (planted_width > shots / planted_segments) {
    fail(std::to_string(planted_segments) + " planted segments of width " + std::to_string(planted_width) +
         " do not fit in " + std::to_string(shots) + " shots");
  }
  for (const auto d : shot_dims) {
    if (d == 0) fail("backbone dims must be >= 1");
  }
  if (utterance_dim == 0) fail("utterance_dim must be >= 1");
  if (min_frames == 0 || min_frames > max_frames) fail("need 1 <= min_frames <= max_frames");
  if (min_tokens == 0 || min_tokens > max_tokens) fail("need 1 <= min_tokens <= max_tokens");
  if (min_scene == 0 || min_scene > max_scene) fail("need 1 <= min_scene <= max_scene");
  if (thread_period == 0) fail("thread_period must be >= 1");
  if (!(recap_trim_fraction > 0.0 && recap_trim_fraction <= 1.0)) fail("recap_trim_fraction must lie in (0, 1]");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(frame_jitter >= 0.0)) fail("frame_jitter must be >= 0");
  if (!(min_shot_s > 0.0 && min_shot_s <= max_shot_s)) fail("need 0 < min_shot_s <= max_shot_s");
  if (!(signal_strength >= 0.0)) fail("signal_strength must be >= 0");
  if (!(invalid_frame_rate >= 0.0 && invalid_frame_rate < 1.0)) fail("invalid_frame_rate must lie in [0, 1)");
}

Json to_json(const SynthConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["num_episodes"] = c.num_episodes;
  j["shots"] = c.shots;
  j["utterances"] = c.utterances;
  j["shot_dims"] = c.shot_dims;
  j["utterance_dim"] = c.utterance_dim;
  j["min_frames"] = c.min_frames;
  j["max_frames"] = c.max_frames;
  j["min_tokens"] = c.min_tokens;
  j["max_tokens"] = c.max_tokens;
  j["planted_segments"] = c.planted_segments;
  j["planted_width"] = c.planted_width;
  j["recap_trim_fraction"] = c.recap_trim_fraction;
  j["noise_sigma"] = c.noise_sigma;
  j["frame_jitter"] = c.frame_jitter;
  j["min_shot_s"] = c.min_shot_s;
  j["max_shot_s"] = c.max_shot_s;
  j["min_scene"] = c.min_scene;
  j["max_scene"] = c.max_scene;
  j["thread_period"] = c.thread_period;
  j["recap_distractors"] = c.recap_distractors;
  j["signal_strength"] = c.signal_strength;
  j["invalid_frame_rate"] = c.invalid_frame_rate;
  return j;
}

SynthConfig synth_config_from_json(const Json& doc) {
  if (!doc.is_object()) throw config_error("synth config must be a JSON object");
  SynthConfig c;
  const Json defaults = to_json(c);
  for (const auto& [key, value] : doc.items()) {
    if (!defaults.contains(key)) throw config_error("synth config: unknown key '" + key + "'");
    const auto& def = defaults.at(key);
    const bool ok = def.is_number_unsigned() ? value.is_number_unsigned()
                    : def.is_array()         ? value.is_array() && value.size() == def.size()
                                             : value.is_number();
    if (!ok) throw config_error("synth config: bad value type for '" + key + "'");
  }
  Json merged = defaults;
  merged.update(doc);
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.num_episodes = merged.at("num_episodes").get<std::size_t>();
    c.shots = merged.at("shots").get<std::size_t>();
    c.utterances = merged.at("utterances").get<std::size_t>();
    c.shot_dims = merged.at("shot_dims").get<std::array<std::size_t, kBackbones>>();
    c.utterance_dim = merged.at("utterance_dim").get<std::size_t>();
    c.min_frames = merged.at("min_frames").get<std::size_t>();
    c.max_frames = merged.at("max_frames").get<std::size_t>();
    c.min_tokens = merged.at("min_tokens").get<std::size_t>();
    c.max_tokens = merged.at("max_tokens").get<std::size_t>();
    c.planted_segments = merged.at("planted_segments").get<std::size_t>();
    c.planted_width = merged.at("planted_width").get<std::size_t>();
    c.recap_trim_fraction = merged.at("recap_trim_fraction").get<double>();
    c.noise_sigma = merged.at("noise_sigma").get<double>();
    c.frame_jitter = merged.at("frame_jitter").get<double>();
    c.min_shot_s = merged.at("min_shot_s").get<double>();
    c.max_shot_s = merged.at("max_shot_s").get<double>();
    c.min_scene = merged.at("min_scene").get<std::size_t>();
    c.max_scene = merged.at("max_scene").get<std::size_t>();
    c.thread_period = merged.at("thread_period").get<std::size_t>();
    c.recap_distractors = merged.at("recap_distractors").get<std::size_t>();
    c.signal_strength = merged.at("signal_strength").get<double>();
    c.invalid_frame_rate = merged.at("invalid_frame_rate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<SynthEpisode> synth_generate(const SynthConfig& config) {
  config.validate();
  std::vector<SynthEpisode> out;
  for (std::size_t e = 0; e < config.num_episodes; ++e) out.push_back(generate_one(config, e));
  return out;
}

void write_synth(const std::filesystem::path& out_dir, const SynthConfig& config,
                 const std::vector<SynthEpisode>& episodes) {
  std::vector<EpisodeListEntry> catalog;
  for (const auto& e : episodes) {
    const auto dir = out_dir / e.episode.episode_id;
    write_manifest(dir, "episode.json", e.episode, "tensors", std::string("planted_labels.json"));
    write_manifest(dir, "recap.json", e.recap, "tensors");
    write_json(dir / "planted_labels.json", to_json(make_label_document(e.episode, e.planted)));
    catalog.push_back({std::filesystem::path(e.episode.episode_id) / "episode.json",
                       std::filesystem::path(e.episode.episode_id) / "planted_labels.json"});
  }
  write_episode_list(out_dir / "catalog.json", catalog);
  write_json(out_dir / "synth_config.json", to_json(config));
}

}  // namespace talesumm::io
