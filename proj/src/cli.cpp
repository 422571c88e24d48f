#include "talesumm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "talesumm/checkpoint.hpp"
#include "talesumm/error.hpp"
#include "talesumm/json_io.hpp"
#include "talesumm/manifest.hpp"
#include "talesumm/metrics.hpp"
#include "talesumm/synth.hpp"
#include "talesumm/train.hpp"

namespace talesumm::cli {
namespace {

using io::Json;
namespace fs = std::filesystem;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void stamp(Json& report, bool no_timestamp) {
  if (!no_timestamp) report["timestamp"] = utc_timestamp();
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("talesumm");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("TALESUMM_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honor recognized ones.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

// ---- subcommand options ----------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct MatchArgs {
  std::string episode, recap, out;
  labeling::MatchConfig config;
};

struct SmoothArgs {
  std::string matches, episode, out;
  labeling::SmoothConfig config;
  double binarize_threshold = 0.5;
};

struct TrainArgs {
  std::string train_list, val_list, model_config, out;
  train::TrainOptions options;
  bool no_timestamp = false;
};

struct PredictArgs {
  std::string ckpt, episode, out;
};

struct EvalArgs {
  std::vector<std::string> scores, labels;
  std::string out;
  double threshold = 0.5;
  bool pooled = false;
  bool no_timestamp = false;
};

struct ConsistencyArgs {
  std::vector<std::string> labels;
  std::string out;
  bool no_timestamp = false;
};

struct SelectArgs {
  std::string scores, episode, out;
  double budget = 0.15;
  bool no_timestamp = false;
};

// ---- implementations -------------------------------------------------------

int do_synth(const SynthArgs& a) {
  auto cfg = io::synth_config_from_json(io::read_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const auto episodes = io::synth_generate(cfg);
  io::write_synth(a.out_dir, cfg, episodes);
  spdlog::info("wrote {} synthetic episode(s) to {}", episodes.size(), a.out_dir);
  return kExitOk;
}

int do_match(const MatchArgs& a) {
  a.config.validate();
  const auto episode = io::load_manifest(a.episode).episode;
  const auto recap = io::load_manifest(a.recap).episode;
  if (episode.shot_dims[0] != recap.shot_dims[0]) {
    throw invalid_input("episode and recap disagree on the matching backbone width");
  }
  const auto results = labeling::match_recap(recap.frame_bank(0), episode.frame_bank(0), a.config);
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (results[r].max_rounds_reached) {
      spdlog::warn("recap shot {} hit the closure round limit", recap.shots[r].id);
    }
  }
  io::write_json(a.out, io::matches_to_json(episode, recap, results, a.config));
  return kExitOk;
}

int do_smooth(const SmoothArgs& a) {
  a.config.validate();
  const auto episode = io::load_manifest(a.episode, io::ManifestLoad::kMetadataOnly).episode;
  const auto binary = io::binary_labels_from_matches_json(io::read_json(a.matches), episode);
  LabelSet labels;
  labels.shot_scores = labeling::triangle_smooth(binary, a.config);
  labels.dialog_scores =
      labeling::inherit_dialog_labels(labels.shot_scores, episode.shot_spans(), episode.utterance_spans());
  labels.provenance = "recap";
  labels.binarize_threshold = a.binarize_threshold;
  io::write_json(a.out, io::to_json(io::make_label_document(episode, labels)));
  return kExitOk;
}

std::vector<train::TrainingEpisode> load_training_list(const std::string& path) {
  std::vector<train::TrainingEpisode> out;
  for (const auto& entry : io::load_episode_list(path)) {
    auto loaded = io::load_manifest(entry.manifest);
    const auto labels_path = entry.labels ? entry.labels : loaded.labels;
    if (!labels_path) {
      throw invalid_input("episode " + loaded.episode.episode_id + " in " + path + " has no label file");
    }
    const auto doc = io::read_labels(*labels_path);
    if (doc.items.episode_id != loaded.episode.episode_id) {
      throw invalid_input(labels_path->string() + " labels episode '" + doc.items.episode_id + "', expected '" +
                          loaded.episode.episode_id + "'");
    }
    LabelSet labels = doc.label_set();
    std::vector<std::string> shot_ids, utt_ids;
    for (const auto& s : loaded.episode.shots) shot_ids.push_back(s.id);
    for (const auto& u : loaded.episode.utterances) utt_ids.push_back(u.id);
    labels.shot_scores = io::align_by_id(shot_ids, doc.items.shot_ids, doc.items.shots, labels_path->string());
    labels.dialog_scores =
        io::align_by_id(utt_ids, doc.items.utterance_ids, doc.items.utterances, labels_path->string());
    out.push_back({std::move(loaded.episode), std::move(labels)});
  }
  return out;
}

int do_train(TrainArgs a) {
  const auto train_set = load_training_list(a.train_list);
  if (train_set.empty()) throw invalid_input(a.train_list + " lists no episodes");
  std::vector<train::TrainingEpisode> val_set;
  if (!a.val_list.empty()) val_set = load_training_list(a.val_list);

  Json cfg_doc = a.model_config.empty() ? Json::object() : io::read_json(a.model_config);
  if (!cfg_doc.is_object()) throw config_error("model config must be a JSON object");
  // Feature widths default to those of the data.
  const auto& first = train_set.front().episode;
  if (!cfg_doc.contains("shot_dims")) cfg_doc["shot_dims"] = first.shot_dims;
  if (!cfg_doc.contains("utterance_dim")) cfg_doc["utterance_dim"] = first.utterance_dim;
  const auto config = io::config_from_json(cfg_doc);

  model::TaleSumm<float> model(config, derive_seed(a.options.seed, 0));
  a.options.on_epoch = [](const train::EpochRecord& r) {
    spdlog::info("epoch {} loss {:.6f} val_ap {} lr {:.3e}", r.epoch, r.train_loss,
                 r.val_ap ? std::to_string(*r.val_ap) : "n/a", r.lr);
  };
  if (val_set.empty()) spdlog::warn("no validation episodes: selecting the epoch with the lowest train loss");
  const auto result = train::fit(model, train_set, val_set, a.options);

  Json history = Json::array();
  for (const auto& r : result.history) {
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_ap", r.val_ap ? Json(*r.val_ap) : Json(nullptr)},
                       {"lr", r.lr}});
  }
  io::CheckpointMeta meta;
  meta.seed = derive_seed(a.options.seed, 0);
  meta.epoch = result.best_epoch;
  meta.extra = {{"train_seed", a.options.seed}, {"selected_by", result.selected_by_val ? "val_ap" : "train_loss"}};
  io::save_checkpoint(a.out, model.parameters(), config, meta, &result.optimizer);

  Json report;
  report["schema"] = "talesumm.train_report/1";
  stamp(report, a.no_timestamp);
  report["config"] = {{"train_list", a.train_list},
                      {"val_list", a.val_list},
                      {"epochs", a.options.epochs},
                      {"batch", a.options.batch},
                      {"seed", a.options.seed},
                      {"max_lr", a.options.max_lr},
                      {"pct_start", a.options.pct_start},
                      {"weight_decay", a.options.weight_decay},
                      {"model", io::to_json(config)}};
  report["best_epoch"] = result.best_epoch;
  report["selected_by"] = result.selected_by_val ? "val_ap" : "train_loss";
  report["empty_val"] = val_set.empty();
  report["history"] = history;
  io::write_json(fs::path(a.out) / "train_report.json", report);
  return kExitOk;
}

int do_predict(const PredictArgs& a) {
  const auto model = io::load_model(a.ckpt);
  const auto episode = io::load_manifest(a.episode).episode;
  const auto scores = model.predict(episode);
  io::write_json(a.out, io::scores_to_json(io::make_score_values(episode, scores)));
  return kExitOk;
}

Json optional_metric(const std::function<double()>& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInvalidInput) throw;
    return nullptr;
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (const auto x : v) s += x;
  return s / static_cast<double>(v.size());
}

int do_eval(const EvalArgs& a) {
  if (a.scores.size() != a.labels.size()) {
    throw invalid_input("eval: give one labels file per scores file (" + std::to_string(a.scores.size()) +
                        " vs " + std::to_string(a.labels.size()) + ")");
  }
  Json episodes = Json::object();
  std::vector<double> video_aps, dialog_aps;
  std::vector<double> pooled_scores, pooled_dialog_scores;
  std::vector<std::uint8_t> pooled_labels, pooled_dialog_labels;
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    const auto scores = io::read_scores(a.scores[i]);
    const auto labels = io::read_labels(a.labels[i]);
    if (scores.episode_id != labels.items.episode_id) {
      throw invalid_input("eval: " + a.scores[i] + " scores episode '" + scores.episode_id + "' but " + a.labels[i] +
                          " labels '" + labels.items.episode_id + "'");
    }
    if (episodes.contains(scores.episode_id)) throw invalid_input("eval: episode '" + scores.episode_id + "' given twice");
    const auto shot_scores = io::align_by_id(labels.items.shot_ids, scores.shot_ids, scores.shots, a.scores[i]);
    const auto dialog_scores =
        io::align_by_id(labels.items.utterance_ids, scores.utterance_ids, scores.utterances, a.scores[i]);
    const auto shot_labels = metrics::binarize(labels.items.shots, a.threshold);
    const auto dialog_labels = metrics::binarize(labels.items.utterances, a.threshold);

    Json entry;
    entry["video_ap"] = metrics::average_precision(shot_scores, shot_labels);
    video_aps.push_back(entry["video_ap"].get<double>());
    entry["dialog_ap"] = optional_metric([&] { return metrics::average_precision(dialog_scores, dialog_labels); });
    if (!entry["dialog_ap"].is_null()) dialog_aps.push_back(entry["dialog_ap"].get<double>());
    entry["kendall"] = optional_metric([&] {
      return metrics::rank_correlation(shot_scores, labels.items.shots, metrics::RankCorrelation::kKendall);
    });
    entry["spearman"] = optional_metric([&] {
      return metrics::rank_correlation(shot_scores, labels.items.shots, metrics::RankCorrelation::kSpearman);
    });
    episodes[scores.episode_id] = entry;

    pooled_scores.insert(pooled_scores.end(), shot_scores.begin(), shot_scores.end());
    pooled_labels.insert(pooled_labels.end(), shot_labels.begin(), shot_labels.end());
    pooled_dialog_scores.insert(pooled_dialog_scores.end(), dialog_scores.begin(), dialog_scores.end());
    pooled_dialog_labels.insert(pooled_dialog_labels.end(), dialog_labels.begin(), dialog_labels.end());
  }

  Json report;
  report["schema"] = "talesumm.metrics/1";
  stamp(report, a.no_timestamp);
  report["config"] = {{"scores", a.scores},
                      {"labels", a.labels},
                      {"threshold", a.threshold},
                      {"aggregation", a.pooled ? "pooled" : "macro"}};
  report["episodes"] = episodes;
  report["macro"] = {{"video_ap", mean(video_aps)},
                     {"dialog_ap", dialog_aps.empty() ? Json(nullptr) : Json(mean(dialog_aps))}};
  if (a.pooled) {
    report["pooled"] = {
        {"video_ap", metrics::average_precision(pooled_scores, pooled_labels)},
        {"dialog_ap", optional_metric([&] {
           return metrics::average_precision(pooled_dialog_scores, pooled_dialog_labels);
         })}};
  }
  report["video_ap"] = a.pooled ? report["pooled"]["video_ap"] : report["macro"]["video_ap"];
  io::write_json(a.out, report);
  std::cout << "video_ap " << report["video_ap"].get<double>() << '\n';
  return kExitOk;
}

Json agreement_block(const metrics::RaterMatrix& m) {
  Json block;
  Json errors = Json::object();
  const auto run = [&](const char* name, const std::function<double()>& f) {
    try {
      block[name] = f();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInvalidInput) throw;
      block[name] = nullptr;
      errors[name] = e.what();
    }
  };
  run("cronbach_alpha", [&] { return metrics::cronbach_alpha(m); });
  run("pairwise_f1", [&] { return metrics::pairwise_f1(m); });
  run("fleiss_kappa", [&] { return metrics::fleiss_kappa(m); });
  if (!errors.empty()) block["undefined"] = errors;
  return block;
}

int do_consistency(const ConsistencyArgs& a) {
  if (a.labels.size() < 2) throw invalid_input("consistency needs at least two label files");
  std::vector<io::LabelDocument> docs;
  for (const auto& path : a.labels) docs.push_back(io::read_labels(path));
  const auto& ref = docs.front().items;
  metrics::RaterMatrix shots, dialogs;
  Json sources = Json::array();
  for (std::size_t r = 0; r < docs.size(); ++r) {
    const auto& d = docs[r];
    if (d.items.episode_id != ref.episode_id) {
      throw invalid_input("consistency: " + a.labels[r] + " is for episode '" + d.items.episode_id + "', not '" +
                          ref.episode_id + "'");
    }
    shots.scores.push_back(io::align_by_id(ref.shot_ids, d.items.shot_ids, d.items.shots, a.labels[r]));
    shots.thresholds.push_back(d.binarize_threshold);
    dialogs.scores.push_back(
        io::align_by_id(ref.utterance_ids, d.items.utterance_ids, d.items.utterances, a.labels[r]));
    dialogs.thresholds.push_back(d.binarize_threshold);
    sources.push_back({{"file", a.labels[r]}, {"provenance", d.provenance}, {"binarize_threshold", d.binarize_threshold}});
  }
  Json report;
  report["schema"] = "talesumm.agreement/1";
  stamp(report, a.no_timestamp);
  report["episode_id"] = ref.episode_id;
  report["config"] = {{"labels", a.labels}};
  report["sources"] = sources;
  report["shots"] = agreement_block(shots);
  report["dialogs"] = ref.utterance_ids.empty() ? Json(nullptr) : agreement_block(dialogs);
  io::write_json(a.out, report);
  return kExitOk;
}

int do_select(const SelectArgs& a) {
  const auto episode = io::load_manifest(a.episode, io::ManifestLoad::kMetadataOnly).episode;
  const auto scores = io::read_scores(a.scores);
  if (scores.episode_id != episode.episode_id) {
    throw invalid_input("select: scores are for episode '" + scores.episode_id + "', not '" + episode.episode_id + "'");
  }
  std::vector<std::string> ids;
  std::vector<double> durations;
  for (const auto& s : episode.shots) {
    ids.push_back(s.id);
    durations.push_back(s.span.duration());
  }
  const auto values = io::align_by_id(ids, scores.shot_ids, scores.shots, a.scores);
  const auto selected = metrics::knapsack_select(values, durations, a.budget);
  const auto weights = metrics::quantize_durations(durations);
  Json chosen = Json::array();
  double seconds = 0.0, total_score = 0.0;
  for (const auto i : selected) {
    chosen.push_back({{"id", ids[i]}, {"start_s", episode.shots[i].span.start_s},
                      {"end_s", episode.shots[i].span.end_s}, {"score", values[i]}});
    seconds += durations[i];
    total_score += values[i];
  }
  double total = 0.0;
  for (const auto d : durations) total += d;
  Json report;
  report["schema"] = "talesumm.summary/1";
  stamp(report, a.no_timestamp);
  report["episode_id"] = episode.episode_id;
  report["config"] = {{"scores", a.scores}, {"episode", a.episode}, {"budget", a.budget}};
  report["capacity_s"] = static_cast<double>(metrics::knapsack_capacity(weights, a.budget)) / 10.0;
  report["total_duration_s"] = total;
  report["selected_duration_s"] = seconds;
  report["selected_score"] = total_score;
  report["selected"] = chosen;
  io::write_json(a.out, report);
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
    case ErrorKind::kParse:
    case ErrorKind::kIo:
    case ErrorKind::kConfig:
      return kExitInvalid;
    case ErrorKind::kNumerical:
    case ErrorKind::kInternal:
      return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  if (!spdlog::get("talesumm")) configure_logging();

  CLI::App app{"TaleSumm: story summarization of TV episodes", "talesumm"};
  app.require_subcommand(1);
  const auto existing = CLI::ExistingFile;
  const auto unit = CLI::Range(0.0, 1.0);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic episodes, recaps and planted labels");
  s->add_option("--config", synth.config, "Synth config JSON")->required()->check(existing);
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Override the config seed");

  MatchArgs match;
  auto* m = app.add_subcommand("match", "Match recap shots against an episode");
  m->add_option("--episode", match.episode, "Episode manifest")->required()->check(existing);
  m->add_option("--recap", match.recap, "Recap manifest")->required()->check(existing);
  m->add_option("--threshold", match.config.sim_threshold, "Cosine similarity threshold")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0, "in (0, 1]"));
  m->add_option("--topk", match.config.top_k, "Top-k frame similarities per shot")->capture_default_str()
      ->check(CLI::PositiveNumber);
  m->add_option("--window-radius", match.config.window_radius, "Closure window radius in shots")
      ->capture_default_str();
  m->add_option("--max-rounds", match.config.max_rounds, "Closure round limit")->capture_default_str()
      ->check(CLI::PositiveNumber);
  m->add_option("--out", match.out, "Matches JSON")->required();

  SmoothArgs smooth;
  auto* sm = app.add_subcommand("smooth", "Turn matches into soft shot and dialog labels");
  sm->add_option("--matches", smooth.matches, "Matches JSON")->required()->check(existing);
  sm->add_option("--episode", smooth.episode, "Episode manifest")->required()->check(existing);
  sm->add_option("--window", smooth.config.window, "Triangle window (odd)")->capture_default_str();
  sm->add_option("--binarize-threshold", smooth.binarize_threshold, "Threshold recorded in the labels")
      ->capture_default_str()->check(unit);
  sm->add_option("--out", smooth.out, "Labels JSON")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--train-list", tr.train_list, "Episode list JSON")->required()->check(existing);
  t->add_option("--val-list", tr.val_list, "Validation episode list JSON")->check(existing);
  t->add_option("--model-config", tr.model_config, "Model config JSON")->check(existing);
  t->add_option("--epochs", tr.options.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--batch", tr.options.batch, "Episodes per step")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.options.seed, "Seed")->capture_default_str();
  t->add_option("--max-lr", tr.options.max_lr, "One-cycle peak learning rate")->capture_default_str();
  t->add_option("--pct-start", tr.options.pct_start, "One-cycle warm-up fraction")->capture_default_str();
  t->add_option("--weight-decay", tr.options.weight_decay, "AdamW weight decay")->capture_default_str();
  t->add_option("--out", tr.out, "Checkpoint directory")->required();
  t->add_flag("--no-timestamp", tr.no_timestamp, "Omit the report timestamp");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Score an episode with a checkpoint");
  p->add_option("--ckpt", pr.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  p->add_option("--episode", pr.episode, "Episode manifest")->required()->check(existing);
  p->add_option("--out", pr.out, "Scores JSON")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Average precision and rank correlations of scores against labels");
  e->add_option("--scores", ev.scores, "Scores JSON (one per episode)")->required()->check(existing);
  e->add_option("--labels", ev.labels, "Labels JSON (paired with --scores)")->required()->check(existing);
  e->add_option("--threshold", ev.threshold, "Label binarization threshold")->capture_default_str()->check(unit);
  e->add_flag("--pooled", ev.pooled, "Report AP pooled over all items instead of macro over episodes");
  e->add_option("--out", ev.out, "Report JSON")->required();
  e->add_flag("--no-timestamp", ev.no_timestamp, "Omit the report timestamp");

  ConsistencyArgs co;
  auto* c = app.add_subcommand("consistency", "Agreement between label sources for one episode");
  c->add_option("--labels", co.labels, "Two or more labels JSON files")->required()->check(existing);
  c->add_option("--out", co.out, "Agreement JSON")->required();
  c->add_flag("--no-timestamp", co.no_timestamp, "Omit the report timestamp");

  SelectArgs se;
  auto* sl = app.add_subcommand("select", "Budgeted summary selection");
  sl->add_option("--scores", se.scores, "Scores JSON")->required()->check(existing);
  sl->add_option("--episode", se.episode, "Episode manifest")->required()->check(existing);
  sl->add_option("--budget", se.budget, "Fraction of the episode duration")->capture_default_str()->check(unit);
  sl->add_option("--out", se.out, "Summary JSON")->required();
  sl->add_flag("--no-timestamp", se.no_timestamp, "Omit the report timestamp");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (s->parsed()) return do_synth(synth);
    if (m->parsed()) {
      if (!(match.config.sim_threshold > 0.0)) throw invalid_input("--threshold must lie in (0, 1]");
      return do_match(match);
    }
    if (sm->parsed()) return do_smooth(smooth);
    if (t->parsed()) return do_train(tr);
    if (p->parsed()) return do_predict(pr);
    if (e->parsed()) return do_eval(ev);
    if (c->parsed()) return do_consistency(co);
    if (sl->parsed()) return do_select(se);
  } catch (const Error& err) {
    std::cerr << "talesumm: " << to_string(err.kind()) << ": " << err.what() << '\n';
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "talesumm: internal error: " << err.what() << '\n';
    return kExitRuntime;
  }
  std::cerr << "talesumm: no subcommand\n";
  return kExitInvalid;
}

}  // namespace talesumm::cli
