#include "talesumm/json_io.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "talesumm/error.hpp"

namespace talesumm::io {

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_json(const std::filesystem::path& path, const Json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw io_error("failed writing " + path.string());
}

const Json& require(const Json& obj, const std::string& key, const std::string& context) {
  if (!obj.is_object()) throw ParseError(context + ": expected a JSON object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(context + ": missing field '" + key + "'");
  return *it;
}

double require_number(const Json& obj, const std::string& key, const std::string& context) {
  const auto& v = require(obj, key, context);
  if (!v.is_number()) throw ParseError(context + ": field '" + key + "' must be a number");
  return v.get<double>();
}

std::string require_string(const Json& obj, const std::string& key, const std::string& context) {
  const auto& v = require(obj, key, context);
  if (!v.is_string()) throw ParseError(context + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

void require_schema(const Json& doc, const char* schema, const std::string& context) {
  const auto found = require_string(doc, "schema", context);
  if (found != schema) {
    throw ParseError(context + ": schema '" + found + "' is not the supported '" + schema + "'");
  }
}

namespace {

Json keyed(const std::vector<std::string>& ids, const std::vector<double>& values) {
  Json obj = Json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) obj[ids[i]] = values[i];
  return obj;
}

void unkey(const Json& obj, const std::string& context, std::vector<std::string>& ids,
           std::vector<double>& values) {
  if (!obj.is_object()) throw ParseError(context + ": expected an object keyed by item id");
  for (const auto& [id, v] : obj.items()) {
    if (!v.is_number()) throw ParseError(context + ": value of '" + id + "' must be a number");
    ids.push_back(id);
    values.push_back(v.get<double>());
  }
}

ItemValues item_values(const Json& doc, const std::string& context) {
  ItemValues out;
  out.episode_id = require_string(doc, "episode_id", context);
  unkey(require(doc, "shots", context), context + " shots", out.shot_ids, out.shots);
  if (doc.contains("utterances")) {
    unkey(doc.at("utterances"), context + " utterances", out.utterance_ids, out.utterances);
  }
  return out;
}

std::vector<std::string> shot_ids(const EpisodeFeatures& e) {
  std::vector<std::string> ids;
  for (const auto& s : e.shots) ids.push_back(s.id);
  return ids;
}

std::vector<std::string> utterance_ids(const EpisodeFeatures& e) {
  std::vector<std::string> ids;
  for (const auto& u : e.utterances) ids.push_back(u.id);
  return ids;
}

}  // namespace

LabelSet LabelDocument::label_set() const {
  LabelSet out;
  out.shot_scores = items.shots;
  out.dialog_scores = items.utterances;
  out.provenance = provenance;
  out.binarize_threshold = binarize_threshold;
  out.validate(out.shot_scores.size(), out.dialog_scores.size());
  return out;
}

LabelDocument make_label_document(const EpisodeFeatures& episode, const LabelSet& labels) {
  labels.validate(episode.shots.size(), episode.utterances.size());
  LabelDocument doc;
  doc.items.episode_id = episode.episode_id;
  doc.items.shot_ids = shot_ids(episode);
  doc.items.shots = labels.shot_scores;
  doc.items.utterance_ids = utterance_ids(episode);
  doc.items.utterances = labels.dialog_scores;
  doc.provenance = labels.provenance;
  doc.binarize_threshold = labels.binarize_threshold;
  return doc;
}

Json to_json(const LabelDocument& doc) {
  Json out;
  out["schema"] = kLabelsSchema;
  out["episode_id"] = doc.items.episode_id;
  out["provenance"] = doc.provenance;
  out["binarize_threshold"] = doc.binarize_threshold;
  out["shots"] = keyed(doc.items.shot_ids, doc.items.shots);
  out["utterances"] = keyed(doc.items.utterance_ids, doc.items.utterances);
  return out;
}

LabelDocument label_document_from_json(const Json& doc, const std::string& context) {
  require_schema(doc, kLabelsSchema, context);
  LabelDocument out;
  out.items = item_values(doc, context);
  out.provenance = require_string(doc, "provenance", context);
  out.binarize_threshold = require_number(doc, "binarize_threshold", context);
  if (!(out.binarize_threshold > 0.0 && out.binarize_threshold <= 1.0)) {
    throw invalid_input(context + ": binarize_threshold must lie in (0, 1]");
  }
  out.label_set();  // range checks
  return out;
}

LabelDocument read_labels(const std::filesystem::path& path) {
  return label_document_from_json(read_json(path), path.string());
}

ItemValues make_score_values(const EpisodeFeatures& episode, const model::EpisodeScores& scores) {
  if (scores.shots.size() != episode.shots.size() ||
      scores.dialogs.size() != episode.utterances.size()) {
    throw invalid_input("score counts do not match episode " + episode.episode_id);
  }
  ItemValues out;
  out.episode_id = episode.episode_id;
  out.shot_ids = shot_ids(episode);
  out.shots = scores.shots;
  out.utterance_ids = utterance_ids(episode);
  out.utterances = scores.dialogs;
  return out;
}

Json scores_to_json(const ItemValues& values) {
  Json out;
  out["schema"] = kScoresSchema;
  out["episode_id"] = values.episode_id;
  out["shots"] = keyed(values.shot_ids, values.shots);
  out["utterances"] = keyed(values.utterance_ids, values.utterances);
  return out;
}

ItemValues scores_from_json(const Json& doc, const std::string& context) {
  require_schema(doc, kScoresSchema, context);
  return item_values(doc, context);
}

ItemValues read_scores(const std::filesystem::path& path) {
  return scores_from_json(read_json(path), path.string());
}

std::vector<double> align_by_id(const std::vector<std::string>& reference_ids,
                                const std::vector<std::string>& source_ids,
                                const std::vector<double>& source_values, const std::string& what) {
  std::map<std::string, double> lookup;
  for (std::size_t i = 0; i < source_ids.size(); ++i) lookup[source_ids[i]] = source_values[i];
  if (lookup.size() != reference_ids.size()) {
    throw invalid_input(what + ": " + std::to_string(source_ids.size()) + " items vs " +
                        std::to_string(reference_ids.size()) + " expected");
  }
  std::vector<double> out;
  out.reserve(reference_ids.size());
  for (const auto& id : reference_ids) {
    const auto it = lookup.find(id);
    if (it == lookup.end()) throw invalid_input(what + ": no value for item '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

Json matches_to_json(const EpisodeFeatures& episode, const EpisodeFeatures& recap,
                     const std::vector<labeling::MatchResult>& results,
                     const labeling::MatchConfig& config) {
  if (results.size() != recap.shots.size()) throw invalid_input("one match result per recap shot required");
  const auto name = [&](std::size_t i) { return episode.shots.at(i).id; };
  Json out;
  out["schema"] = kMatchesSchema;
  out["episode_id"] = episode.episode_id;
  out["recap_id"] = recap.episode_id;
  out["config"] = {{"threshold", config.sim_threshold},
                   {"top_k", config.top_k},
                   {"window_radius", config.window_radius},
                   {"max_rounds", config.max_rounds}};
  Json list = Json::array();
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& res = results[r];
    Json item;
    item["recap_shot"] = recap.shots[r].id;
    Json candidates = Json::array();
    for (const auto c : res.candidates) candidates.push_back(name(c));
    item["candidates"] = candidates;
    Json scores = Json::object();
    for (const auto& [shot, score] : res.scores) scores[name(shot)] = score;
    item["scores"] = scores;
    item["best_shot"] = res.best_shot ? Json(name(*res.best_shot)) : Json(nullptr);
    Json matched = Json::array();
    for (const auto m : res.matched) matched.push_back(name(m));
    item["matched"] = matched;
    item["rounds"] = res.rounds;
    item["max_rounds_reached"] = res.max_rounds_reached;
    list.push_back(item);
  }
  out["recap_shots"] = list;
  const auto binary = labeling::binary_labels_from_matches(results, episode.shots.size());
  Json positives = Json::array();
  for (std::size_t i = 0; i < binary.size(); ++i) {
    if (binary[i]) positives.push_back(name(i));
  }
  out["positive_shots"] = positives;
  return out;
}

std::vector<std::uint8_t> binary_labels_from_matches_json(const Json& doc,
                                                          const EpisodeFeatures& episode) {
  const std::string context = "matches document";
  require_schema(doc, kMatchesSchema, context);
  const auto id = require_string(doc, "episode_id", context);
  if (id != episode.episode_id) {
    throw invalid_input("matches are for episode '" + id + "', not '" + episode.episode_id + "'");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < episode.shots.size(); ++i) index[episode.shots[i].id] = i;
  std::vector<std::uint8_t> out(episode.shots.size(), 0);
  const auto& positives = require(doc, "positive_shots", context);
  if (!positives.is_array()) throw ParseError(context + ": positive_shots must be an array");
  for (const auto& p : positives) {
    if (!p.is_string()) throw ParseError(context + ": positive_shots entries must be ids");
    const auto it = index.find(p.get<std::string>());
    if (it == index.end()) throw invalid_input(context + ": unknown shot '" + p.get<std::string>() + "'");
    out[it->second] = 1;
  }
  return out;
}

Json to_json(const model::TaleSummConfig& c) {
  Json out;
  out["d_model"] = c.d_model;
  out["heads"] = c.heads;
  out["shot_layers"] = c.shot_layers;
  out["episode_layers"] = c.episode_layers;
  out["group_size"] = c.group_size;
  out["time_bin_s"] = c.time_bin_s;
  out["frame_cap"] = c.frame_cap;
  out["dropout"] = {{"projection", c.dropout.projection},
                    {"attention", c.dropout.attention},
                    {"head", c.dropout.head}};
  out["shot_dims"] = c.shot_dims;
  out["utterance_dim"] = c.utterance_dim;
  out["max_groups"] = c.max_groups;
  out["max_duration_s"] = c.max_duration_s;
  out["ff_multiplier"] = c.ff_multiplier;
  return out;
}

namespace {

template <typename V>
void read_field(const Json& doc, const char* key, V& target) {
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    if constexpr (std::is_integral_v<V>) {
      if (!it->is_number_unsigned()) throw config_error(std::string("model config: '") + key +
                                                        "' must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!it->is_number()) throw config_error(std::string("model config: '") + key + "' must be a number");
    }
    target = it->template get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("model config: bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw config_error(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

model::TaleSummConfig config_from_json(const Json& doc) {
  if (!doc.is_object()) throw config_error("model config must be a JSON object");
  reject_unknown(doc,
                 {"d_model", "heads", "shot_layers", "episode_layers", "group_size", "time_bin_s",
                  "frame_cap", "dropout", "shot_dims", "utterance_dim", "max_groups",
                  "max_duration_s", "ff_multiplier"},
                 "model config");
  model::TaleSummConfig c;
  read_field(doc, "d_model", c.d_model);
  read_field(doc, "heads", c.heads);
  read_field(doc, "shot_layers", c.shot_layers);
  read_field(doc, "episode_layers", c.episode_layers);
  read_field(doc, "group_size", c.group_size);
  read_field(doc, "time_bin_s", c.time_bin_s);
  read_field(doc, "frame_cap", c.frame_cap);
  read_field(doc, "utterance_dim", c.utterance_dim);
  read_field(doc, "max_groups", c.max_groups);
  read_field(doc, "max_duration_s", c.max_duration_s);
  read_field(doc, "ff_multiplier", c.ff_multiplier);
  if (doc.contains("shot_dims")) {
    const auto& dims = doc.at("shot_dims");
    if (!dims.is_array() || dims.size() != kBackbones) {
      throw config_error("model config: shot_dims must list " + std::to_string(kBackbones) + " widths");
    }
    for (std::size_t k = 0; k < kBackbones; ++k) {
      if (!dims[k].is_number_unsigned()) throw config_error("model config: shot_dims must be integers");
      c.shot_dims[k] = dims[k].get<std::size_t>();
    }
  }
  if (doc.contains("dropout")) {
    const auto& d = doc.at("dropout");
    if (!d.is_object()) throw config_error("model config: dropout must be an object");
    reject_unknown(d, {"projection", "attention", "head"}, "model config dropout");
    read_field(d, "projection", c.dropout.projection);
    read_field(d, "attention", c.dropout.attention);
    read_field(d, "head", c.dropout.head);
  }
  c.validate();
  return c;
}

}  // namespace talesumm::io
