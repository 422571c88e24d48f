#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "talesumm/labeling.hpp"
#include "talesumm/model.hpp"

namespace talesumm::io {

/// Insertion-ordered JSON: documents keep temporal item order and dump
/// byte-identically for identical content.
using Json = nlohmann::ordered_json;

inline constexpr const char* kLabelsSchema = "talesumm.labels/1";
inline constexpr const char* kScoresSchema = "talesumm.scores/1";
inline constexpr const char* kMatchesSchema = "talesumm.matches/1";

Json read_json(const std::filesystem::path& path);
/// Pretty-printed (2-space indent) with a trailing newline.
void write_json(const std::filesystem::path& path, const Json& doc);

/// Typed field access that throws ParseError naming `context` and the key.
const Json& require(const Json& obj, const std::string& key, const std::string& context);
double require_number(const Json& obj, const std::string& key, const std::string& context);
std::string require_string(const Json& obj, const std::string& key, const std::string& context);
void require_schema(const Json& doc, const char* schema, const std::string& context);

/// Per-item values of one episode keyed by shot / utterance id, in
/// temporal order. Shared layout of label and score files.
struct ItemValues {
  std::string episode_id;
  std::vector<std::string> shot_ids;
  std::vector<double> shots;
  std::vector<std::string> utterance_ids;
  std::vector<double> utterances;
};

struct LabelDocument {
  ItemValues items;
  std::string provenance = "recap";
  double binarize_threshold = 0.5;

  LabelSet label_set() const;
};

LabelDocument make_label_document(const EpisodeFeatures& episode, const LabelSet& labels);
Json to_json(const LabelDocument& doc);
LabelDocument label_document_from_json(const Json& doc, const std::string& context);
LabelDocument read_labels(const std::filesystem::path& path);

ItemValues make_score_values(const EpisodeFeatures& episode, const model::EpisodeScores& scores);
Json scores_to_json(const ItemValues& values);
ItemValues scores_from_json(const Json& doc, const std::string& context);
ItemValues read_scores(const std::filesystem::path& path);

/// Values of `source` reordered to the id order of `reference`. Throws
/// unless both hold exactly the same ids.
std::vector<double> align_by_id(const std::vector<std::string>& reference_ids,
                                const std::vector<std::string>& source_ids,
                                const std::vector<double>& source_values, const std::string& what);

/// Per-recap-shot match results, items named by id.
Json matches_to_json(const EpisodeFeatures& episode, const EpisodeFeatures& recap,
                     const std::vector<labeling::MatchResult>& results,
                     const labeling::MatchConfig& config);
/// Binary shot labels (in `episode` order) from a matches document.
std::vector<std::uint8_t> binary_labels_from_matches_json(const Json& doc,
                                                          const EpisodeFeatures& episode);

Json to_json(const model::TaleSummConfig& config);
/// Missing keys take their defaults; unknown keys are a config error.
model::TaleSummConfig config_from_json(const Json& doc);

}  // namespace talesumm::io
