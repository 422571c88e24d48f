#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "talesumm/episode.hpp"
#include "talesumm/json_io.hpp"

namespace talesumm::io {

inline constexpr const char* kEpisodeSchema = "talesumm.episode/1";
inline constexpr const char* kEpisodeListSchema = "talesumm.episode_list/1";

struct LoadedManifest {
  EpisodeFeatures episode;
  std::filesystem::path path;
  std::optional<std::filesystem::path> labels;  // resolved against the manifest directory
};

enum class ManifestLoad { kFull, kMetadataOnly };

/// Parses an episode manifest. Relative file paths resolve against the
/// manifest's directory. kFull reads every tensor and checks it against
/// the declared dims; kMetadataOnly reads ids and spans only.
LoadedManifest load_manifest(const std::filesystem::path& path, ManifestLoad mode = ManifestLoad::kFull);

/// Writes `<dir>/<manifest_name>` plus one tensor file per shot backbone and
/// utterance under `<dir>/<tensor_subdir>/`. Output depends only on the inputs.
void write_manifest(const std::filesystem::path& dir, const std::string& manifest_name,
                    const EpisodeFeatures& episode, const std::string& tensor_subdir = "tensors",
                    const std::optional<std::string>& labels_relpath = {});

struct EpisodeListEntry {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> labels;  // falls back to the manifest's own
};

/// {"schema": "talesumm.episode_list/1", "episodes": [{"manifest": ..., "labels": ...}]}
std::vector<EpisodeListEntry> load_episode_list(const std::filesystem::path& path);
void write_episode_list(const std::filesystem::path& path, const std::vector<EpisodeListEntry>& entries);

}  // namespace talesumm::io
