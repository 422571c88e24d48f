#include "talesumm/manifest.hpp"

#include "talesumm/error.hpp"
#include "talesumm/tensor_file.hpp"

namespace talesumm::io {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Span read_span(const Json& item, const std::string& context) {
  return Span{require_number(item, "start_s", context), require_number(item, "end_s", context)};
}

Tensor<float> read_feature(const std::filesystem::path& path, std::size_t width,
                           const std::string& context) {
  if (!std::filesystem::exists(path)) throw io_error(context + ": missing feature file " + path.string());
  auto t = read_tensor(path);
  if (t.rank() != 2 || t.cols() != width) {
    throw invalid_input(context + ": " + path.string() + " has dims " + dims_to_string(t.dims()) +
                        " but the manifest declares width " + std::to_string(width));
  }
  return t;
}

std::size_t as_size(const Json& v, const std::string& context) {
  if (!v.is_number_unsigned()) throw ParseError(context + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

LoadedManifest load_manifest(const std::filesystem::path& path, ManifestLoad mode) {
  const Json doc = read_json(path);
  const std::string ctx = path.string();
  require_schema(doc, kEpisodeSchema, ctx);
  const auto base = path.parent_path();
  LoadedManifest out;
  out.path = path;
  auto& ep = out.episode;
  ep.episode_id = require_string(doc, "episode_id", ctx);
  ep.duration_s = require_number(doc, "duration_s", ctx);
  const auto& dims = require(doc, "backbone_dims", ctx);
  if (!dims.is_array() || dims.size() != kBackbones) {
    throw ParseError(ctx + ": backbone_dims must list " + std::to_string(kBackbones) + " widths");
  }
  for (std::size_t k = 0; k < kBackbones; ++k) ep.shot_dims[k] = as_size(dims[k], ctx + " backbone_dims");
  ep.utterance_dim = as_size(require(doc, "utterance_dim", ctx), ctx + " utterance_dim");

  const auto& shots = require(doc, "shots", ctx);
  if (!shots.is_array()) throw ParseError(ctx + ": shots must be an array");
  for (const auto& item : shots) {
    ShotFeatures s;
    s.id = require_string(item, "id", ctx + " shot");
    const std::string sctx = ctx + " shot " + s.id;
    s.span = read_span(item, sctx);
    const auto& files = require(item, "features", sctx);
    if (!files.is_array() || files.size() != kBackbones) {
      throw ParseError(sctx + ": features must list one file per backbone");
    }
    if (item.contains("valid_frames")) {
      const auto& valid = item.at("valid_frames");
      if (!valid.is_array()) throw ParseError(sctx + ": valid_frames must be an array of 0/1");
      for (const auto& v : valid) {
        if (!v.is_number_unsigned() || v.get<unsigned>() > 1) {
          throw ParseError(sctx + ": valid_frames entries must be 0 or 1");
        }
        s.validity.push_back(static_cast<std::uint8_t>(v.get<unsigned>()));
      }
    }
    if (mode == ManifestLoad::kFull) {
      for (std::size_t k = 0; k < kBackbones; ++k) {
        if (!files[k].is_string()) throw ParseError(sctx + ": feature paths must be strings");
        s.frames[k] = read_feature(resolve(base, files[k].get<std::string>()), ep.shot_dims[k], sctx);
      }
    }
    ep.shots.push_back(std::move(s));
  }

  if (doc.contains("utterances")) {
    const auto& utts = doc.at("utterances");
    if (!utts.is_array()) throw ParseError(ctx + ": utterances must be an array");
    for (const auto& item : utts) {
      UtteranceFeatures u;
      u.id = require_string(item, "id", ctx + " utterance");
      const std::string uctx = ctx + " utterance " + u.id;
      u.span = read_span(item, uctx);
      const auto file = require_string(item, "features", uctx);
      if (mode == ManifestLoad::kFull) u.tokens = read_feature(resolve(base, file), ep.utterance_dim, uctx);
      ep.utterances.push_back(std::move(u));
    }
  }
  if (doc.contains("labels") && !doc.at("labels").is_null()) {
    out.labels = resolve(base, require_string(doc, "labels", ctx));
  }
  ep.validate(mode == ManifestLoad::kFull);
  return out;
}

void write_manifest(const std::filesystem::path& dir, const std::string& manifest_name,
                    const EpisodeFeatures& episode, const std::string& tensor_subdir,
                    const std::optional<std::string>& labels_relpath) {
  episode.validate();
  Json doc;
  doc["schema"] = kEpisodeSchema;
  doc["episode_id"] = episode.episode_id;
  doc["duration_s"] = episode.duration_s;
  doc["backbone_dims"] = episode.shot_dims;
  doc["utterance_dim"] = episode.utterance_dim;
  Json shots = Json::array();
  for (const auto& s : episode.shots) {
    Json item;
    item["id"] = s.id;
    item["start_s"] = s.span.start_s;
    item["end_s"] = s.span.end_s;
    Json files = Json::array();
    for (std::size_t k = 0; k < kBackbones; ++k) {
      const std::string rel = tensor_subdir + "/" + episode.episode_id + "." + s.id + ".b" +
                              std::to_string(k) + ".tstn";
      write_tensor(dir / rel, s.frames[k]);
      files.push_back(rel);
    }
    item["features"] = files;
    if (!s.validity.empty()) item["valid_frames"] = s.validity;
    shots.push_back(item);
  }
  doc["shots"] = shots;
  Json utts = Json::array();
  for (const auto& u : episode.utterances) {
    const std::string rel = tensor_subdir + "/" + episode.episode_id + "." + u.id + ".tstn";
    write_tensor(dir / rel, u.tokens);
    utts.push_back({{"id", u.id}, {"start_s", u.span.start_s}, {"end_s", u.span.end_s}, {"features", rel}});
  }
  doc["utterances"] = utts;
  if (labels_relpath) doc["labels"] = *labels_relpath;
  write_json(dir / manifest_name, doc);
}

std::vector<EpisodeListEntry> load_episode_list(const std::filesystem::path& path) {
  const Json doc = read_json(path);
  const std::string ctx = path.string();
  require_schema(doc, kEpisodeListSchema, ctx);
  const auto& eps = require(doc, "episodes", ctx);
  if (!eps.is_array()) throw ParseError(ctx + ": episodes must be an array");
  std::vector<EpisodeListEntry> out;
  for (const auto& item : eps) {
    EpisodeListEntry e;
    e.manifest = resolve(path.parent_path(), require_string(item, "manifest", ctx));
    if (item.contains("labels") && !item.at("labels").is_null()) {
      e.labels = resolve(path.parent_path(), require_string(item, "labels", ctx));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_episode_list(const std::filesystem::path& path, const std::vector<EpisodeListEntry>& entries) {
  Json doc;
  doc["schema"] = kEpisodeListSchema;
  Json eps = Json::array();
  for (const auto& e : entries) {
    Json item;
    item["manifest"] = e.manifest.generic_string();
    if (e.labels) item["labels"] = e.labels->generic_string();
    eps.push_back(item);
  }
  doc["episodes"] = eps;
  write_json(path, doc);
}

}  // namespace talesumm::io
