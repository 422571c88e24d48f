#include "talesumm/splits.hpp"

#include <set>

#include "talesumm/error.hpp"

namespace talesumm::io {

const char* to_string(SplitStyle style) {
  switch (style) {
    case SplitStyle::kIntra: return "intra";
    case SplitStyle::kCrossSeason: return "cross_season";
    case SplitStyle::kCrossSeries: return "cross_series";
    case SplitStyle::kCustom: return "custom";
  }
  return "custom";
}

SplitStyle split_style_from_string(const std::string& name) {
  for (const auto s : {SplitStyle::kIntra, SplitStyle::kCrossSeason, SplitStyle::kCrossSeries, SplitStyle::kCustom}) {
    if (name == to_string(s)) return s;
  }
  throw invalid_input("unknown split style '" + name + "'");
}

namespace {

std::vector<std::string> id_list(const Json& parts, const char* key, const std::string& ctx) {
  if (!parts.contains(key)) return {};
  const auto& list = parts.at(key);
  if (!list.is_array()) throw ParseError(ctx + ": '" + key + "' must be an array of ids");
  std::vector<std::string> out;
  for (const auto& id : list) {
    if (!id.is_string()) throw ParseError(ctx + ": '" + key + "' must hold string ids");
    out.push_back(id.get<std::string>());
  }
  return out;
}

Json parts_json(const SplitParts& p) {
  return Json{{"train", p.train}, {"val", p.val}, {"test", p.test}};
}

}  // namespace

SplitSpec split_spec_from_json(const Json& doc) {
  const std::string ctx = "split spec";
  require_schema(doc, kSplitsSchema, ctx);
  SplitSpec spec;
  spec.style = split_style_from_string(require_string(doc, "style", ctx));
  const auto& splits = require(doc, "splits", ctx);
  if (!splits.is_object()) throw ParseError(ctx + ": 'splits' must map names to parts");
  for (const auto& [name, parts] : splits.items()) {
    const std::string pctx = ctx + " '" + name + "'";
    if (!parts.is_object()) throw ParseError(pctx + ": expected {train, val, test}");
    for (const auto& [key, value] : parts.items()) {
      if (key != "train" && key != "val" && key != "test") throw ParseError(pctx + ": unknown part '" + key + "'");
    }
    spec.splits[name] = SplitParts{id_list(parts, "train", pctx), id_list(parts, "val", pctx),
                                   id_list(parts, "test", pctx)};
  }
  return spec;
}

Json to_json(const SplitSpec& spec) {
  Json splits = Json::object();
  for (const auto& [name, parts] : spec.splits) splits[name] = parts_json(parts);
  return Json{{"schema", kSplitsSchema}, {"style", to_string(spec.style)}, {"splits", splits}};
}

std::vector<ResolvedSplit> make_splits(const SplitSpec& spec, const std::vector<std::string>& catalog) {
  const std::set<std::string> known(catalog.begin(), catalog.end());
  std::vector<ResolvedSplit> out;
  for (const auto& [name, parts] : spec.splits) {
    std::map<std::string, const char*> owner;
    const auto check = [&](const std::vector<std::string>& ids, const char* part) {
      for (const auto& id : ids) {
        if (!known.count(id)) throw invalid_input("split '" + name + "': episode '" + id + "' is not in the catalog");
        const auto [it, fresh] = owner.emplace(id, part);
        if (!fresh) {
          throw invalid_input("split '" + name + "': episode '" + id + "' appears in both " + it->second +
                              " and " + part);
        }
      }
    };
    check(parts.train, "train");
    check(parts.val, "val");
    check(parts.test, "test");
    if (parts.train.empty()) throw invalid_input("split '" + name + "' has no training episodes");
    out.push_back(ResolvedSplit{name, parts, parts.val.empty()});
  }
  return out;
}

Json to_json(const std::vector<ResolvedSplit>& resolved) {
  Json out = Json::array();
  for (const auto& r : resolved) {
    Json item = parts_json(r.parts);
    item["name"] = r.name;
    item["empty_val"] = r.empty_val;
    out.push_back(item);
  }
  return out;
}

}  // namespace talesumm::io
