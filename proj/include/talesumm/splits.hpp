#pragma once

#include <map>
#include <string>
#include <vector>

#include "talesumm/json_io.hpp"

namespace talesumm::io {

inline constexpr const char* kSplitsSchema = "talesumm.splits/1";

enum class SplitStyle { kIntra, kCrossSeason, kCrossSeries, kCustom };

const char* to_string(SplitStyle style);
SplitStyle split_style_from_string(const std::string& name);

struct SplitParts {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct SplitSpec {
  SplitStyle style = SplitStyle::kCustom;  // metadata only
  std::map<std::string, SplitParts> splits;
};

struct ResolvedSplit {
  std::string name;
  SplitParts parts;
  /// Training falls back to train-loss model selection.
  bool empty_val = false;
};

SplitSpec split_spec_from_json(const Json& doc);
Json to_json(const SplitSpec& spec);

/// Checks every id against the catalog and that no id repeats within a
/// split, then returns the splits in name order.
std::vector<ResolvedSplit> make_splits(const SplitSpec& spec, const std::vector<std::string>& catalog);

Json to_json(const std::vector<ResolvedSplit>& resolved);

}  // namespace talesumm::io
