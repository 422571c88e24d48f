#include "talesumm/checkpoint.hpp"

#include <set>

#include "talesumm/error.hpp"
#include "talesumm/tensor_file.hpp"

namespace talesumm::io {
namespace {

constexpr const char* kCheckpointSchema = "talesumm.checkpoint";

std::string tensor_name(const std::string& group, std::size_t index) {
  return group + "/" + std::to_string(index) + ".tstn";
}

Tensor<float> load_entry(const std::filesystem::path& dir, const Json& entry, const std::string& ctx) {
  const auto file = dir / require_string(entry, "file", ctx);
  if (!std::filesystem::exists(file)) throw io_error(ctx + ": missing tensor file " + file.string());
  auto t = read_tensor(file);
  const auto& dims = require(entry, "dims", ctx);
  if (!dims.is_array() || dims.get<Dims>() != t.dims()) {
    throw ParseError(ctx + ": " + file.string() + " has dims " + dims_to_string(t.dims()) +
                     " but the index records " + dims.dump());
  }
  return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ag::ParameterStore<float>& params,
                     const model::TaleSummConfig& config, const CheckpointMeta& meta,
                     const optim::AdamWState<float>* optimizer) {
  std::filesystem::create_directories(dir);
  Json index;
  index["schema"] = kCheckpointSchema;
  index["format_version"] = kCheckpointVersion;
  index["config"] = to_json(config);
  index["seed"] = meta.seed;
  index["epoch"] = meta.epoch;
  index["extra"] = meta.extra;
  Json table = Json::array();
  const auto& all = params.all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto file = tensor_name("params", i);
    write_tensor(dir / file, all[i].value());
    table.push_back({{"name", all[i].name},
                     {"file", file},
                     {"dims", all[i].value().dims()},
                     {"trainable", all[i].trainable}});
  }
  index["parameters"] = table;
  if (optimizer) {
    if (optimizer->first_moment.size() != all.size() || optimizer->second_moment.size() != all.size()) {
      throw invalid_input("save_checkpoint: optimizer state does not match the parameters");
    }
    Json first = Json::array(), second = Json::array();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto f1 = tensor_name("optimizer/m", i);
      const auto f2 = tensor_name("optimizer/v", i);
      write_tensor(dir / f1, optimizer->first_moment[i]);
      write_tensor(dir / f2, optimizer->second_moment[i]);
      first.push_back({{"file", f1}, {"dims", optimizer->first_moment[i].dims()}});
      second.push_back({{"file", f2}, {"dims", optimizer->second_moment[i].dims()}});
    }
    index["optimizer"] = {{"step", optimizer->step}, {"first_moment", first}, {"second_moment", second}};
  } else {
    index["optimizer"] = nullptr;
  }
  write_json(dir / "index.json", index);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<model::TaleSummConfig>& expected) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path)) throw io_error("no checkpoint index at " + index_path.string());
  const Json index = read_json(index_path);
  const std::string ctx = index_path.string();
  if (require_string(index, "schema", ctx) != kCheckpointSchema) {
    throw ParseError(ctx + ": not a checkpoint index");
  }
  const auto& version = require(index, "format_version", ctx);
  if (!version.is_number_unsigned() || version.get<std::uint64_t>() != kCheckpointVersion) {
    throw ParseError(ctx + ": unsupported checkpoint format version " + version.dump() +
                     " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint out;
  out.config = config_from_json(require(index, "config", ctx));
  if (expected && !(*expected == out.config)) {
    const Json want = to_json(*expected);
    const Json have = to_json(out.config);
    std::string diff;
    for (const auto& [key, value] : want.items()) {
      if (have.at(key) != value) {
        diff += (diff.empty() ? "" : ", ") + key + " requested " + value.dump() + " but stored " + have.at(key).dump();
      }
    }
    throw config_error("checkpoint config mismatch: " + diff);
  }
  const auto& seed = require(index, "seed", ctx);
  const auto& epoch = require(index, "epoch", ctx);
  if (!seed.is_number_unsigned() || !epoch.is_number_unsigned()) {
    throw ParseError(ctx + ": seed and epoch must be non-negative integers");
  }
  out.meta.seed = seed.get<std::uint64_t>();
  out.meta.epoch = epoch.get<std::uint64_t>();
  if (index.contains("extra")) out.meta.extra = index.at("extra");

  const auto& table = require(index, "parameters", ctx);
  if (!table.is_array()) throw ParseError(ctx + ": parameters must be an array");
  std::set<std::string> seen;
  for (const auto& entry : table) {
    const auto name = require_string(entry, "name", ctx);
    if (!seen.insert(name).second) throw ParseError(ctx + ": parameter '" + name + "' listed twice");
    const auto& trainable = require(entry, "trainable", ctx);
    if (!trainable.is_boolean()) throw ParseError(ctx + ": trainable must be a boolean");
    out.parameters.emplace_back(name, load_entry(dir, entry, ctx + " parameter " + name));
    out.trainable.push_back(trainable.get<bool>());
  }

  if (index.contains("optimizer") && !index.at("optimizer").is_null()) {
    const auto& opt = index.at("optimizer");
    optim::AdamWState<float> state;
    const auto& step = require(opt, "step", ctx);
    if (!step.is_number_unsigned()) throw ParseError(ctx + ": optimizer step must be an integer");
    state.step = step.get<std::uint64_t>();
    const auto& first = require(opt, "first_moment", ctx);
    const auto& second = require(opt, "second_moment", ctx);
    if (!first.is_array() || !second.is_array() || first.size() != table.size() ||
        second.size() != table.size()) {
      throw ParseError(ctx + ": optimizer moments must list one tensor per parameter");
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
      state.first_moment.push_back(load_entry(dir, first[i], ctx + " optimizer"));
      state.second_moment.push_back(load_entry(dir, second[i], ctx + " optimizer"));
    }
    out.optimizer = std::move(state);
  }
  return out;
}

void restore_parameters(ag::ParameterStore<float>& params, const Checkpoint& checkpoint) {
  auto& all = params.all();
  if (all.size() != checkpoint.parameters.size()) {
    throw config_error("checkpoint holds " + std::to_string(checkpoint.parameters.size()) +
                       " parameters, model expects " + std::to_string(all.size()));
  }
  // Validate everything first so the store is never half-restored.
  for (const auto& [name, tensor] : checkpoint.parameters) {
    if (!params.contains(name)) throw config_error("checkpoint parameter '" + name + "' is unknown to the model");
    const auto& target = params.get(name).value();
    if (target.dims() != tensor.dims()) {
      throw config_error("checkpoint parameter '" + name + "' has dims " + dims_to_string(tensor.dims()) +
                         ", model expects " + dims_to_string(target.dims()));
    }
  }
  for (const auto& [name, tensor] : checkpoint.parameters) params.get(name).value() = tensor;
}

model::TaleSumm<float> load_model(const std::filesystem::path& dir,
                                  const std::optional<model::TaleSummConfig>& expected) {
  const auto checkpoint = load_checkpoint(dir, expected);
  model::TaleSumm<float> model(checkpoint.config, checkpoint.meta.seed);
  restore_parameters(model.parameters(), checkpoint);
  return model;
}

}  // namespace talesumm::io
