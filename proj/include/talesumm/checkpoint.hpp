#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "talesumm/json_io.hpp"
#include "talesumm/model.hpp"
#include "talesumm/optim.hpp"

namespace talesumm::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  Json extra = Json::object();
};

/// A directory: index.json (version, config, metadata, parameter table)
/// plus one TSTN file per parameter and optional optimizer moments.
struct Checkpoint {
  model::TaleSummConfig config;
  std::vector<std::pair<std::string, Tensor<float>>> parameters;  // store order
  std::vector<std::uint8_t> trainable;
  CheckpointMeta meta;
  std::optional<optim::AdamWState<float>> optimizer;
};

void save_checkpoint(const std::filesystem::path& dir, const ag::ParameterStore<float>& params,
                     const model::TaleSummConfig& config, const CheckpointMeta& meta,
                     const optim::AdamWState<float>* optimizer = nullptr);

/// Reads everything before returning, so a failure never yields a partial
/// checkpoint. With `expected`, any config field that differs from the
/// stored snapshot is a config error.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<model::TaleSummConfig>& expected = {});

/// Copies checkpoint tensors into a store with exactly the same names and
/// shapes.
void restore_parameters(ag::ParameterStore<float>& params, const Checkpoint& checkpoint);

model::TaleSumm<float> load_model(const std::filesystem::path& dir,
                                  const std::optional<model::TaleSummConfig>& expected = {});

}  // namespace talesumm::io
