#pragma once

// Binary checkpoint: "HCAS", u32 version, u64 JSON length, JSON header,
// then one record per tensor:
//   u16 name length, name, u8 rank, u64 dims[rank], f64 values (LE).
// Model parameters use their own names; Adam moments are stored as
// "adam.m/<name>" and "adam.v/<name>".

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hiercas/cascade.hpp"
#include "hiercas/errors.hpp"
#include "hiercas/model.hpp"
#include "hiercas/training.hpp"

namespace hiercas::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  model::HierCas model;
  train::OptimizerState optimizer;
  data::ObservationConfig observation;
  train::TrainConfig train;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// JSON object with every model, observation and training setting, as
/// stored in checkpoint headers.
std::string settings_json(const model::HierCasConfig& model_cfg,
                          const data::ObservationConfig& observation,
                          const train::TrainConfig& train_cfg);

/// Lines "key: checkpoint=<a> requested=<b>" for every differing setting.
std::vector<std::string> config_diff(const model::HierCasConfig& stored,
                                     const model::HierCasConfig& requested);
std::vector<std::string> config_diff(const data::ObservationConfig& stored,
                                     const data::ObservationConfig& requested);

/// Raised when a checkpoint does not match the configuration it is used with.
class ConfigMismatchError : public CheckpointError {
 public:
  explicit ConfigMismatchError(std::vector<std::string> diff);
  const std::vector<std::string>& diff() const noexcept { return diff_; }

 private:
  std::vector<std::string> diff_;
};

/// Throws ConfigMismatchError listing every differing setting.
void require_config(const Checkpoint& ckpt, const model::HierCasConfig& model_cfg);

}  // namespace hiercas::io
