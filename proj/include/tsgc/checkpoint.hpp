#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsgc/model.hpp"
#include "tsgc/train_config.hpp"

namespace tsgc {

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'G', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const TensorRecord&) const = default;
};

/// Optimizer position for resuming a run.
struct TrainingState {
  int next_epoch = 0;
  std::uint64_t adam_step = 0;
  TrainConfig config;
  std::vector<TensorRecord> first_moments;
  std::vector<TensorRecord> second_moments;

  bool operator==(const TrainingState&) const = default;
};

/// File layout, all integers little-endian:
///
///   "TSGC" u32 version
///   u64 length + model config text
///   u64 record count, then per record:
///     u64 length + name, u32 ndim, u64 dims[ndim], f32 values[prod(dims)]
///   u8 has_training; when 1:
///     i32 next_epoch, u64 adam_step, u64 length + train config text,
///     u64 count + first-moment records, u64 count + second-moment records
///
/// Records hold every parameter followed by the batch-norm running statistics.
struct Checkpoint {
  ModelConfig config;
  std::vector<TensorRecord> records;
  std::optional<TrainingState> training;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on a bad magic, unknown version or truncated data.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of the model's parameters and buffers.
Checkpoint capture(TSGCNet<float>& model);

/// Copies every record into the matching model tensor. Throws FormatError on a
/// missing, extra or mis-shaped record.
void restore(const Checkpoint& checkpoint, TSGCNet<float>& model);

/// Model built from the stored config with the stored state.
TSGCNet<float> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace tsgc
