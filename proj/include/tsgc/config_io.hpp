#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tsgc/model.hpp"
#include "tsgc/train_config.hpp"

namespace tsgc {

/// `key = value` text: one pair per line, `#` starts a comment, blank lines
/// are ignored. Lists are comma-separated. Keys:
///
///   model: num_classes, k, stream_widths, fusion_width, head_widths,
///          leaky_slope, c_stream_agg (attention|maxpool), n_stream_agg,
///          streams (both|coords_only|normals_only|single_concat),
///          fusion_level (high|low), include_self, attention_hidden, model_seed
///   train: epochs, batch_size, lr, decay_factor, decay_every, adam_beta1,
///          adam_beta2, adam_eps, translation_range, rotation_range,
///          augmentation (none|on_the_fly|fixed), center, recalibrate_bn, loss_reduction
///          (mean|sum), checkpoint_every, seed
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies every pair to the two configs; an unknown key or a malformed value
/// throws UsageError naming the key.
void apply_key_values(const KeyValues& kv, ModelConfig& model, TrainConfig& train);
void apply_key_value(const std::string& key, const std::string& value, ModelConfig& model, TrainConfig& train);

/// Fully resolved, deterministic text forms (round-trip exact).
std::string to_text(const ModelConfig& config);
std::string to_text(const TrainConfig& config);

ModelConfig model_config_from_text(const std::string& text);
TrainConfig train_config_from_text(const std::string& text);

}  // namespace tsgc
