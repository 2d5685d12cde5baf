#include "tsgc/config_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tsgc/errors.hpp"

namespace tsgc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt_list(const std::vector<Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const std::string t = trim(value);
  auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
    throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return v;
}

std::vector<Index> parse_list(const std::string& key, const std::string& value) {
  std::vector<Index> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<Index>(key, item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw UsageError("config key '" + key + "': expected true/false, got '" + value + "'");
}

Aggregation parse_aggregation(const std::string& key, const std::string& value) {
  if (value == "attention") return Aggregation::kAttention;
  if (value == "maxpool") return Aggregation::kMaxPool;
  throw UsageError("config key '" + key + "': expected attention|maxpool, got '" + value + "'");
}

const char* name_of(Aggregation a) { return a == Aggregation::kAttention ? "attention" : "maxpool"; }

const char* name_of(StreamSelection s) {
  switch (s) {
    case StreamSelection::kBoth: return "both";
    case StreamSelection::kCoordsOnly: return "coords_only";
    case StreamSelection::kNormalsOnly: return "normals_only";
    case StreamSelection::kSingleConcat: return "single_concat";
  }
  return "both";
}

const char* name_of(AugmentationMode m) {
  switch (m) {
    case AugmentationMode::kNone: return "none";
    case AugmentationMode::kOnTheFly: return "on_the_fly";
    case AugmentationMode::kFixed: return "fixed";
  }
  return "none";
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_key_value(const std::string& key, const std::string& value, ModelConfig& m, TrainConfig& t) {
  if (key == "num_classes") m.num_classes = parse_number<int>(key, value);
  else if (key == "k") m.k = parse_number<Index>(key, value);
  else if (key == "stream_widths") m.stream_widths = parse_list(key, value);
  else if (key == "fusion_width") m.fusion_width = parse_number<Index>(key, value);
  else if (key == "head_widths") m.head_widths = parse_list(key, value);
  else if (key == "leaky_slope") m.leaky_slope = parse_number<double>(key, value);
  else if (key == "c_stream_agg") m.c_stream_agg = parse_aggregation(key, value);
  else if (key == "n_stream_agg") m.n_stream_agg = parse_aggregation(key, value);
  else if (key == "streams") {
    if (value == "both") m.streams = StreamSelection::kBoth;
    else if (value == "coords_only") m.streams = StreamSelection::kCoordsOnly;
    else if (value == "normals_only") m.streams = StreamSelection::kNormalsOnly;
    else if (value == "single_concat") m.streams = StreamSelection::kSingleConcat;
    else throw UsageError("config key 'streams': unknown value '" + value + "'");
  } else if (key == "fusion_level") {
    if (value == "high") m.fusion_level = FusionLevel::kHigh;
    else if (value == "low") m.fusion_level = FusionLevel::kLow;
    else throw UsageError("config key 'fusion_level': expected high|low, got '" + value + "'");
  } else if (key == "include_self") m.include_self = parse_bool(key, value);
  else if (key == "attention_hidden") m.attention_hidden = parse_list(key, value);
  else if (key == "model_seed") m.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "epochs") t.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
  else if (key == "lr") t.lr = parse_number<double>(key, value);
  else if (key == "decay_factor") t.decay_factor = parse_number<double>(key, value);
  else if (key == "decay_every") t.decay_every = parse_number<int>(key, value);
  else if (key == "adam_beta1") t.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") t.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") t.adam_eps = parse_number<double>(key, value);
  else if (key == "translation_range") t.translation_range = parse_number<double>(key, value);
  else if (key == "rotation_range") t.rotation_range = parse_number<double>(key, value);
  else if (key == "augmentation") {
    if (value == "none") t.augmentation = AugmentationMode::kNone;
    else if (value == "on_the_fly") t.augmentation = AugmentationMode::kOnTheFly;
    else if (value == "fixed") t.augmentation = AugmentationMode::kFixed;
    else throw UsageError("config key 'augmentation': expected none|on_the_fly|fixed, got '" + value + "'");
  } else if (key == "center") t.center = parse_bool(key, value);
  else if (key == "recalibrate_bn") t.recalibrate_bn = parse_bool(key, value);
  else if (key == "loss_reduction") {
    if (value == "mean") t.loss_reduction = Reduction::kMean;
    else if (value == "sum") t.loss_reduction = Reduction::kSum;
    else throw UsageError("config key 'loss_reduction': expected mean|sum, got '" + value + "'");
  } else if (key == "checkpoint_every") t.checkpoint_every = parse_number<int>(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

void apply_key_values(const KeyValues& kv, ModelConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : kv) apply_key_value(key, value, model, train);
}

std::string to_text(const ModelConfig& m) {
  std::ostringstream os;
  os << "num_classes = " << m.num_classes << '\n'
     << "k = " << m.k << '\n'
     << "stream_widths = " << fmt_list(m.stream_widths) << '\n'
     << "fusion_width = " << m.fusion_width << '\n'
     << "head_widths = " << fmt_list(m.head_widths) << '\n'
     << "leaky_slope = " << fmt(m.leaky_slope) << '\n'
     << "c_stream_agg = " << name_of(m.c_stream_agg) << '\n'
     << "n_stream_agg = " << name_of(m.n_stream_agg) << '\n'
     << "streams = " << name_of(m.streams) << '\n'
     << "fusion_level = " << (m.fusion_level == FusionLevel::kHigh ? "high" : "low") << '\n'
     << "include_self = " << (m.include_self ? "true" : "false") << '\n'
     << "attention_hidden = " << fmt_list(m.attention_hidden) << '\n'
     << "model_seed = " << m.seed << '\n';
  return os.str();
}

std::string to_text(const TrainConfig& t) {
  std::ostringstream os;
  os << "epochs = " << t.epochs << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "lr = " << fmt(t.lr) << '\n'
     << "decay_factor = " << fmt(t.decay_factor) << '\n'
     << "decay_every = " << t.decay_every << '\n'
     << "adam_beta1 = " << fmt(t.adam_beta1) << '\n'
     << "adam_beta2 = " << fmt(t.adam_beta2) << '\n'
     << "adam_eps = " << fmt(t.adam_eps) << '\n'
     << "translation_range = " << fmt(t.translation_range) << '\n'
     << "rotation_range = " << fmt(t.rotation_range) << '\n'
     << "augmentation = " << name_of(t.augmentation) << '\n'
     << "center = " << (t.center ? "true" : "false") << '\n'
     << "recalibrate_bn = " << (t.recalibrate_bn ? "true" : "false") << '\n'
     << "loss_reduction = " << (t.loss_reduction == Reduction::kMean ? "mean" : "sum") << '\n'
     << "checkpoint_every = " << t.checkpoint_every << '\n'
     << "seed = " << t.seed << '\n';
  return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig m;
  for (const auto& [key, value] : parse_key_values(text)) {
    TrainConfig t;
    apply_key_value(key, value, m, t);
    if (!(t == TrainConfig{})) throw UsageError("config key '" + key + "' is not a model setting");
  }
  return m;
}

TrainConfig train_config_from_text(const std::string& text) {
  TrainConfig t;
  for (const auto& [key, value] : parse_key_values(text)) {
    ModelConfig m;
    apply_key_value(key, value, m, t);
    if (!(m == ModelConfig{})) throw UsageError("config key '" + key + "' is not a training setting");
  }
  return t;
}

}  // namespace tsgc
