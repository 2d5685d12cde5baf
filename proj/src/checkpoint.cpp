#include "tsgc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tsgc/config_io.hpp"
#include "tsgc/errors.hpp"

namespace tsgc {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void text(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* data, std::size_t n) { out_.append(data, n); }
  void record(const TensorRecord& r) {
    text(r.name);
    u32(static_cast<std::uint32_t>(r.shape.size()));
    for (Index d : r.shape) u64(static_cast<std::uint64_t>(d));
    for (float v : r.values) f32(v);
  }
  void records(const std::vector<TensorRecord>& rs) {
    u64(rs.size());
    for (const auto& r : rs) record(r);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  TensorRecord record() {
    TensorRecord r;
    r.name = text();
    const std::uint32_t ndim = u32();
    if (ndim > 8) throw FormatError("checkpoint record '" + r.name + "' has " + std::to_string(ndim) + " dims");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const std::uint64_t d = u64();
      r.shape.push_back(static_cast<Index>(d));
      count *= d;
    }
    need(count * 4);
    r.values.resize(count);
    for (auto& v : r.values) v = f32();
    return r;
  }
  std::vector<TensorRecord> records() {
    const std::uint64_t n = u64();
    std::vector<TensorRecord> rs;
    for (std::uint64_t i = 0; i < n; ++i) rs.push_back(record());
    return rs;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string printable(std::string_view bytes) {
  std::ostringstream os;
  for (unsigned char c : bytes) {
    if (c >= 0x20 && c < 0x7f) {
      os << c;
    } else {
      static const char* hex = "0123456789abcdef";
      os << "\\x" << hex[c >> 4] << hex[c & 15];
    }
  }
  return os.str();
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.text(to_text(checkpoint.config));
  w.records(checkpoint.records);
  w.u8(checkpoint.training ? 1 : 0);
  if (checkpoint.training) {
    const TrainingState& t = *checkpoint.training;
    w.u32(static_cast<std::uint32_t>(t.next_epoch));
    w.u64(t.adam_step);
    w.text(to_text(t.config));
    w.records(t.first_moments);
    w.records(t.second_moments);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const std::string_view magic = bytes.substr(0, 4);
  if (magic != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("not a checkpoint: magic bytes '" + printable(magic) + "', expected 'TSGC'");
  }
  Reader r(bytes.substr(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    c.config = model_config_from_text(r.text());
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what());
  }
  c.records = r.records();
  const std::uint8_t has_training = r.u8();
  if (has_training > 1) throw FormatError("checkpoint training flag is " + std::to_string(has_training));
  if (has_training == 1) {
    TrainingState t;
    t.next_epoch = static_cast<int>(r.u32());
    t.adam_step = r.u64();
    try {
      t.config = train_config_from_text(r.text());
    } catch (const UsageError& e) {
      throw FormatError(std::string("checkpoint train config: ") + e.what());
    }
    t.first_moments = r.records();
    t.second_moments = r.records();
    c.training = std::move(t);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint data");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(checkpoint);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

Checkpoint capture(TSGCNet<float>& model) {
  Checkpoint c;
  c.config = model.config();
  for (auto& p : model.parameters()) {
    const auto& v = p.tensor.value();
    c.records.push_back({p.name, p.tensor.shape(), std::vector<float>(v.data(), v.data() + v.size())});
  }
  for (auto& b : model.buffers()) {
    const auto& v = *b.values;
    c.records.push_back({b.name, {v.size()}, std::vector<float>(v.data(), v.data() + v.size())});
  }
  return c;
}

void restore(const Checkpoint& checkpoint, TSGCNet<float>& model) {
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : checkpoint.records) {
    if (!by_name.emplace(r.name, &r).second) throw FormatError("duplicate checkpoint record '" + r.name + "'");
  }
  auto take = [&](const std::string& name, const Shape& shape) -> const TensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint has no record '" + name + "'");
    if (it->second->shape != shape) {
      throw FormatError("checkpoint record '" + name + "' has shape " + shape_string(it->second->shape) +
                        ", model expects " + shape_string(shape));
    }
    const TensorRecord& r = *it->second;
    by_name.erase(it);
    return r;
  };
  for (auto& p : model.parameters()) {
    const auto& r = take(p.name, p.tensor.shape());
    std::memcpy(p.tensor.mutable_value().data(), r.values.data(), r.values.size() * sizeof(float));
  }
  for (auto& b : model.buffers()) {
    const auto& r = take(b.name, {b.values->size()});
    std::memcpy(b.values->data(), r.values.data(), r.values.size() * sizeof(float));
  }
  if (!by_name.empty()) throw FormatError("checkpoint record '" + by_name.begin()->first + "' matches no model tensor");
}

TSGCNet<float> model_from_checkpoint(const Checkpoint& checkpoint) {
  TSGCNet<float> model = build_variant(checkpoint.config);
  restore(checkpoint, model);
  return model;
}

}  // namespace tsgc
