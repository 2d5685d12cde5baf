#include <doctest.h>

#include <cstring>
#include <fstream>

#include "test_util.hpp"
#include "tsgc/checkpoint.hpp"
#include "tsgc/config_io.hpp"
#include "tsgc/errors.hpp"

using namespace tsgc;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.num_classes = 3;
  c.k = 3;
  c.stream_widths = {4, 4};
  c.fusion_width = 6;
  c.head_widths = {5};
  return c;
}

std::string le32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string le64(std::uint64_t v) {
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string f32(float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  return le32(bits);
}

}  // namespace

TEST_CASE("byte layout of a one-record checkpoint") {
  Checkpoint c;
  c.config = tiny();
  c.records.push_back({"w", {2}, {1.5f, -2.0f}});
  const std::string text = to_text(c.config);
  const std::string expected = std::string("TSGC") + le32(1) + le64(text.size()) + text + le64(1) + le64(1) + "w" +
                               le32(1) + le64(2) + f32(1.5f) + f32(-2.0f) + std::string(1, '\0');
  CHECK(encode_checkpoint(c) == expected);
  CHECK(decode_checkpoint(expected) == c);
}

TEST_CASE("model state round trips through bytes and files") {
  TempDir dir;
  TSGCNet<float> model = build_variant(tiny());
  Checkpoint c = capture(model);
  CHECK(c.records.size() == model.parameters().size() + model.buffers().size());
  CHECK(c.records.back().name.find(".running_var") != std::string::npos);

  TrainingState t;
  t.next_epoch = 7;
  t.adam_step = 123;
  t.config.lr = 0.1 + 0.2;
  t.first_moments.push_back({"a", {3}, {1, 2, 3}});
  t.second_moments.push_back({"a", {3}, {4, 5, 6}});
  c.training = t;
  CHECK(decode_checkpoint(encode_checkpoint(c)) == c);

  save_checkpoint(c, dir / "m.tsgc");
  CHECK(load_checkpoint(dir / "m.tsgc") == c);
  CHECK_FALSE(std::filesystem::exists(dir / "m.tsgc.tmp"));

  ModelConfig other = tiny();
  other.seed = 99;
  TSGCNet<float> fresh = build_variant(other);
  restore(c, fresh);
  CHECK(capture(fresh).records == c.records);
  TSGCNet<float> rebuilt = model_from_checkpoint(c);
  CHECK(capture(rebuilt).records == c.records);
}

TEST_CASE("corrupt bytes are rejected") {
  TSGCNet<float> model = build_variant(tiny());
  const std::string good = encode_checkpoint(capture(model));

  std::string bad = good;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("TSGC") != std::string::npos);
  }
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(good.substr(0, cut)), FormatError);
  }
  CHECK_THROWS_AS(decode_checkpoint(good + "x"), FormatError);
}

TEST_CASE("restore checks names and shapes") {
  TSGCNet<float> model = build_variant(tiny());
  const Checkpoint good = capture(model);

  Checkpoint c = good;
  c.records.pop_back();
  CHECK_THROWS_AS(restore(c, model), FormatError);
  c = good;
  c.records.push_back({"extra", {1}, {0}});
  CHECK_THROWS_AS(restore(c, model), FormatError);
  c = good;
  c.records[0].shape = {c.records[0].shape[0] + 1, c.records[0].shape[1]};
  c.records[0].values.resize(static_cast<std::size_t>(shape_size(c.records[0].shape)));
  CHECK_THROWS_AS(restore(c, model), FormatError);
  c = good;
  c.records[1] = c.records[0];
  CHECK_THROWS_AS(restore(c, model), FormatError);
}

TEST_CASE("missing file") {
  TempDir dir;
  CHECK_THROWS_AS(load_checkpoint(dir / "none.tsgc"), IoError);
  std::ofstream(dir / "junk.tsgc") << "hello world";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.tsgc"), FormatError);
}
