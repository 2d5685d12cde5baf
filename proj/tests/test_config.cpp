#include <doctest.h>

#include "test_util.hpp"
#include "tsgc/config_io.hpp"
#include "tsgc/errors.hpp"
#include "tsgc/experiment.hpp"

#include <fstream>

using namespace tsgc;

TEST_CASE("parse key values") {
  auto kv = parse_key_values("# comment\n\nk = 8\n  epochs=3   # trailing\nstream_widths = 1, 2,3\n");
  CHECK(kv.size() == 3);
  CHECK(kv.at("k") == "8");
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("stream_widths") == "1, 2,3");
}

TEST_CASE("missing equals sign names the line") {
  try {
    parse_key_values("k = 1\nbogus\n");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("apply values to both configs") {
  ModelConfig m;
  TrainConfig t;
  apply_key_values(parse_key_values("k = 8\nstream_widths = 4,5\nstreams = coords_only\nc_stream_agg = maxpool\n"
                                    "fusion_level = high\ninclude_self = true\nepochs = 3\nlr = 0.002\n"
                                    "augmentation = fixed\nloss_reduction = sum\ncenter = false\n"
                                    "recalibrate_bn = false\nmodel_seed = 5\nseed = 6\n"),
                   m, t);
  CHECK(m.k == 8);
  CHECK(m.stream_widths == std::vector<Index>{4, 5});
  CHECK(m.streams == StreamSelection::kCoordsOnly);
  CHECK(m.c_stream_agg == Aggregation::kMaxPool);
  CHECK(m.include_self);
  CHECK(m.seed == 5);
  CHECK(t.epochs == 3);
  CHECK(t.lr == 0.002);
  CHECK(t.augmentation == AugmentationMode::kFixed);
  CHECK(t.loss_reduction == Reduction::kSum);
  CHECK_FALSE(t.center);
  CHECK_FALSE(t.recalibrate_bn);
  CHECK(t.seed == 6);
}

TEST_CASE("unknown keys and bad values") {
  ModelConfig m;
  TrainConfig t;
  try {
    apply_key_value("widths", "3", m, t);
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("unknown config key 'widths'") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_key_value("k", "eight", m, t), UsageError);
  CHECK_THROWS_AS(apply_key_value("streams", "three", m, t), UsageError);
  CHECK_THROWS_AS(apply_key_value("center", "maybe", m, t), UsageError);
  CHECK_THROWS_AS(apply_key_value("epochs", "3x", m, t), UsageError);
}

TEST_CASE("text forms round trip exactly") {
  ModelConfig m;
  m.leaky_slope = 0.1 + 0.2;
  m.attention_hidden = {7, 3};
  m.n_stream_agg = Aggregation::kAttention;
  TrainConfig t;
  t.lr = 1.0 / 3.0;
  t.rotation_range = 0.5235987755982988;
  t.augmentation = AugmentationMode::kNone;
  CHECK(model_config_from_text(to_text(m)) == m);
  CHECK(train_config_from_text(to_text(t)) == t);
  CHECK(model_config_from_text(to_text(ModelConfig{})) == ModelConfig{});
  CHECK_THROWS_AS(model_config_from_text("epochs = 3\n"), UsageError);
}

TEST_CASE("reading a config file") {
  TempDir dir;
  std::ofstream(dir / "c.cfg") << "k = 12\n";
  auto kv = read_key_values(dir / "c.cfg");
  CHECK(kv.at("k") == "12");
  CHECK_THROWS_AS(read_key_values(dir / "missing.cfg"), IoError);
}

TEST_CASE("shipped desk config matches the built-in desk defaults") {
  ModelConfig m;
  TrainConfig t;
  apply_key_values(read_key_values(std::filesystem::path(TSGC_CONFIG_DIR) / "desk.cfg"), m, t);
  CHECK(m == desk_model_config());
  CHECK(t == desk_train_config());
}
