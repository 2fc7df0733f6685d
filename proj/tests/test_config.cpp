#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "support.hpp"
#include "yctnet/config.hpp"
#include "yctnet/error.hpp"

using namespace yct;
using nlohmann::json;

namespace {

std::string validation_message(const ModelConfig& c) {
  try {
    validate(c);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Presets, Large96Defaults) {
  const auto c = preset("paper-96");
  EXPECT_EQ(c.input_size, (Shape3{96, 96, 96}));
  EXPECT_EQ(c.patch_size, 16);
  EXPECT_EQ(c.embed_dim, 768);
  EXPECT_EQ(c.depth, 12);
  EXPECT_EQ(c.tap_layers, (std::vector<int>{3, 6, 9, 12}));
  EXPECT_EQ(c.block_counts, (std::vector<int>{4, 16}));
  EXPECT_EQ(c.mixing.pairs, (std::vector<StagePair>{{2, 2}, {3, 3}}));
  EXPECT_NO_THROW(validate(c));
}

TEST(Presets, DeskDefaults) {
  const auto c = preset("desk-64");
  EXPECT_EQ(c.input_size, (Shape3{64, 64, 64}));
  EXPECT_EQ(c.patch_size, 4);
  EXPECT_EQ(c.embed_dim, 96);
  EXPECT_EQ(c.depth, 6);
  EXPECT_EQ(c.heads, 3);
  EXPECT_EQ(c.block_counts, (std::vector<int>{2, 4}));
  EXPECT_EQ(c.num_classes, 4);
  EXPECT_NO_THROW(validate(c));
  EXPECT_THROW(preset("desk-128"), ConfigError);
}

TEST(Presets, ShippedFilesMatchBuiltins) {
  for (const std::string name : {"paper-96", "desk-64"}) {
    const auto doc = load_config(std::filesystem::path(YCT_CONFIG_DIR) / (name + ".json"));
    EXPECT_EQ(to_json(doc.model), to_json(preset(name))) << name;
  }
}

TEST(Presets, ChannelLaw) {
  const auto c = preset("paper-96");
  EXPECT_EQ(c.local_channels(2), 64);
  EXPECT_EQ(c.local_channels(3), 128);
  EXPECT_EQ(c.global_channels(1), 32);
  EXPECT_EQ(c.global_channels(4), 256);
  EXPECT_EQ(c.resolved_decoder_channels(), (std::vector<int>{128, 64, 32, 16}));
  EXPECT_EQ(c.spatial_at(2), (Shape3{24, 24, 24}));
  EXPECT_EQ(c.token_grid(), (Shape3{6, 6, 6}));
}

struct PyramidCase {
  int64_t size;
  int patch;
  ProjectionMode mode;
  bool valid;
  const char* field;  // expected field named in the message
};

class PyramidTruthTable : public ::testing::TestWithParam<PyramidCase> {};

TEST_P(PyramidTruthTable, Verdict) {
  const auto p = GetParam();
  auto c = preset("desk-64");
  c.input_size = {p.size, p.size, p.size};
  c.patch_size = p.patch;
  c.projection = p.mode;
  const auto msg = validation_message(c);
  if (p.valid) {
    EXPECT_EQ(msg, "");
  } else {
    ASSERT_NE(msg, "");
    EXPECT_EQ(msg.rfind(p.field, 0), 0u) << msg;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Sizes, PyramidTruthTable,
    ::testing::Values(PyramidCase{96, 16, ProjectionMode::strict, true, ""},
                      PyramidCase{32, 16, ProjectionMode::strict, true, ""},
                      PyramidCase{48, 16, ProjectionMode::strict, true, ""},
                      PyramidCase{32, 8, ProjectionMode::strict, false, "patch_size"},
                      PyramidCase{32, 2, ProjectionMode::strict, false, "patch_size"},
                      PyramidCase{64, 4, ProjectionMode::strict, false, "patch_size"},
                      PyramidCase{32, 8, ProjectionMode::relaxed, true, ""},
                      PyramidCase{64, 4, ProjectionMode::relaxed, true, ""},
                      PyramidCase{16, 4, ProjectionMode::relaxed, true, ""},
                      PyramidCase{64, 32, ProjectionMode::relaxed, true, ""},
                      PyramidCase{64, 6, ProjectionMode::relaxed, false, "patch_size"},
                      PyramidCase{64, 128, ProjectionMode::relaxed, false, "patch_size"},
                      PyramidCase{40, 8, ProjectionMode::relaxed, false, "input_size"},
                      PyramidCase{24, 8, ProjectionMode::relaxed, false, "input_size"},
                      PyramidCase{8, 4, ProjectionMode::relaxed, false, "input_size"}),
    [](const ::testing::TestParamInfo<PyramidCase>& info) {
      const auto& p = info.param;
      return "s" + std::to_string(p.size) + "_p" + std::to_string(p.patch) +
             (p.mode == ProjectionMode::strict ? "_strict" : "_relaxed");
    });

TEST(Validator, NamesFieldAndConstraint) {
  auto c = preset("desk-64");
  c.heads = 5;
  EXPECT_NE(validation_message(c).find("heads"), std::string::npos);

  c = preset("desk-64");
  c.tap_layers = {2, 3, 5, 7};
  EXPECT_NE(validation_message(c).find("tap_layers"), std::string::npos);
  c.tap_layers = {3, 2, 5, 6};
  EXPECT_NE(validation_message(c).find("strictly increasing"), std::string::npos);
  c.tap_layers = {2, 3, 5};
  EXPECT_NE(validation_message(c).find("4 layers"), std::string::npos);

  c = preset("desk-64");
  c.num_classes = 1;
  EXPECT_NE(validation_message(c).find("num_classes"), std::string::npos);

  c = preset("desk-64");
  c.block_counts = {4};
  EXPECT_NE(validation_message(c).find("block_counts"), std::string::npos);
  c.block_counts = {4, 0};
  EXPECT_NE(validation_message(c).find("block_counts"), std::string::npos);
}

TEST(Validator, MixingPairs) {
  auto c = preset("paper-96");
  c.mixing.pairs = {{3, 2}};  // 12^3 vs 24^3
  auto msg = validation_message(c);
  EXPECT_NE(msg.find("mixing.pairs"), std::string::npos) << msg;
  EXPECT_NE(msg.find("12x12x12"), std::string::npos) << msg;
  EXPECT_NE(msg.find("24x24x24"), std::string::npos) << msg;

  c.mixing.align = MixAlign::resample;
  EXPECT_EQ(validation_message(c), "");

  c.mixing.pairs = {{2, 2}, {3, 2}};
  EXPECT_NE(validation_message(c).find("more than once"), std::string::npos);

  c.mixing.pairs = {{4, 4}};
  EXPECT_NE(validation_message(c).find("local stage"), std::string::npos);

  c.mixing.pairs = {};
  EXPECT_NE(validation_message(c).find("at least one"), std::string::npos);
}

TEST(Validator, SelfAttentionTokenGuard) {
  auto c = preset("desk-64");
  c.input_size = {256, 256, 256};
  c.patch_size = 16;
  c.mixing.method = MixMethod::self_attention;
  c.mixing.pairs = {{2, 2}};  // 64^3 tokens
  EXPECT_NE(validation_message(c).find("self_attention"), std::string::npos);
  c.input_size = {128, 128, 128};  // 32^3 tokens: allowed
  EXPECT_EQ(validation_message(c), "");
}

TEST(Validator, TrainConfig) {
  const auto m = preset("desk-64");
  TrainConfig t;
  EXPECT_NO_THROW(validate(t, m));
  t.lr = 0.0;
  EXPECT_NO_THROW(validate(t, m));
  t.lr = -1.0;
  EXPECT_THROW(validate(t, m), ConfigError);
  t = {};
  t.roi_shape = Shape3{32, 32, 32};
  EXPECT_THROW(validate(t, m), ConfigError);
  t.roi_shape = Shape3{64, 64, 64};
  EXPECT_NO_THROW(validate(t, m));
  t = {};
  t.overlap = 1.0;
  EXPECT_THROW(validate(t, m), ConfigError);
  t = {};
  t.optimizer = "sgd";
  EXPECT_THROW(validate(t, m), ConfigError);
}

TEST(ConfigJson, RoundTrip) {
  ConfigDocument doc{preset("desk-64"), TrainConfig{}};
  doc.model.mixing.method = MixMethod::hadamard;
  doc.train.lr = 3e-4;
  doc.train.roi_shape = Shape3{64, 64, 64};
  const auto j = to_document(doc);
  EXPECT_EQ(j.at("version"), 1);
  const auto back = parse_config_document(j);
  EXPECT_EQ(to_document(back), j);
}

TEST(ConfigJson, UnknownKeysRejected) {
  auto j = to_document({preset("desk-64"), TrainConfig{}});
  j["model"]["tap_layer"] = {1, 2, 3, 4};
  try {
    parse_config_document(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.tap_layer"), std::string::npos) << e.what();
  }
  j = to_document({preset("desk-64"), TrainConfig{}});
  j["extra"] = 1;
  EXPECT_THROW(parse_config_document(j), ConfigError);
}

TEST(ConfigJson, VersionRequired) {
  auto j = to_document({preset("desk-64"), TrainConfig{}});
  j.erase("version");
  EXPECT_THROW(parse_config_document(j), ConfigError);
  j["version"] = 2;
  EXPECT_THROW(parse_config_document(j), ConfigError);
}

TEST(ConfigJson, WrongTypesNameTheField) {
  auto j = to_document({preset("desk-64"), TrainConfig{}});
  j["model"]["depth"] = "six";
  try {
    parse_config_document(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos) << e.what();
  }
}

TEST(ConfigJson, ScalarInputSizeAndPartialDocument) {
  const json j = {{"version", 1}, {"model", {{"input_size", 32}, {"patch_size", 16}}}};
  const auto doc = parse_config_document(j);
  EXPECT_EQ(doc.model.input_size, (Shape3{32, 32, 32}));
  EXPECT_EQ(doc.model.embed_dim, 768);
}

TEST(ConfigJson, LoadErrors) {
  const auto dir = yct::test::scratch("cfg");
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "none.json"), ConfigError);
}

TEST(MixMethods, NamesRoundTrip) {
  for (auto m : {MixMethod::addition, MixMethod::averaging, MixMethod::concatenation, MixMethod::hadamard,
                 MixMethod::self_attention})
    EXPECT_EQ(parse_mix_method(to_string(m)), m);
  EXPECT_EQ(display_name(MixMethod::hadamard), "Hadamard Product");
  EXPECT_THROW(parse_mix_method("sum"), ConfigError);
}
