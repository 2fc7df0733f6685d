#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "yctnet/cfmm.hpp"
#include "yctnet/decoder.hpp"
#include "yctnet/error.hpp"
#include "yctnet/global_encoder.hpp"
#include "yctnet/local_encoder.hpp"
#include "yctnet/model.hpp"

using namespace yct;
using yct::test::tiny_config;

TEST(LocalInput, ReplicatesChannels) {
  auto x = torch::randn({1, 1, 16, 16, 16});
  auto xl = prepare_local_input(x);
  ASSERT_EQ(xl.sizes(), (std::vector<int64_t>{1, 3, 16, 16, 16}));
  for (int c = 0; c < 3; ++c) EXPECT_TRUE(torch::equal(xl.select(1, c), x.select(1, 0)));

  auto x2 = torch::randn({1, 2, 4, 4, 4});
  auto xl2 = prepare_local_input(x2);
  ASSERT_EQ(xl2.size(1), 6);
  for (int c = 0; c < 6; ++c) EXPECT_TRUE(torch::equal(xl2.select(1, c), x2.select(1, c % 2)));
  EXPECT_EQ(prepare_local_input(torch::zeros({1, 1, 4, 4, 4})).abs().sum().item<float>(), 0.0f);
}

TEST(LocalEncoder, StageShapes) {
  torch::NoGradGuard ng;
  auto c = preset("paper-96");
  c.input_size = {32, 32, 32};
  ResNet3dEncoder enc(c);
  const auto f = enc.forward(prepare_local_input(torch::randn({1, 1, 32, 32, 32})));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].data.sizes(), (std::vector<int64_t>{1, 64, 8, 8, 8}));
  EXPECT_EQ(f[1].data.sizes(), (std::vector<int64_t>{1, 128, 4, 4, 4}));
  EXPECT_EQ(f[0].stage, 2);
  EXPECT_EQ(f[1].stage, 3);
}

TEST(LocalEncoder, IndivisibleAxisNamed) {
  torch::NoGradGuard ng;
  ResNet3dEncoder enc(tiny_config());
  try {
    enc.forward(torch::randn({1, 3, 16, 12, 16}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("H"), std::string::npos) << e.what();
  }
}

namespace {

// Conv weights (no bias) + affine instance-norm for a 3x3x3 basic block.
int64_t basic_block_params(int64_t in, int64_t out, bool projection) {
  int64_t n = in * out * 27 + 2 * out + out * out * 27 + 2 * out;
  if (projection) n += in * out;
  return n;
}

}  // namespace

TEST(LocalEncoder, ParameterCountMatchesFormula) {
  auto c = tiny_config();
  c.block_counts = {2, 2};
  ResNet3dEncoder enc(c);
  const int64_t b = c.base_channels;
  int64_t expected = (3 * b * 27 + 2 * b) + (b * b * 27 + 2 * b);  // stem
  expected += basic_block_params(b, 2 * b, true) + basic_block_params(2 * b, 2 * b, false);
  expected += basic_block_params(2 * b, 4 * b, true) + basic_block_params(4 * b, 4 * b, false);
  EXPECT_EQ(count_parameters(enc), expected);

  auto deeper = c;
  deeper.block_counts = {2, 4};
  ResNet3dEncoder enc2(deeper);
  EXPECT_GT(count_parameters(enc2), count_parameters(enc));
  ResNet3dEncoder enc3(c);
  EXPECT_EQ(count_parameters(enc3), count_parameters(enc));
}

TEST(LocalEncoder, BlockCountsChangeParamsNotShapes) {
  torch::NoGradGuard ng;
  auto a = preset("paper-96");
  a.input_size = {32, 32, 32};
  auto b = a;
  b.block_counts = {2, 2};
  ResNet3dEncoder ea(a), eb(b);
  const auto x = prepare_local_input(torch::randn({1, 1, 32, 32, 32}));
  const auto fa = ea.forward(x);
  const auto fb = eb.forward(x);
  for (size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i].data.sizes(), fb[i].data.sizes());
  EXPECT_GT(count_parameters(ea), count_parameters(eb));
}

TEST(ResidualBlock, ZeroLastNormIsIdentity) {
  torch::NoGradGuard ng;
  ResidualBlock block(8, 8, 1, /*zero_init=*/true);
  const auto x = torch::randn({1, 8, 6, 6, 6});
  EXPECT_TRUE(torch::equal(block(x), x));
}

TEST(ResidualBlock, ShapePreservingAndFinite) {
  torch::NoGradGuard ng;
  for (int seed = 0; seed < 100; ++seed) {
    torch::manual_seed(seed);
    ResidualBlock block(4, 4);
    const auto x = torch::randn({1, 4, 3, 5, 4});
    const auto y = block(x);
    ASSERT_EQ(y.sizes(), x.sizes());
    ASSERT_TRUE(torch::isfinite(y).all().item<bool>()) << seed;
  }
}

TEST(ResidualBlock, ProjectionOnShapeChange) {
  ResidualBlock same(8, 8), wider(8, 16), strided(8, 8, 2);
  EXPECT_FALSE(same->has_projection());
  EXPECT_TRUE(wider->has_projection());
  EXPECT_TRUE(strided->has_projection());
}

TEST(PatchEmbedding, GridAndZeroLinearity) {
  torch::NoGradGuard ng;
  PatchEmbedding pe(1, 16, 768, Shape3{6, 6, 6}, true);
  const auto tg = pe(torch::randn({1, 1, 96, 96, 96}));
  EXPECT_EQ(tg.grid, (Shape3{6, 6, 6}));
  EXPECT_EQ(tg.tokens.sizes(), (std::vector<int64_t>{1, 216, 768}));

  PatchEmbedding small(1, 8, 16, Shape3{4, 4, 4}, true);
  small->pos.zero_();
  small->proj->bias.zero_();
  const auto z = small(torch::zeros({1, 1, 32, 32, 32}));
  EXPECT_EQ(z.seq_len(), 64);
  EXPECT_EQ(z.tokens.abs().max().item<float>(), 0.0f);
  EXPECT_THROW(small(torch::zeros({1, 1, 32, 30, 32})), ShapeError);
}

TEST(PatchEmbedding, EquivalentToFlattenedPatchLinearMap) {
  torch::NoGradGuard ng;
  PatchEmbedding pe(2, 4, 5, Shape3{2, 2, 2}, false);
  const auto x = torch::randn({1, 2, 8, 8, 8}, torch::kFloat64);
  pe->to(torch::kFloat64);
  const auto tg = pe(x);
  const auto w = pe->proj->weight.reshape({5, -1});  // [K, C*P^3]
  int t = 0;
  for (int d = 0; d < 2; ++d)
    for (int h = 0; h < 2; ++h)
      for (int ww = 0; ww < 2; ++ww, ++t) {
        using torch::indexing::Slice;
        const auto patch = x.index({0, Slice(), Slice(4 * d, 4 * d + 4), Slice(4 * h, 4 * h + 4),
                                    Slice(4 * ww, 4 * ww + 4)}).reshape({-1});
        const auto expect = torch::mv(w, patch) + pe->proj->bias;
        EXPECT_TRUE(torch::allclose(tg.tokens[0][t], expect, 1e-12, 1e-12));
      }
}

TEST(Attention, RowsAreSimplex) {
  torch::NoGradGuard ng;
  MultiHeadSelfAttention attn(24, 3);
  torch::Tensor w;
  attn(torch::randn({2, 50, 24}) * 3.0, &w);
  ASSERT_EQ(w.sizes(), (std::vector<int64_t>{2, 3, 50, 50}));
  EXPECT_LT((w.sum(-1) - 1.0).abs().max().item<float>(), 1e-6);
  EXPECT_GE(w.min().item<float>(), 0.0f);
}

TEST(Attention, FusedPathMatchesExplicit) {
  torch::NoGradGuard ng;
  MultiHeadSelfAttention attn(24, 3);
  attn->to(torch::kFloat64);
  const auto x = torch::randn({1, 40, 24}, torch::kFloat64);
  torch::Tensor w;
  EXPECT_TRUE(torch::allclose(attn(x), attn(x, &w), 1e-10, 1e-10));
}

TEST(ViT, TapsHaveIdenticalShapes) {
  torch::NoGradGuard ng;
  ViTTrunk trunk(48, 12, 3, 4.0, std::vector<int>{3, 6, 9, 12});
  const auto taps = trunk(torch::randn({1, 27, 48}));
  ASSERT_EQ(taps.size(), 4u);
  for (const auto& t : taps) EXPECT_EQ(t.sizes(), (std::vector<int64_t>{1, 27, 48}));
}

TEST(ViT, ZeroedBranchesGiveIdentityTaps) {
  torch::NoGradGuard ng;
  ViTTrunk trunk(16, 2, 2, 2.0, std::vector<int>{1, 2});
  for (auto& b : *trunk->blocks) b->as<TransformerBlockImpl>()->zero_residual_branches();
  const auto x = torch::randn({1, 8, 16});
  const auto taps = trunk(x);
  for (const auto& t : taps) EXPECT_TRUE(torch::equal(t, x));
}

TEST(ViT, PermutationEquivariantWithoutPositions) {
  torch::NoGradGuard ng;
  ViTTrunk trunk(24, 3, 3, 4.0, std::vector<int>{1, 2, 3});
  trunk->to(torch::kFloat64);
  const auto x = torch::randn({1, 30, 24}, torch::kFloat64);
  const auto perm = torch::randperm(30, torch::kLong);
  const auto a = trunk(x);
  const auto b = trunk(x.index_select(1, perm));
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(torch::allclose(a[i].index_select(1, perm), b[i], 1e-10, 1e-10)) << "tap " << i;
  }
}

TEST(ProjectionSteps, RelaxedLaw) {
  EXPECT_EQ(projection_steps(16, 1), 3);
  EXPECT_EQ(projection_steps(16, 4), 0);
  EXPECT_EQ(projection_steps(4, 2), 0);
  EXPECT_EQ(projection_steps(4, 4), -2);
  EXPECT_EQ(projection_steps(8, 4), -1);
}

TEST(GlobalEncoder, PyramidShapes) {
  torch::NoGradGuard ng;
  auto c = preset("paper-96");
  c.embed_dim = 48;
  c.heads = 3;
  ViTGlobalEncoder enc(c);
  const auto f = enc.forward(torch::randn({1, 1, 96, 96, 96}));
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0].data.sizes(), (std::vector<int64_t>{1, 32, 48, 48, 48}));
  EXPECT_EQ(f[1].data.sizes(), (std::vector<int64_t>{1, 64, 24, 24, 24}));
  EXPECT_EQ(f[2].data.sizes(), (std::vector<int64_t>{1, 128, 12, 12, 12}));
  EXPECT_EQ(f[3].data.sizes(), (std::vector<int64_t>{1, 256, 6, 6, 6}));
}

TEST(GlobalEncoder, GradientReachesPatchEmbeddingFromFG1) {
  auto c = tiny_config();
  ViTGlobalEncoder enc(c);
  const auto f = enc.forward(torch::randn({1, 1, 16, 16, 16}));
  f[0].data.pow(2).sum().backward();
  EXPECT_GT(enc.embed->proj->weight.grad().abs().sum().item<float>(), 0.0f);
}

// ---------------------------------------------------------------------------
// CFMM

namespace {

std::vector<FeatureMap> maps(Branch b, std::initializer_list<std::pair<int, std::vector<int64_t>>> specs) {
  std::vector<FeatureMap> out;
  for (const auto& [stage, shape] : specs) out.push_back({torch::randn(shape), stage, b});
  return out;
}

}  // namespace

TEST(Cfmm, SelectPairsDefault) {
  const auto local = maps(Branch::local, {{2, {1, 64, 24, 24, 24}}, {3, {1, 128, 12, 12, 12}}});
  const auto global = maps(Branch::global, {{1, {1, 32, 48, 48, 48}},
                                            {2, {1, 64, 24, 24, 24}},
                                            {3, {1, 128, 12, 12, 12}},
                                            {4, {1, 256, 6, 6, 6}}});
  MixSpec spec;
  EXPECT_EQ(select_pairs(local, global, spec), (std::vector<StagePair>{{2, 2}, {3, 3}}));
  spec.pairs = {{2, 2}};
  EXPECT_EQ(select_pairs(local, global, spec).size(), 1u);
  spec.pairs = {{2, 3}};
  EXPECT_THROW(select_pairs(local, global, spec), ConfigError);
  spec.align = MixAlign::resample;
  EXPECT_NO_THROW(select_pairs(local, global, spec));
}

TEST(Cfmm, SelectPairsShiftedGlobalFails) {
  const auto local = maps(Branch::local, {{2, {1, 64, 24, 24, 24}}, {3, {1, 128, 12, 12, 12}}});
  const auto global = maps(Branch::global, {{2, {1, 64, 12, 12, 12}}, {3, {1, 128, 6, 6, 6}}});
  try {
    select_pairs(local, global, MixSpec{});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("24x24x24"), std::string::npos) << msg;
    EXPECT_NE(msg.find("12x12x12"), std::string::npos) << msg;
  }
}

TEST(Cfmm, AdditionWorkedExample) {
  PairMixer mix(MixMethod::addition, 1, 1);
  const auto fl = torch::tensor({1.f, 2.f, 3.f, 4.f}).view({1, 1, 1, 2, 2});
  const auto fg = torch::tensor({3.f, 4.f, 5.f, 6.f}).view({1, 1, 1, 2, 2});
  EXPECT_TRUE(torch::equal(mix(fl, fg), torch::tensor({4.f, 6.f, 8.f, 10.f}).view({1, 1, 1, 2, 2})));
  EXPECT_TRUE(torch::equal(mix(fl, torch::zeros_like(fg)), fl));
}

TEST(Cfmm, ProjectionWhenChannelsDiffer) {
  for (auto m : {MixMethod::addition, MixMethod::averaging, MixMethod::concatenation, MixMethod::hadamard,
                 MixMethod::self_attention}) {
    PairMixer mix(m, 6, 8);
    EXPECT_TRUE(mix->has_projection());
    const auto y = mix(torch::randn({1, 6, 4, 4, 4}), torch::randn({1, 8, 4, 4, 4}));
    EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 8, 4, 4, 4}));
    PairMixer same(m, 8, 8);
    EXPECT_FALSE(same->has_projection());
  }
}

TEST(Cfmm, CommutativeMethods) {
  const auto a = torch::randn({1, 8, 4, 4, 4});
  const auto b = torch::randn({1, 8, 4, 4, 4});
  for (auto m : {MixMethod::addition, MixMethod::averaging, MixMethod::hadamard}) {
    PairMixer mix(m, 8, 8);
    EXPECT_TRUE(torch::equal(mix(a, b), mix(b, a)));
  }
}

TEST(Cfmm, ResampleAlignment) {
  PairMixer mix(MixMethod::addition, 8, 16, MixAlign::resample);
  const auto y = mix(torch::randn({1, 8, 8, 8, 8}), torch::randn({1, 16, 4, 4, 4}));
  EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 16, 4, 4, 4}));
  PairMixer strict(MixMethod::addition, 8, 16);
  EXPECT_THROW(strict(torch::randn({1, 8, 8, 8, 8}), torch::randn({1, 16, 4, 4, 4})), ShapeError);
}

TEST(Cfmm, ModuleTracesMixedMaps) {
  torch::NoGradGuard ng;
  const auto local = maps(Branch::local, {{2, {1, 4, 4, 4, 4}}, {3, {1, 8, 2, 2, 2}}});
  const auto global = maps(Branch::global, {{2, {1, 4, 4, 4, 4}}, {3, {1, 8, 2, 2, 2}}});
  CrossFeatureMixer cfmm(MixSpec{}, std::vector<int64_t>{0, 0, 4, 8}, std::vector<int64_t>{0, 2, 4, 8, 16});
  ShapeTrace trace;
  const auto out = cfmm(local, global, &trace);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].stage, 2);
  EXPECT_EQ(out[1].branch, Branch::mixed);
  ASSERT_NE(trace.find("F_mix22"), nullptr);
  ASSERT_NE(trace.find("F_mix33"), nullptr);
}

// ---------------------------------------------------------------------------
// Decoder and full model

TEST(Decoder, PredictLabelsTiesAndOneHot) {
  auto p = torch::zeros({3, 1, 1, 2});
  p.index_put_({0, 0, 0, 0}, 0.5f);
  p.index_put_({1, 0, 0, 0}, 0.5f);
  p.index_put_({2, 0, 0, 1}, 1.0f);
  const auto l = predict_labels(p);
  EXPECT_EQ(l.scalar_type(), torch::kInt32);
  EXPECT_EQ(l[0][0][0].item<int>(), 0);
  EXPECT_EQ(l[0][0][1].item<int>(), 2);
}

TEST(Decoder, PredictLabelsMatchesLoopOracle) {
  torch::manual_seed(1);
  const auto p = torch::softmax(torch::randn({5, 3, 4, 6}), 0);
  const auto l = predict_labels(p);
  auto acc = p.accessor<float, 4>();
  for (int d = 0; d < 3; ++d)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 6; ++w) {
        int best = 0;
        for (int c = 1; c < 5; ++c)
          if (acc[c][d][h][w] > acc[best][d][h][w]) best = c;
        ASSERT_EQ(l[d][h][w].item<int>(), best);
      }
}

TEST(Decoder, OffPyramidSkipNamesLevel) {
  torch::NoGradGuard ng;
  auto c = tiny_config();
  Decoder dec(c);
  const int64_t b = c.base_channels;
  DecoderInputs in{torch::randn({1, 8 * b, 1, 1, 1}), torch::randn({1, 4 * b, 2, 2, 2}),
                   torch::randn({1, 2 * b, 4, 4, 4}), torch::randn({1, b, 8, 8, 8}), torch::randn({1, 1, 16, 16, 16})};
  EXPECT_EQ(dec(in).sizes(), (std::vector<int64_t>{1, 4, 16, 16, 16}));
  in.skip2 = torch::randn({1, 2 * b, 5, 4, 4});
  try {
    dec(in);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("level 2"), std::string::npos) << e.what();
  }
}

TEST(Model, ProbabilitiesSumToOne) {
  torch::NoGradGuard ng;
  auto model = build_model(tiny_config(), 0);
  const auto p = model->probabilities(torch::randn({1, 1, 16, 16, 16}));
  EXPECT_EQ(p.sizes(), (std::vector<int64_t>{1, 4, 16, 16, 16}));
  EXPECT_LT((p.sum(1) - 1.0).abs().max().item<float>(), 1e-6);
}

TEST(Model, RejectsWrongInput) {
  torch::NoGradGuard ng;
  auto model = build_model(tiny_config(), 0);
  EXPECT_THROW(model->forward(torch::randn({1, 1, 32, 32, 32})), ShapeError);
  EXPECT_THROW(model->forward(torch::randn({1, 2, 16, 16, 16})), ShapeError);
}

TEST(Model, SameSeedSameWeights) {
  auto a = build_model(tiny_config(), 4);
  auto b = build_model(tiny_config(), 4);
  auto pa = a->parameters();
  auto pb = b->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Model, EverySkipIsWired) {
  torch::NoGradGuard ng;
  auto model = build_model(tiny_config(), 0);
  const auto x = torch::randn({1, 1, 16, 16, 16});
  const auto base = model->forward(x);
  for (int level = 1; level <= 3; ++level) {
    ForwardOptions o;
    o.zero_skip_level = level;
    EXPECT_FALSE(torch::allclose(model->forward(x, o), base)) << "level " << level;
  }
}

TEST(Model, ParameterGroupsCoverEverything) {
  auto c = tiny_config();
  c.mixing.method = MixMethod::concatenation;
  auto model = build_model(c, 0);
  const auto groups = count_parameters_by_group(*model);
  EXPECT_EQ(groups.size(), 4u);
  int64_t total = 0;
  for (const auto& [g, n] : groups) total += n;
  EXPECT_EQ(total, count_parameters(*model));
  EXPECT_THROW(group_of("head.weight"), Error);
}

TEST(ShapeAudit, Preset96Laws) {
  const auto cfg = preset("paper-96");
  const auto trace = trace_shapes(cfg);
  EXPECT_TRUE(check_shape_laws(cfg, trace).empty());
  auto expect = [&](const std::string& name, std::vector<int64_t> shape) {
    const auto* s = trace.find(name);
    ASSERT_NE(s, nullptr) << name;
    EXPECT_EQ(*s, shape) << name;
  };
  expect("F_L2", {1, 64, 24, 24, 24});
  expect("F_L3", {1, 128, 12, 12, 12});
  expect("F_G2", {1, 64, 24, 24, 24});
  expect("F_G3", {1, 128, 12, 12, 12});
  expect("F_mix22", {1, 64, 24, 24, 24});
  expect("F_mix33", {1, 128, 12, 12, 12});
  expect("logits", {1, 9, 96, 96, 96});
}

TEST(ShapeAudit, DeskPresetMatchesGolden) {
  const auto cfg = preset("desk-64");
  const auto trace = trace_shapes(cfg);
  EXPECT_TRUE(check_shape_laws(cfg, trace).empty());
  const auto path = yct::test::golden("desk-64.shapes.txt");
  if (yct::test::updating_golden()) std::ofstream(path) << trace.to_text();
  EXPECT_EQ(trace.to_text(), yct::test::slurp(path));
}

TEST(ShapeAudit, ViolationsReported) {
  const auto cfg = preset("desk-64");
  auto trace = trace_shapes(cfg);
  ShapeTrace forged;
  for (const auto& [name, shape] : trace.entries()) {
    auto s = shape;
    if (name == "F_G2") s[1] += 1;
    forged.record(name, torch::empty(s));
  }
  const auto v = check_shape_laws(cfg, forged);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v.front().name, "F_G2");
}
