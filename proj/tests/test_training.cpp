#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "tsarank/error.hpp"
#include "tsarank/training.hpp"

namespace tsarank {
namespace {

using testing::random_model;
using testing::tiny_config;

std::vector<WeakPair> weak_pairs(std::size_t n) {
  Rng rng(21);
  std::vector<WeakPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string doc = testing::random_words(rng, 4);
    out.push_back({"w" + std::to_string(i), doc.substr(0, doc.find(' ')), doc, PairCategory::TitleBody});
  }
  return out;
}

std::vector<RankingInstance> instances(std::size_t n, std::size_t m) {
  Rng rng(22);
  std::vector<RankingInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    RankingInstance ex;
    const std::string pos = testing::random_words(rng, 3);
    ex.query = tokenize(pos.substr(0, pos.find(' ')), SpanRole::Query);
    ex.positive = tokenize(pos);
    for (std::size_t j = 0; j < m; ++j) ex.negatives.push_back(tokenize(testing::random_words(rng, 3)));
    out.push_back(std::move(ex));
  }
  return out;
}

StageConfig stage(std::size_t m = 2) {
  StageConfig c;
  c.batch_size = 2;
  c.learning_rate = 1e-2;
  c.seed = 5;
  c.sft = SftHyperparams{0.001, 0.6, m};
  return c;
}

bool same_parameters(const LmCheckpoint& a, const LmCheckpoint& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto x = a.parameters()[i].value.values(), y = b.parameters()[i].value.values();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

bool same_parameter(const LmCheckpoint& a, const LmCheckpoint& b, const std::string& name) {
  const auto x = a.param(name).values(), y = b.param(name).values();
  return std::equal(x.begin(), x.end(), y.begin());
}

TEST(Freeze, DefaultSftPolicy) {
  LmCheckpoint m = LmCheckpoint::initialize(tiny_config(16, 3, 2), 1);
  apply_freeze_policy(m, FreezePolicy::sft_default());
  EXPECT_FALSE(m.param("embed.token").requires_grad());
  EXPECT_FALSE(m.param("embed.position").requires_grad());
  EXPECT_FALSE(m.param("layers.0.attn.wq").requires_grad());
  EXPECT_TRUE(m.param("layers.1.attn.wq").requires_grad());
  EXPECT_TRUE(m.param("layers.2.mlp.w1").requires_grad());
  EXPECT_TRUE(m.param("final_ln.gain").requires_grad());
  EXPECT_TRUE(m.param("head.weight").requires_grad());
  apply_freeze_policy(m, FreezePolicy::all());
  EXPECT_EQ(m.trainable_parameters().size(), m.parameters().size());
}

TEST(StageConfigs, Validation) {
  const LmConfig c = tiny_config();
  StageConfig s;
  EXPECT_NO_THROW(s.validate(c));
  s.batch_size = 0;
  EXPECT_THROW(s.validate(c), Error);
  s = StageConfig{};
  s.freeze.trainable_layers = 3;
  EXPECT_THROW(s.validate(c), Error);
  s = StageConfig{};
  s.learning_rate = -1;
  EXPECT_THROW(s.validate(c), Error);
}

TEST(Cpt, ZeroLearningRateKeepsWeightsAndSetsStage) {
  const LmCheckpoint base = random_model(tiny_config(), 1);
  StageConfig c = stage();
  c.learning_rate = 0.0;
  const auto pairs = weak_pairs(5);
  const StageResult r = run_cpt(base, pairs, c);
  EXPECT_TRUE(same_parameters(base, r.model));
  EXPECT_EQ(r.model.stage(), Stage::Cpt);
  EXPECT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(r.model.metadata().steps, 3u);
  EXPECT_EQ(r.model.metadata().data_fingerprint, fingerprint(pairs));
  EXPECT_EQ(base.stage(), Stage::Base);
}

TEST(Cpt, DeterministicAndLearns) {
  const LmCheckpoint base = random_model(tiny_config(), 2, 0.05);
  StageConfig c = stage();
  c.epochs = 4;
  const auto pairs = weak_pairs(8);
  const StageResult a = run_cpt(base, pairs, c), b = run_cpt(base, pairs, c);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  ASSERT_EQ(a.steps.size(), 16u);
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 4; ++i) first += a.steps[i].loss, last += a.steps[12 + i].loss;
  EXPECT_LT(last, first);
  EXPECT_EQ(a.steps[4].epoch, 1u);
  EXPECT_EQ(a.steps[15].step, 16u);
}

TEST(Cpt, RejectsNonBaseAndEmptyInput) {
  LmCheckpoint m = random_model(tiny_config(), 3);
  EXPECT_THROW(run_cpt(m, std::vector<WeakPair>{}, stage()), Error);
  m.set_stage(Stage::Cpt);
  try {
    run_cpt(m, weak_pairs(2), stage());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigMismatch);
  }
}

TEST(Sft, FrozenParametersStayUnchanged) {
  LmCheckpoint cpt = random_model(tiny_config(), 4);
  cpt.set_stage(Stage::Cpt);
  StageConfig c = stage();
  c.freeze = FreezePolicy::sft_default();
  const StageResult r = run_sft(cpt, instances(4, 2), c);
  EXPECT_EQ(r.model.stage(), Stage::Sft);
  EXPECT_TRUE(same_parameter(cpt, r.model, "embed.token"));
  EXPECT_TRUE(same_parameter(cpt, r.model, "layers.0.attn.wq"));
  EXPECT_FALSE(same_parameter(cpt, r.model, "layers.1.attn.wq"));
  EXPECT_FALSE(same_parameter(cpt, r.model, "head.weight"));
  EXPECT_EQ(cpt.stage(), Stage::Cpt);
}

TEST(Sft, AlphaOneMatchesRankOnlyStepByStep) {
  LmCheckpoint cpt = random_model(tiny_config(), 5);
  cpt.set_stage(Stage::Cpt);
  const auto data = instances(6, 2);
  StageConfig full = stage();
  full.sft.alpha = 1.0;
  full.sft.temperature = 1e-8;
  StageConfig rank_only = full;
  rank_only.terms = {false, false};
  const StageResult a = run_sft(cpt, data, full), b = run_sft(cpt, data, rank_only);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_NEAR(a.steps[i].loss, b.steps[i].loss, 1e-12);
  EXPECT_TRUE(same_parameters(a.model, b.model));
}

TEST(Sft, InputErrors) {
  LmCheckpoint m = random_model(tiny_config(), 6);
  m.set_stage(Stage::Cpt);
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code_of([&] { run_sft(m, instances(2, 3), stage(2)); }), ErrorCode::ConfigMismatch);
  EXPECT_EQ(code_of([&] { run_sft(m, std::vector<RankingInstance>{}, stage()); }), ErrorCode::InsufficientCandidates);
  m.set_stage(Stage::Sft);
  EXPECT_EQ(code_of([&] { run_sft(m, instances(2, 2), stage()); }), ErrorCode::ConfigMismatch);
  m.set_stage(Stage::Base);
  EXPECT_NO_THROW(run_sft(m, instances(2, 2), stage()));
}

TEST(Sft, ResolveExamples) {
  const std::unordered_map<std::string, std::string> docs = {{"p", "pos doc"}, {"a", "neg a"}, {"b", "neg b"}};
  const std::vector<RankExample> ok = {{"q1", "query", "p", {"a", "b"}, 10, 1}};
  const auto r = resolve_examples(ok, docs, 2);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(detokenize(r[0].negatives[1]), "neg b");
  EXPECT_THROW(resolve_examples(ok, docs, 3), Error);
  const std::vector<RankExample> missing = {{"q1", "query", "p", {"a", "zz"}, 10, 1}};
  try {
    resolve_examples(missing, docs, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownId);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

}  // namespace
}  // namespace tsarank
