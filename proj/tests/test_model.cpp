#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "tsarank/checkpoint.hpp"
#include "tsarank/error.hpp"
#include "tsarank/model.hpp"
#include "tsarank/tokenizer.hpp"

namespace tsarank {
namespace {

using testing::random_model;
using testing::tiny_config;
using Matrix = std::vector<std::vector<double>>;

// Plain-loop reimplementation of the decoder, sharing no code with ops.
struct NaiveLm {
  const LmCheckpoint& m;

  Matrix param(const std::string& name) const {
    const Tensor& t = m.param(name);
    const std::size_t r = t.rank() == 1 ? 1 : t.rows();
    const std::size_t c = t.rank() == 1 ? t.size() : t.cols();
    Matrix out(r, std::vector<double>(c));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i][j] = t.at(i * c + j);
    return out;
  }

  static Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y(x.size(), std::vector<double>(w[0].size()));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < w[0].size(); ++j) {
        double s = b[0][j];
        for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
        y[i][j] = s;
      }
    return y;
  }

  static Matrix norm(const Matrix& x, const Matrix& g, const Matrix& b) {
    Matrix y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = static_cast<double>(x[i].size());
      double mu = 0, var = 0;
      for (double v : x[i]) mu += v / n;
      for (double v : x[i]) var += (v - mu) * (v - mu) / n;
      for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * g[0][j] + b[0][j];
    }
    return y;
  }

  Matrix logprobs(const std::vector<TokenId>& ids) const {
    const LmConfig& c = m.config();
    const std::size_t n = ids.size(), d = c.model_dim, hd = d / c.num_heads;
    const Matrix tok = param("embed.token"), pos = param("embed.position");
    Matrix x(n, std::vector<double>(d));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < d; ++j) x[t][j] = tok[ids[t]][j] + pos[t][j];
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      const Matrix h = norm(x, param(p + "ln1.gain"), param(p + "ln1.bias"));
      const Matrix q = linear(h, param(p + "attn.wq"), param(p + "attn.bq"));
      const Matrix k = linear(h, param(p + "attn.wk"), param(p + "attn.bk"));
      const Matrix v = linear(h, param(p + "attn.wv"), param(p + "attn.bv"));
      Matrix cat(n, std::vector<double>(d, 0.0));
      for (std::size_t head = 0; head < c.num_heads; ++head) {
        const std::size_t off = head * hd;
        for (std::size_t t = 0; t < n; ++t) {
          std::vector<double> w(t + 1);
          double mx = -1e300;
          for (std::size_t s = 0; s <= t; ++s) {
            double dot = 0;
            for (std::size_t j = 0; j < hd; ++j) dot += q[t][off + j] * k[s][off + j];
            w[s] = dot / std::sqrt(static_cast<double>(hd));
            mx = std::max(mx, w[s]);
          }
          double z = 0;
          for (auto& e : w) z += (e = std::exp(e - mx));
          for (std::size_t s = 0; s <= t; ++s)
            for (std::size_t j = 0; j < hd; ++j) cat[t][off + j] += w[s] / z * v[s][off + j];
        }
      }
      const Matrix a = linear(cat, param(p + "attn.wo"), param(p + "attn.bo"));
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) x[t][j] += a[t][j];
      const Matrix h2 = norm(x, param(p + "ln2.gain"), param(p + "ln2.bias"));
      Matrix f = linear(h2, param(p + "mlp.w1"), param(p + "mlp.b1"));
      for (auto& row : f)
        for (auto& e : row) e = 0.5 * e * (1 + std::tanh(std::sqrt(2 / M_PI) * (e + 0.044715 * e * e * e)));
      const Matrix o = linear(f, param(p + "mlp.w2"), param(p + "mlp.b2"));
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) x[t][j] += o[t][j];
    }
    Matrix logits = linear(norm(x, param("final_ln.gain"), param("final_ln.bias")), param("head.weight"),
                           param("head.bias"));
    for (auto& row : logits) {
      double mx = -1e300, z = 0;
      for (double e : row) mx = std::max(mx, e);
      for (double e : row) z += std::exp(e - mx);
      for (auto& e : row) e = e - mx - std::log(z);
    }
    return logits;
  }
};

std::vector<TokenId> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(uniform_index(rng, vocab));
  return ids;
}

TEST(Model, ManifestCoversAllParameters) {
  const LmConfig c = tiny_config();
  const LmCheckpoint m = LmCheckpoint::initialize(c, 1);
  const auto manifest = parameter_manifest(c);
  ASSERT_EQ(manifest.size(), m.parameters().size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    EXPECT_EQ(manifest[i].first, m.parameters()[i].name);
    EXPECT_EQ(manifest[i].second, m.parameters()[i].value.shape());
  }
  EXPECT_EQ(m.stage(), Stage::Base);
}

TEST(Model, ConfigValidation) {
  LmConfig c = tiny_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Model, ForwardMatchesIndependentImplementation) {
  const LmConfig c = tiny_config();
  Rng rng(3);
  for (std::uint64_t seed : {1u, 2u}) {
    const LmCheckpoint m = random_model(c, seed);
    const auto ids = random_ids(rng, 20, c.vocab_size);
    Graph g(Graph::Mode::NoGrad);
    const Tensor lp = forward_logprobs(g, m, ids);
    const Matrix oracle = NaiveLm{m}.logprobs(ids);
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t v = 0; v < c.vocab_size; ++v) ASSERT_NEAR(lp.at(t, v), oracle[t][v], 1e-10);
  }
}

TEST(Model, RowsAreCausalAndMatchStepwiseDecoding) {
  const LmConfig c = tiny_config();
  const LmCheckpoint m = random_model(c, 4);
  Rng rng(5);
  const auto ids = random_ids(rng, 16, c.vocab_size);
  Graph g(Graph::Mode::NoGrad);
  const Tensor full = forward_logprobs(g, m, ids);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const std::vector<TokenId> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(t + 1));
    const Tensor last = forward_logprobs(g, m, prefix, t);
    for (std::size_t v = 0; v < c.vocab_size; ++v) ASSERT_NEAR(full.at(t, v), last.at(0, v), 1e-12);
  }
}

TEST(Model, RowsAreNormalized) {
  const LmConfig c = tiny_config();
  const LmCheckpoint m = random_model(c, 6);
  Rng rng(7);
  Graph g(Graph::Mode::NoGrad);
  const Tensor lp = forward_logprobs(g, m, random_ids(rng, 10, c.vocab_size));
  for (std::size_t t = 0; t < 10; ++t) {
    double s = 0;
    for (std::size_t v = 0; v < c.vocab_size; ++v) s += std::exp(lp.at(t, v));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Model, ForwardErrors) {
  const LmConfig c = tiny_config(16, 1, 2, 8);
  const LmCheckpoint m = LmCheckpoint::initialize(c, 1);
  Graph g(Graph::Mode::NoGrad);
  const std::vector<TokenId> long_ids(9, 1), bad_ids = {1, 999};
  auto code_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code_of([&] { forward_logprobs(g, m, long_ids); }), ErrorCode::SequenceTooLong);
  EXPECT_EQ(code_of([&] { forward_logprobs(g, m, std::vector<TokenId>{}); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([&] { forward_logprobs(g, m, bad_ids); }), ErrorCode::InvalidArgument);
}

TEST(Model, ZeroHeadGivesUniformDistribution) {
  const LmConfig c = tiny_config();
  LmCheckpoint m = random_model(c, 8);
  m.zero_output_head();
  Graph g(Graph::Mode::NoGrad);
  const Tensor lp = forward_logprobs(g, m, std::vector<TokenId>{1, 2, 3});
  for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp.at(i), -std::log(260.0), 1e-12);
}

TEST(Model, InitializationIsDeterministicAndSeeded) {
  const LmConfig c = tiny_config();
  const LmCheckpoint a = LmCheckpoint::initialize(c, 11), b = LmCheckpoint::initialize(c, 11),
                     d = LmCheckpoint::initialize(c, 12);
  const auto va = a.param("layers.0.attn.wq").values(), vb = b.param("layers.0.attn.wq").values(),
             vd = d.param("layers.0.attn.wq").values();
  EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  EXPECT_FALSE(std::equal(va.begin(), va.end(), vd.begin()));
}

class CheckpointFiles : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "tsarank_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }

  static ErrorCode load_code(const std::filesystem::path& p, const std::optional<LmConfig>& expected = std::nullopt) {
    try {
      load_checkpoint(p, expected);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  }
};

TEST_F(CheckpointFiles, RoundTripIsBitExact) {
  const LmConfig c = tiny_config();
  LmCheckpoint m = random_model(c, 9);
  m.set_stage(Stage::Cpt);
  m.metadata() = TrainingMetadata{42, 1, 17, "abc"};
  save_checkpoint(m, dir / "m.ckpt");
  const LmCheckpoint r = load_checkpoint(dir / "m.ckpt", c);
  EXPECT_EQ(r.stage(), Stage::Cpt);
  EXPECT_EQ(r.metadata(), m.metadata());
  EXPECT_EQ(r.config(), c);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto a = m.parameters()[i].value.values(), b = r.parameters()[i].value.values();
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_F(CheckpointFiles, CloneSharesNoStorage) {
  LmCheckpoint m = LmCheckpoint::initialize(tiny_config(), 1);
  LmCheckpoint c = m.clone();
  c.param("head.bias").mutable_values()[0] = 3.0;
  EXPECT_EQ(m.param("head.bias").at(0), 0.0);
}

TEST_F(CheckpointFiles, ConfigMismatchNamesField) {
  const LmConfig c = tiny_config();
  save_checkpoint(LmCheckpoint::initialize(c, 1), dir / "m.ckpt");
  LmConfig other = c;
  other.vocab_size = 512;
  try {
    load_checkpoint(dir / "m.ckpt", other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigMismatch);
    EXPECT_NE(std::string(e.what()).find("vocab_size 260, expected 512"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointFiles, CorruptAndMissingFiles) {
  const LmConfig c = tiny_config();
  save_checkpoint(LmCheckpoint::initialize(c, 1), dir / "m.ckpt");
  std::string bytes;
  {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    return dir / name;
  };
  EXPECT_EQ(load_code(dir / "missing.ckpt"), ErrorCode::Io);
  EXPECT_EQ(load_code(write("trunc.ckpt", bytes.substr(0, bytes.size() - 8))), ErrorCode::CorruptCheckpoint);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(load_code(write("magic.ckpt", bad_magic)), ErrorCode::CorruptCheckpoint);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_EQ(load_code(write("version.ckpt", bad_version)), ErrorCode::FormatVersion);
  EXPECT_EQ(load_code(write("empty.ckpt", "")), ErrorCode::CorruptCheckpoint);
}

TEST(Tokenizer, RoundTripAndRoles) {
  const TokenSequence q = tokenize("héllo", SpanRole::Query);
  EXPECT_EQ(q.size(), std::string("héllo").size());
  EXPECT_EQ(detokenize(q), "héllo");
  std::vector<TokenId> ids = q.ids;
  ids.push_back(tokens::kEos);
  EXPECT_EQ(detokenize(ids), "héllo");
}

}  // namespace
}  // namespace tsarank
