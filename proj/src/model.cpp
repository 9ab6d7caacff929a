#include "tsarank/model.hpp"

#include <algorithm>
#include <cmath>

#include "tsarank/error.hpp"
#include "tsarank/ops.hpp"
#include "tsarank/rng.hpp"

namespace tsarank {

std::string_view to_string(PositionalEncoding kind) {
  return kind == PositionalEncoding::Learned ? "learned" : "sinusoidal";
}

PositionalEncoding positional_encoding_from(std::string_view name) {
  if (name == "learned") return PositionalEncoding::Learned;
  if (name == "sinusoidal") return PositionalEncoding::Sinusoidal;
  throw Error(ErrorCode::ConfigValidation, "unknown positional encoding '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Base: return "base";
    case Stage::Cpt: return "cpt";
    case Stage::Sft: return "sft";
  }
  return "base";
}

Stage stage_from(std::string_view name) {
  if (name == "base") return Stage::Base;
  if (name == "cpt") return Stage::Cpt;
  if (name == "sft") return Stage::Sft;
  throw Error(ErrorCode::Parse, "unknown stage tag '" + std::string(name) + "'");
}

void LmConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigValidation, msg); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_sequence_length < 2) fail("max_sequence_length must be >= 2");
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (num_heads < 1 || model_dim == 0) fail("model_dim and num_heads must be positive");
  if (model_dim % num_heads != 0) {
    fail("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (ffn_dim < 1) fail("ffn_dim must be >= 1");
}

std::vector<std::pair<std::string, Shape>> parameter_manifest(const LmConfig& c) {
  std::vector<std::pair<std::string, Shape>> m;
  const std::size_t d = c.model_dim;
  m.emplace_back("embed.token", Shape{c.vocab_size, d});
  if (c.positional == PositionalEncoding::Learned) m.emplace_back("embed.position", Shape{c.max_sequence_length, d});
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    m.emplace_back(p + "ln1.gain", Shape{d});
    m.emplace_back(p + "ln1.bias", Shape{d});
    for (const char* w : {"q", "k", "v", "o"}) {
      m.emplace_back(p + "attn.w" + w, Shape{d, d});
      m.emplace_back(p + "attn.b" + w, Shape{d});
    }
    m.emplace_back(p + "ln2.gain", Shape{d});
    m.emplace_back(p + "ln2.bias", Shape{d});
    m.emplace_back(p + "mlp.w1", Shape{d, c.ffn_dim});
    m.emplace_back(p + "mlp.b1", Shape{c.ffn_dim});
    m.emplace_back(p + "mlp.w2", Shape{c.ffn_dim, d});
    m.emplace_back(p + "mlp.b2", Shape{d});
  }
  m.emplace_back("final_ln.gain", Shape{d});
  m.emplace_back("final_ln.bias", Shape{d});
  m.emplace_back("head.weight", Shape{d, c.vocab_size});
  m.emplace_back("head.bias", Shape{c.vocab_size});
  return m;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

LmCheckpoint LmCheckpoint::initialize(const LmConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "init"));
  std::vector<NamedParameter> params;
  for (auto& [name, shape] : parameter_manifest(config)) {
    Tensor t = Tensor::zeros(shape);
    if (ends_with(name, ".gain")) {
      std::fill(t.mutable_values().begin(), t.mutable_values().end(), 1.0);
    } else if (shape.size() == 2) {
      for (double& v : t.mutable_values()) v = 0.02 * standard_normal(rng);
    }
    params.push_back({name, t});
  }
  TrainingMetadata meta;
  meta.seed = seed;
  return assemble(config, std::move(params), Stage::Base, meta);
}

LmCheckpoint LmCheckpoint::assemble(const LmConfig& config, std::vector<NamedParameter> params, Stage stage,
                                    TrainingMetadata metadata) {
  config.validate();
  const auto manifest = parameter_manifest(config);
  if (manifest.size() != params.size()) {
    throw Error(ErrorCode::ConfigMismatch, "config expects " + std::to_string(manifest.size()) +
                                               " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].first != params[i].name || manifest[i].second != params[i].value.shape()) {
      throw Error(ErrorCode::ConfigMismatch, "parameter " + std::to_string(i) + ": expected " + manifest[i].first +
                                                 " " + shape_string(manifest[i].second) + ", got " + params[i].name +
                                                 " " + shape_string(params[i].value.shape()));
    }
  }
  LmCheckpoint m;
  m.config_ = config;
  m.params_ = std::move(params);
  m.stage_ = stage;
  m.metadata_ = std::move(metadata);
  return m;
}

const Tensor& LmCheckpoint::param(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw Error(ErrorCode::UnknownId, "no parameter named '" + std::string(name) + "'");
}

Tensor& LmCheckpoint::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p.value;
  throw Error(ErrorCode::UnknownId, "no parameter named '" + std::string(name) + "'");
}

std::size_t LmCheckpoint::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

LmCheckpoint LmCheckpoint::clone() const {
  LmCheckpoint m = *this;
  for (auto& p : m.params_) p.value = p.value.clone();
  return m;
}

void LmCheckpoint::set_trainable(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

std::vector<Tensor> LmCheckpoint::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.value.requires_grad()) out.push_back(p.value);
  return out;
}

void LmCheckpoint::zero_grads() {
  for (auto& p : params_) p.value.zero_grad();
}

void LmCheckpoint::zero_output_head() {
  for (const char* name : {"head.weight", "head.bias"}) {
    auto v = param(name).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

namespace {

Tensor sinusoidal_table(std::size_t rows, std::size_t dim) {
  auto t = Tensor::zeros({rows, dim});
  auto v = t.mutable_values();
  for (std::size_t pos = 0; pos < rows; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      v[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return t;
}

Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_row_bias(g, ops::matmul(g, x, w), b);
}

}  // namespace

Tensor forward_logprobs(Graph& g, const LmCheckpoint& model, std::span<const TokenId> ids, std::size_t first_row) {
  const LmConfig& c = model.config();
  const std::size_t n = ids.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "forward on an empty sequence");
  if (n > c.max_sequence_length) {
    throw Error(ErrorCode::SequenceTooLong, "sequence of " + std::to_string(n) + " tokens exceeds max_sequence_length " +
                                               std::to_string(c.max_sequence_length));
  }
  if (first_row >= n) throw Error(ErrorCode::InvalidArgument, "first_row beyond sequence end");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] >= c.vocab_size) {
      throw Error(ErrorCode::InvalidArgument,
                  "token id " + std::to_string(ids[i]) + " outside vocab of " + std::to_string(c.vocab_size));
    }
    idx[i] = ids[i];
  }

  Tensor x = ops::gather_rows(g, model.param("embed.token"), idx);
  if (c.positional == PositionalEncoding::Learned) {
    x = ops::add(g, x, ops::slice_rows(g, model.param("embed.position"), 0, n));
  } else {
    x = ops::add(g, x, sinusoidal_table(n, c.model_dim));
  }

  const std::size_t head_dim = c.model_dim / c.num_heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto P = [&](const char* name) -> const Tensor& { return model.param(p + name); };

    Tensor h = ops::layer_norm(g, x, P("ln1.gain"), P("ln1.bias"));
    Tensor q = linear(g, h, P("attn.wq"), P("attn.bq"));
    Tensor k = linear(g, h, P("attn.wk"), P("attn.bk"));
    Tensor v = linear(g, h, P("attn.wv"), P("attn.bv"));
    std::vector<Tensor> heads;
    heads.reserve(c.num_heads);
    for (std::size_t hd = 0; hd < c.num_heads; ++hd) {
      Tensor qh = ops::slice_cols(g, q, hd * head_dim, head_dim);
      Tensor kh = ops::slice_cols(g, k, hd * head_dim, head_dim);
      Tensor vh = ops::slice_cols(g, v, hd * head_dim, head_dim);
      Tensor scores = ops::scale(g, ops::matmul(g, qh, ops::transpose(g, kh)), attn_scale);
      heads.push_back(ops::matmul(g, ops::causal_softmax(g, scores), vh));
    }
    Tensor attn = linear(g, ops::concat_cols(g, heads), P("attn.wo"), P("attn.bo"));
    x = ops::add(g, x, attn);

    Tensor h2 = ops::layer_norm(g, x, P("ln2.gain"), P("ln2.bias"));
    Tensor f = linear(g, ops::gelu(g, linear(g, h2, P("mlp.w1"), P("mlp.b1"))), P("mlp.w2"), P("mlp.b2"));
    x = ops::add(g, x, f);
  }

  if (first_row > 0) x = ops::slice_rows(g, x, first_row, n - first_row);
  Tensor hf = ops::layer_norm(g, x, model.param("final_ln.gain"), model.param("final_ln.bias"));
  Tensor logits = linear(g, hf, model.param("head.weight"), model.param("head.bias"));
  return ops::log_softmax(g, logits, 1);
}

Tensor forward(const LmCheckpoint& model, const TokenSequence& tokens) {
  Graph g(Graph::Mode::NoGrad);
  return forward_logprobs(g, model, tokens.ids, 0);
}

}  // namespace tsarank
