#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsarank/model.hpp"
#include "tsarank/rng.hpp"
#include "tsarank/tensor.hpp"
#include "tsarank/tokenizer.hpp"

namespace tsarank::testing {

inline LmConfig tiny_config(std::size_t dim = 16, std::size_t layers = 2, std::size_t heads = 2,
                            std::size_t max_seq = 64) {
  LmConfig c;
  c.model_dim = dim;
  c.num_layers = layers;
  c.num_heads = heads;
  c.ffn_dim = 2 * dim;
  c.max_sequence_length = max_seq;
  return c;
}

/// Fresh model whose parameters are scaled up so that outputs are far from uniform.
inline LmCheckpoint random_model(const LmConfig& config, std::uint64_t seed, double spread = 0.3) {
  LmCheckpoint m = LmCheckpoint::initialize(config, seed);
  Rng rng(derive_seed(seed, "test-perturb"));
  for (const auto& p : m.parameters()) {
    for (auto& v : p.value.mutable_values()) v += spread * standard_normal(rng);
  }
  return m;
}

inline std::string random_words(Rng& rng, std::size_t words) {
  static const std::string letters = "abcdefghij";
  std::string out;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out.push_back(' ');
    const std::size_t len = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i) out.push_back(letters[uniform_index(rng, letters.size())]);
  }
  return out;
}

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t within_tight = 0;  // relative error <= 1e-4
  double worst = 0.0;

  double fraction_tight() const { return checked ? static_cast<double>(within_tight) / static_cast<double>(checked) : 0.0; }
};

/// Central finite differences on `samples` parameter entries drawn uniformly
/// from the entries whose analytic gradient has magnitude >= min_grad.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|).
inline GradCheckResult check_gradients(LmCheckpoint& model, const std::function<Tensor(Graph&)>& loss,
                                       std::size_t samples, std::uint64_t seed, double h = 1e-4,
                                       double min_grad = 1e-6) {
  model.set_trainable(true);
  model.zero_grads();
  {
    Graph g(Graph::Mode::Record);
    backward(g, loss(g));
  }
  struct Entry {
    std::size_t param, index;
    double grad;
  };
  std::vector<Entry> entries;
  const auto& params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto grad = params[p].value.grad();
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (std::abs(grad[i]) >= min_grad) entries.push_back({p, i, grad[i]});
  }
  model.set_trainable(false);
  Rng rng(seed);
  const auto picks = sample_without_replacement(rng, entries.size(), std::min(samples, entries.size()));
  auto eval = [&] {
    Graph g(Graph::Mode::NoGrad);
    return loss(g).item();
  };
  GradCheckResult r;
  for (std::size_t k : picks) {
    const Entry& e = entries[k];
    auto values = params[e.param].value.mutable_values();
    const double orig = values[e.index];
    values[e.index] = orig + h;
    const double up = eval();
    values[e.index] = orig - h;
    const double down = eval();
    values[e.index] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(e.grad - numeric) / std::max(std::abs(e.grad), std::abs(numeric));
    ++r.checked;
    if (rel <= 1e-4) ++r.within_tight;
    r.worst = std::max(r.worst, rel);
  }
  return r;
}

}  // namespace tsarank::testing
