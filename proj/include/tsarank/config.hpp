#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsarank/bm25.hpp"
#include "tsarank/metrics.hpp"
#include "tsarank/model.hpp"
#include "tsarank/synth.hpp"
#include "tsarank/training.hpp"

namespace tsarank {

struct MiningConfig {
  std::size_t top_k = 100;
  Bm25Params bm25;
};

struct SweepConfig {
  std::vector<std::size_t> m = {8, 16, 32, 48};
  std::vector<double> alpha = {0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> cpt_fractions = {0.25, 0.5, 1.0};
};

/// Fixed file names inside a data directory.
struct DataLayout {
  std::filesystem::path dir;

  std::filesystem::path weak_pairs() const { return dir / "weak_pairs.jsonl"; }
  std::filesystem::path corpus() const { return dir / "corpus.jsonl"; }
  std::filesystem::path train_queries() const { return dir / "train_queries.jsonl"; }
  std::filesystem::path eval_queries() const { return dir / "eval_queries.jsonl"; }
  std::filesystem::path qrels() const { return dir / "qrels.tsv"; }
  std::filesystem::path rank_examples() const { return dir / "rank_examples.jsonl"; }
};

/// The whole experiment. Stage seeds are derived from the global seed.
struct RunConfig {
  std::uint64_t seed = 13;
  LmConfig model;
  SynthParams synth;
  StageConfig cpt;
  StageConfig sft;
  MiningConfig mining;
  EvalOptions eval;
  SweepConfig sweep;
  std::string data_dir;  // empty: the output directory

  static RunConfig defaults();
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Rejects any value that violates a module invariant.
  void validate() const;
  /// FNV-1a of the canonical JSON form.
  std::string hash() const;
  /// Re-derives stage seeds from `seed`.
  void derive_seeds();
};

/// Reads a JSON config, applies "a.b=value" overrides on top of it and the
/// seed flag on top of those, then validates. Missing keys take defaults;
/// unknown keys are rejected.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed);

}  // namespace tsarank
