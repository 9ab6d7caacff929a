#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tsarank/data.hpp"
#include "tsarank/metrics.hpp"
#include "tsarank/model.hpp"
#include "tsarank/objectives.hpp"

namespace tsarank {

/// Which parameters a stage updates. The head covers the final layer norm
/// and the output projection.
struct FreezePolicy {
  std::optional<std::size_t> trainable_layers;  // top layers; nullopt means all
  bool train_embeddings = true;
  bool train_head = true;
  bool top_half = false;  // overrides trainable_layers with ceil(L/2)

  static FreezePolicy all() { return {}; }
  /// Top ceil(L/2) layers and the head; embeddings frozen.
  static FreezePolicy sft_default() { return {std::nullopt, false, true, true}; }

  std::size_t trainable_count(std::size_t num_layers) const {
    if (top_half) return (num_layers + 1) / 2;
    return trainable_layers.value_or(num_layers);
  }
};

struct StageConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  FreezePolicy freeze;
  double clip_norm = 1.0;
  // SFT only
  SftHyperparams sft;
  SftTerms terms;

  void validate(const LmConfig& model) const;
};

/// Marks parameters trainable according to the policy and freezes the rest.
void apply_freeze_policy(LmCheckpoint& model, const FreezePolicy& policy);

struct StepRecord {
  std::string stage;
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double rank = 0.0;
  double ntp = 0.0;
  double dp = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

using StepSink = std::function<void(const StepRecord&)>;

struct StageResult {
  LmCheckpoint model;
  std::vector<StepRecord> steps;
};

/// Continual pre-training: mean per-token L_ntp over weak pairs, every
/// parameter trainable. The input must be a base checkpoint.
StageResult run_cpt(const LmCheckpoint& base, std::span<const WeakPair> pairs, const StageConfig& config,
                    const StepSink& sink = {});

/// Supervised fine-tuning on the mixed objective. L_dp uses a frozen copy of
/// the input model. A base input is accepted with a warning.
StageResult run_sft(const LmCheckpoint& input, std::span<const RankingInstance> examples, const StageConfig& config,
                    const StepSink& sink = {});

/// Tokenizes rank examples against a corpus. Throws UnknownId for a missing
/// document and ConfigMismatch when an example does not have exactly m negatives.
std::vector<RankingInstance> resolve_examples(std::span<const RankExample> examples,
                                              const std::unordered_map<std::string, std::string>& doc_text,
                                              std::size_t m);

std::string fingerprint(std::span<const WeakPair> pairs);
std::string fingerprint(std::span<const RankingInstance> examples);

struct AblationData {
  std::vector<WeakPair> weak_pairs;
  std::vector<RankingInstance> sft_examples;
  EvalSet eval;
};

struct AblationReport {
  std::vector<MetricsReport> rows;  // full, then the six ablations
  /// Largest per-step |loss| difference between an alpha = 1 full-terms run
  /// and the run without auxiliary terms.
  double alpha_one_max_step_diff = 0.0;
  std::size_t alpha_one_steps = 0;

  nlohmann::json to_json() const;
};

inline constexpr const char* kAblationLabels[] = {"full",   "-CPT",  "-SFT",       "-CPT&SFT",
                                                  "-L_ntp", "-L_dp", "-L_ntp&L_dp"};

/// Trains and evaluates the full pipeline and its six ablations under one seed.
AblationReport ablation_suite(const LmCheckpoint& base, const AblationData& data, const StageConfig& cpt,
                              const StageConfig& sft, const RunMetadata& meta, const StepSink& sink = {});

}  // namespace tsarank
