#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsarank/tensor.hpp"
#include "tsarank/tokenizer.hpp"

namespace tsarank {

enum class PositionalEncoding { Learned, Sinusoidal };

std::string_view to_string(PositionalEncoding kind);
PositionalEncoding positional_encoding_from(std::string_view name);

struct LmConfig {
  std::size_t vocab_size = tokens::kDefaultVocab;
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_sequence_length = 128;
  PositionalEncoding positional = PositionalEncoding::Learned;

  /// Throws Error(ConfigValidation) when an invariant is violated.
  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

enum class Stage { Base, Cpt, Sft };

std::string_view to_string(Stage stage);
Stage stage_from(std::string_view name);

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  std::string data_fingerprint;

  bool operator==(const TrainingMetadata&) const = default;
};

struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Names and shapes of every parameter, fully determined by the config.
std::vector<std::pair<std::string, Shape>> parameter_manifest(const LmConfig& config);

/// Configuration, parameters and provenance of a decoder-only LM.
class LmCheckpoint {
 public:
  LmCheckpoint() = default;

  /// Fresh model: N(0, 0.02) matrices and embeddings, zero biases, unit gains.
  static LmCheckpoint initialize(const LmConfig& config, std::uint64_t seed);
  /// Model assembled from existing tensors; names and shapes must match the manifest.
  static LmCheckpoint assemble(const LmConfig& config, std::vector<NamedParameter> params, Stage stage,
                               TrainingMetadata metadata);

  const LmConfig& config() const noexcept { return config_; }
  Stage stage() const noexcept { return stage_; }
  void set_stage(Stage stage) noexcept { stage_ = stage; }
  const TrainingMetadata& metadata() const noexcept { return metadata_; }
  TrainingMetadata& metadata() noexcept { return metadata_; }

  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);
  std::size_t parameter_count() const;

  /// Deep copy; the copy shares no storage with this model.
  LmCheckpoint clone() const;

  /// Marks every parameter trainable (or not).
  void set_trainable(bool on);
  std::vector<Tensor> trainable_parameters() const;
  void zero_grads();

  /// Sets the output projection and bias to zero, which makes every
  /// predicted distribution uniform.
  void zero_output_head();

 private:
  LmConfig config_;
  Stage stage_ = Stage::Base;
  TrainingMetadata metadata_;
  std::vector<NamedParameter> params_;
};

/// Log-probabilities (rows x vocab) of the next token at positions
/// [first_row, ids.size()). Row t conditions on ids[0..t] only.
Tensor forward_logprobs(Graph& graph, const LmCheckpoint& model, std::span<const TokenId> ids,
                        std::size_t first_row = 0);

/// Inference forward pass over a whole sequence.
Tensor forward(const LmCheckpoint& model, const TokenSequence& tokens);

}  // namespace tsarank
