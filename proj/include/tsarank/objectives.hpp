#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsarank/model.hpp"
#include "tsarank/scoring.hpp"
#include "tsarank/tensor.hpp"

namespace tsarank {

struct SftHyperparams {
  double temperature = 0.001;  // tau
  double alpha = 0.6;          // weight of the ranking term
  std::size_t negatives = 48;  // m

  void validate() const;
};

/// One query with its positive and m negative documents, tokenized.
struct RankingInstance {
  TokenSequence query;
  TokenSequence positive;
  std::vector<TokenSequence> negatives;
};

/// How L_ntp enters a training objective: the plain sum over query tokens,
/// or that sum divided by the number of query tokens.
enum class NtpReduction { Sum, PerToken };

/// Which SFT terms are present. Dropping both auxiliaries leaves L_rank alone.
struct SftTerms {
  bool ntp = true;
  bool dp = true;
};

/// L_ntp = -sum_j log p(q_j | prompt(d), q_<j).
Tensor ntp_loss(Graph& graph, const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document);

/// L_rank = -log softmax_i(S_i / tau) at the positive, where S_i = exp(log score)
/// and index 0 holds the positive. Max-subtracted, differentiable in log_scores.
Tensor rank_loss_from_log_scores(Graph& graph, const Tensor& log_scores, double temperature);
/// Same loss evaluated directly on raw scores S_i (positive first).
double rank_loss_from_scores(std::span<const double> scores, double temperature);

Tensor rank_loss(Graph& graph, const LmCheckpoint& model, const RankingInstance& example, const SftHyperparams& hp);

/// L_dp = (1/|T|) sum_j KL(p_ref,j || p_sft,j) over query positions, from
/// log-probability rows. The reference rows are treated as constants.
Tensor dp_loss_from_rows(Graph& graph, const Tensor& sft_rows, const Tensor& reference_rows);

/// Evaluates the reference model without recording, so no gradient reaches it.
Tensor dp_loss(Graph& graph, const LmCheckpoint& sft_model, const LmCheckpoint& reference, const TokenSequence& query,
               const TokenSequence& document);

struct SftLoss {
  Tensor total;
  double rank = 0.0;
  double ntp = 0.0;  // as reduced
  double dp = 0.0;
};

/// L_sft = alpha * L_rank + (1 - alpha) * (L_ntp + L_dp), the auxiliaries on
/// the positive pair only. Each document is scored with one forward pass and
/// the positive's pass is shared by all three terms.
SftLoss sft_loss(Graph& graph, const LmCheckpoint& model, const LmCheckpoint& reference,
                 const RankingInstance& example, const SftHyperparams& hp, SftTerms terms = {},
                 NtpReduction reduction = NtpReduction::Sum);

/// The mixture on already-computed component values.
double mix_sft_loss(double rank, double ntp, double dp, double alpha, SftTerms terms = {});

}  // namespace tsarank
