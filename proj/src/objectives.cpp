#include "tsarank/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tsarank/error.hpp"
#include "tsarank/ops.hpp"

namespace tsarank {

void SftHyperparams::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigValidation, "temperature must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigValidation, "alpha must lie in [0, 1]");
  if (negatives < 1) throw Error(ErrorCode::ConfigValidation, "negatives m must be >= 1");
}

Tensor ntp_loss(Graph& graph, const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document) {
  const ScoringInput in = prepare_scoring_input(model.config(), query, document);
  const Tensor rows = query_logprob_rows(graph, model, in);
  return ops::scale(graph, ops::sum(graph, query_token_logprobs(graph, rows, in)), -1.0);
}

Tensor rank_loss_from_log_scores(Graph& graph, const Tensor& log_scores, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (log_scores.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "ranking loss needs a positive and at least one negative");
  }
  const Tensor logits = ops::scale(graph, ops::exp(graph, log_scores), 1.0 / temperature);
  const Tensor logp = ops::log_softmax(graph, logits, 0);
  return ops::scale(graph, ops::element(graph, logp, 0), -1.0);
}

double rank_loss_from_scores(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (scores.size() < 2) throw Error(ErrorCode::InvalidArgument, "ranking loss needs a positive and a negative");
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) mx = std::max(mx, s / temperature);
  double total = 0.0;
  for (double s : scores) total += std::exp(s / temperature - mx);
  return mx + std::log(total) - scores[0] / temperature;
}

namespace {

void check_example(const RankingInstance& ex, const SftHyperparams& hp) {
  if (ex.positive.empty()) throw Error(ErrorCode::InvalidArgument, "ranking example is missing its positive document");
  if (ex.negatives.size() != hp.negatives) {
    throw Error(ErrorCode::InvalidArgument, "ranking example has " + std::to_string(ex.negatives.size()) +
                                                " negatives, hyperparameters expect m = " + std::to_string(hp.negatives));
  }
}

Tensor log_score_of(Graph& graph, const LmCheckpoint& model, const TokenSequence& q, const TokenSequence& d,
                    Tensor* rows_out = nullptr, std::size_t* query_len = nullptr) {
  const ScoringInput in = prepare_scoring_input(model.config(), q, d);
  Tensor rows = query_logprob_rows(graph, model, in);
  Tensor ls = ops::sum(graph, query_token_logprobs(graph, rows, in));
  if (rows_out) *rows_out = rows;
  if (query_len) *query_len = in.targets.size();
  return ls;
}

}  // namespace

Tensor rank_loss(Graph& graph, const LmCheckpoint& model, const RankingInstance& example, const SftHyperparams& hp) {
  hp.validate();
  check_example(example, hp);
  std::vector<Tensor> scores;
  scores.reserve(example.negatives.size() + 1);
  scores.push_back(log_score_of(graph, model, example.query, example.positive));
  for (const auto& neg : example.negatives) scores.push_back(log_score_of(graph, model, example.query, neg));
  return rank_loss_from_log_scores(graph, ops::stack(graph, scores), hp.temperature);
}

Tensor dp_loss_from_rows(Graph& graph, const Tensor& sft_rows, const Tensor& reference_rows) {
  if (sft_rows.shape() != reference_rows.shape()) {
    throw Error(ErrorCode::ConfigMismatch, "dp loss: distributions of shape " + shape_string(sft_rows.shape()) +
                                               " vs reference " + shape_string(reference_rows.shape()));
  }
  const std::size_t positions = sft_rows.rows();
  // KL(p_ref || p_sft) = sum p_ref log p_ref - sum p_ref log p_sft; the first
  // sum is a constant.
  std::vector<double> weights(reference_rows.size());
  double entropy_term = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double lp = reference_rows.at(i);
    const double p = std::exp(lp);
    weights[i] = p;
    if (p > 0.0) entropy_term += p * lp;
  }
  const Tensor w = Tensor::from(reference_rows.shape(), std::move(weights));
  const Tensor cross = ops::sum(graph, ops::mul(graph, w, sft_rows));
  const Tensor kl = ops::add_scalar(graph, ops::scale(graph, cross, -1.0), entropy_term);
  return ops::scale(graph, kl, 1.0 / static_cast<double>(positions));
}

Tensor dp_loss(Graph& graph, const LmCheckpoint& sft_model, const LmCheckpoint& reference, const TokenSequence& query,
               const TokenSequence& document) {
  if (!(sft_model.config() == reference.config())) {
    throw Error(ErrorCode::ConfigMismatch, "dp loss: reference and fine-tuned models have different configs");
  }
  const ScoringInput in = prepare_scoring_input(sft_model.config(), query, document);
  Graph frozen(Graph::Mode::NoGrad);
  const Tensor ref_rows = query_logprob_rows(frozen, reference, in);
  const Tensor rows = query_logprob_rows(graph, sft_model, in);
  return dp_loss_from_rows(graph, rows, ref_rows);
}

double mix_sft_loss(double rank, double ntp, double dp, double alpha, SftTerms terms) {
  if (!terms.ntp && !terms.dp) return rank;
  const double aux = (terms.ntp ? ntp : 0.0) + (terms.dp ? dp : 0.0);
  return alpha * rank + (1.0 - alpha) * aux;
}

SftLoss sft_loss(Graph& graph, const LmCheckpoint& model, const LmCheckpoint& reference,
                 const RankingInstance& example, const SftHyperparams& hp, SftTerms terms, NtpReduction reduction) {
  hp.validate();
  check_example(example, hp);
  const bool use_aux = terms.ntp || terms.dp;
  if (use_aux && !(model.config() == reference.config())) {
    throw Error(ErrorCode::ConfigMismatch, "sft loss: reference and fine-tuned models have different configs");
  }

  Tensor pos_rows;
  std::size_t qlen = 0;
  std::vector<Tensor> scores;
  scores.reserve(example.negatives.size() + 1);
  scores.push_back(log_score_of(graph, model, example.query, example.positive, &pos_rows, &qlen));
  for (const auto& neg : example.negatives) scores.push_back(log_score_of(graph, model, example.query, neg));
  const Tensor rank = rank_loss_from_log_scores(graph, ops::stack(graph, scores), hp.temperature);

  SftLoss out;
  out.rank = rank.item();
  if (!use_aux) {
    out.total = rank;
    return out;
  }

  std::vector<Tensor> aux_terms;
  if (terms.ntp) {
    Tensor ntp = ops::scale(graph, scores.front(), -1.0);
    if (reduction == NtpReduction::PerToken) ntp = ops::scale(graph, ntp, 1.0 / static_cast<double>(qlen));
    out.ntp = ntp.item();
    aux_terms.push_back(ntp);
  }
  if (terms.dp) {
    const ScoringInput in = prepare_scoring_input(reference.config(), example.query, example.positive);
    Graph frozen(Graph::Mode::NoGrad);
    const Tensor ref_rows = query_logprob_rows(frozen, reference, in);
    const Tensor dp = dp_loss_from_rows(graph, pos_rows, ref_rows);
    out.dp = dp.item();
    aux_terms.push_back(dp);
  }
  Tensor aux = aux_terms.front();
  if (aux_terms.size() == 2) aux = ops::add(graph, aux_terms[0], aux_terms[1]);
  out.total = ops::add(graph, ops::scale(graph, rank, hp.alpha), ops::scale(graph, aux, 1.0 - hp.alpha));
  return out;
}

}  // namespace tsarank
