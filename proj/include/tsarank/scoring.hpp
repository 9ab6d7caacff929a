#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsarank/model.hpp"
#include "tsarank/tensor.hpp"
#include "tsarank/tokenizer.hpp"

namespace tsarank {

// Query-likelihood relevance: log score(q, d) = sum_j log p(q_j | prompt(d), q_<j),
// with prompt(d) = "Document: " d " Query:". A single space separates the
// prompt from the query; it is context, not a scored query token.
inline constexpr std::string_view kPromptPrefix = "Document: ";
inline constexpr std::string_view kPromptSuffix = " Query:";
inline constexpr TokenId kQuerySeparator = static_cast<TokenId>(' ');

TokenSequence build_prompt(const TokenSequence& document);

/// Teacher-forced model input for one (query, document) pair.
struct ScoringInput {
  std::vector<TokenId> ids;         // prompt(d) + ' ' + q[0 .. |q|-1)
  std::size_t first_query_row = 0;  // row of the distribution over q[0]
  std::vector<TokenId> targets;     // q
  std::size_t document_tokens_kept = 0;
};

/// Applies the truncation policy: the document is cut from the right so the
/// whole input fits max_sequence_length; the query is never truncated.
ScoringInput prepare_scoring_input(const LmConfig& config, const TokenSequence& query, const TokenSequence& document);

/// |q| x vocab log-distributions at the query-token positions, in one pass.
Tensor query_logprob_rows(Graph& graph, const LmCheckpoint& model, const ScoringInput& input);
/// log p(q_j | ...) for every query token, picked out of query_logprob_rows.
Tensor query_token_logprobs(Graph& graph, const Tensor& rows, const ScoringInput& input);

double relevance_log_score(const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document);
double perplexity(const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document);

struct Document {
  std::string id;
  TokenSequence tokens;
};

struct ScoredDocument {
  std::string doc_id;
  double log_score = 0.0;
  double score = 0.0;  // exp(log_score)
  std::size_t rank = 0;
};

struct RankedList {
  std::string query_id;
  std::vector<ScoredDocument> docs;
};

/// Pointwise ranking: scores every document independently and sorts by
/// log_score descending, ties kept in input order.
RankedList rank(const LmCheckpoint& model, std::string query_id, const TokenSequence& query,
                std::span<const Document> docs);

/// Run file: one "query_id<TAB>doc_id<TAB>rank<TAB>log_score" line per document.
void write_run_file(const std::filesystem::path& path, std::span<const RankedList> runs);
std::vector<RankedList> read_run_file(const std::filesystem::path& path);

}  // namespace tsarank
