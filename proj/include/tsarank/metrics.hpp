#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tsarank/bm25.hpp"
#include "tsarank/data.hpp"
#include "tsarank/model.hpp"
#include "tsarank/scoring.hpp"

namespace tsarank {

/// DCG@k of grades listed in rank order: sum (2^g - 1) / log2(rank + 1).
double dcg_at_k(std::span<const int> grades, std::size_t k);

/// NDCG@k of a ranking against qrels. The ideal ordering is taken over every
/// judged document of the query; unjudged documents gain nothing. A query
/// without any positive grade scores 0.
double ndcg_at_k(const RankedList& ranked, const Qrels& qrels, std::size_t k);

struct TextPair {
  std::string query;
  std::string document;
};

struct PplRow {
  std::string label;
  Stage stage = Stage::Base;
  double ppl_pos = 0.0;
  double ppl_neg = 0.0;
  double delta = 0.0;  // ppl_neg - ppl_pos
};

struct LabeledModel {
  std::string label;
  const LmCheckpoint* model = nullptr;
};

/// Mean query perplexity over positive and negative pairs, per model.
std::vector<PplRow> ppl_report(std::span<const LabeledModel> models, std::span<const TextPair> positives,
                               std::span<const TextPair> negatives);

/// Lowercase with punctuation removed.
std::string normalize_word(std::string_view word);

/// Bundled English stopword list (version kStopwordListVersion).
const std::unordered_set<std::string>& default_stopwords();
inline constexpr std::string_view kStopwordListVersion = "en-1";

struct TokenStats {
  double doc_word_proportion = 0.0;
  double stop_word_proportion = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped_empty = 0;
};

/// Automated proxy for the share of query words that are document-relevant
/// and the share that are stopwords, averaged over pairs. Pairs whose query
/// has no words are skipped and counted.
TokenStats token_stats(std::span<const TextPair> generated, const std::unordered_set<std::string>& stopwords);

/// Greedy decoding after prompt(d) + ' ': argmax with lowest-id tie-break,
/// stopping at EOS or after max_len tokens (or at the context limit).
std::vector<TokenId> greedy_generate(const LmCheckpoint& model, const TokenSequence& document, std::size_t max_len);

struct RunMetadata {
  std::string label;
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct MetricsReport {
  RunMetadata meta;
  std::size_t k = 10;
  std::map<std::string, double> ndcg_per_query;
  double ndcg_mean = 0.0;
  std::optional<PplRow> ppl;
  std::optional<TokenStats> tokens;

  /// Recomputes ndcg_mean from ndcg_per_query.
  void finalize();
  nlohmann::json to_json() const;
};

/// Evaluates every run against qrels. Throws UnknownId for a run whose query
/// has no judgments.
MetricsReport evaluate_runs(std::span<const RankedList> runs, const Qrels& qrels, std::size_t k, RunMetadata meta);

/// One evaluation query with its BM25 candidate documents, tokenized.
struct EvalQuery {
  std::string id;
  std::string text;
  TokenSequence tokens;
  std::vector<Document> candidates;
};

/// Everything needed to evaluate a model: candidates, judgments, and the
/// pair sets used by the PPL and token analyses.
struct EvalSet {
  std::vector<EvalQuery> queries;
  Qrels qrels;
  std::size_t k = 10;
  std::vector<TextPair> positives;   // (query, relevant doc)
  std::vector<TextPair> negatives;   // (query, best-ranked non-relevant candidate)
  std::vector<std::string> generation_docs;
};

struct EvalOptions {
  std::size_t k = 10;
  std::size_t candidates = 100;
  std::size_t generation_docs = 50;  // documents used for greedy generation
  std::size_t generation_max_len = 16;
  Bm25Params bm25;
};

/// Builds candidates for every query with BM25 over the corpus. Throws
/// UnknownId when a query has no judgments.
EvalSet build_eval_set(std::span<const CorpusDoc> corpus, std::span<const Query> queries, const Qrels& qrels,
                       const EvalOptions& options);

/// Ranks every query's candidates and scores NDCG@k. With `analysis`, also
/// fills the PPL row and the token statistics of greedy generations.
MetricsReport evaluate_model(const LmCheckpoint& model, const EvalSet& eval, RunMetadata meta, bool analysis,
                             std::size_t generation_max_len = 16);

/// Fixed-width text table, one row per report.
std::string format_table(std::span<const MetricsReport> reports);

}  // namespace tsarank
