#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tsarank/data.hpp"

namespace tsarank {

/// Lowercases and splits on every non-alphanumeric byte.
std::vector<std::string> analyze(std::string_view text);

/// Okapi BM25 free parameters.
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredId {
  std::string doc_id;
  double score = 0.0;
};

/// Term -> postings index over a fixed corpus. Immutable once built.
class InvertedIndex {
 public:
  struct Posting {
    std::uint32_t doc;  // ordinal, in corpus order
    std::uint32_t tf;
  };

  static InvertedIndex build(std::span<const CorpusDoc> docs);

  std::size_t size() const noexcept { return doc_ids_.size(); }
  double average_length() const noexcept { return avg_length_; }
  std::size_t doc_length(std::size_t ordinal) const { return doc_lengths_.at(ordinal); }
  const std::string& doc_id(std::size_t ordinal) const { return doc_ids_.at(ordinal); }
  std::optional<std::size_t> ordinal(const std::string& doc_id) const;
  /// Postings of a term, sorted by doc ordinal; empty for unknown terms.
  std::span<const Posting> postings(const std::string& term) const;
  std::size_t document_frequency(const std::string& term) const { return postings(term).size(); }

  /// Robertson-Sparck Jones IDF: ln((N - df + 0.5) / (df + 0.5)).
  double idf(const std::string& term) const;

  /// BM25 of one document; query terms are summed with repetition.
  double score(std::span<const std::string> query_terms, const std::string& doc_id, Bm25Params params = {}) const;

  /// Every document, sorted by score descending then doc id ascending.
  std::vector<ScoredId> rank_all(std::span<const std::string> query_terms, Bm25Params params = {}) const;

 private:
  double term_weight(double idf, std::uint32_t tf, std::size_t doc_len, Bm25Params params) const;

  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> ordinals_;
  std::vector<std::size_t> doc_lengths_;
  double avg_length_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Top `top_k` BM25 documents that are not positives for the query, in score order.
std::vector<ScoredId> mine_negatives(const InvertedIndex& index, std::string_view query,
                                     const std::unordered_set<std::string>& positive_ids, std::size_t top_k,
                                     Bm25Params params = {});

/// Top `n` BM25 documents for evaluation (no exclusion).
std::vector<ScoredId> build_candidates(const InvertedIndex& index, std::string_view query, std::size_t n,
                                       Bm25Params params = {});

struct TrainingQuery {
  std::string id;
  std::string text;
  std::vector<std::string> positive_ids;
  std::vector<std::string> candidate_ids;  // mined negatives, score order
};

/// For each query: one positive and m negatives drawn uniformly without
/// replacement from its candidates. Deterministic in `seed`.
std::vector<RankExample> sample_examples(std::span<const TrainingQuery> queries, std::size_t m, std::uint64_t seed,
                                         std::size_t miner_top_k = 0);

}  // namespace tsarank
