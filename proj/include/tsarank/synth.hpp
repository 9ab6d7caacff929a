#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tsarank/data.hpp"

namespace tsarank {

/// How a query is cut out of its positive document.
enum class QueryMode {
  Sampled,     // ordered random subset of the document's words
  Contiguous,  // random contiguous span
  Leading,     // the first query_length words
};

std::string_view to_string(QueryMode mode);
QueryMode query_mode_from(std::string_view name);

/// Parameters of the synthetic ranking world. Words are letter+digit pairs
/// ("k7"), so the vocabulary subset is letters x digits.
struct SynthParams {
  std::string letters = "abcdefghijklmnopqrstuvwxyz";
  std::string digits = "0123456789";
  std::size_t doc_length = 12;    // words per document
  std::size_t query_length = 4;   // words per query
  std::size_t weak_pairs = 5000;
  std::size_t corpus_size = 3000; // ranking corpus, including positives and distractors
  std::size_t train_queries = 500;
  std::size_t eval_queries = 200;
  double noise_rate = 0.1;        // weak-pair query corruption
  double ranking_noise_rate = 0.0;
  QueryMode weak_mode = QueryMode::Sampled;
  QueryMode ranking_mode = QueryMode::Leading;
  /// Documents per ranking query that contain its words outside the leading span.
  std::size_t distractors_per_query = 2;

  std::size_t lexicon_size() const { return letters.size() * digits.size(); }
  void validate() const;
};

struct SynthData {
  std::vector<WeakPair> weak_pairs;
  std::vector<CorpusDoc> corpus;
  std::vector<Query> train_queries;
  std::vector<Query> eval_queries;
  Qrels qrels;  // grade 1 for each query's positive, train and eval
};

/// Deterministic in (params, seed). Train and eval queries are disjoint and
/// have distinct positive documents.
SynthData synth_corpus(const SynthParams& params, std::uint64_t seed);

/// Fraction of query words that occur in the document, averaged over pairs.
double mean_query_overlap(const std::vector<WeakPair>& pairs);

/// Stable fingerprint of a generated dataset.
std::string fingerprint(const SynthData& data);

}  // namespace tsarank
