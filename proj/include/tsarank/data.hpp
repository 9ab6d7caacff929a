#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsarank/error.hpp"

namespace tsarank {

/// Source categories of weakly supervised (short text, long text) pairs.
enum class PairCategory {
  TitleBody,
  TitleAbstract,
  CitationReference,
  PostComment,
  EntityDescription,
  QuestionAnswer,
  SummaryContent,
};

inline constexpr std::size_t kPairCategoryCount = 7;

std::string_view to_string(PairCategory category);
std::optional<PairCategory> pair_category_from(std::string_view name);
PairCategory pair_category_at(std::size_t index);

struct WeakPair {
  std::string id;
  std::string query;
  std::string document;
  PairCategory category = PairCategory::TitleBody;
};

struct CorpusDoc {
  std::string id;
  std::string text;
};

struct Query {
  std::string id;
  std::string text;
};

/// A rejected input line; loading continues past it.
struct LineError {
  std::size_t line = 0;
  ErrorCode code = ErrorCode::Parse;
  std::string message;
};

template <typename T>
struct LoadResult {
  std::vector<T> items;
  std::vector<LineError> rejected;
};

/// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// JSON-Lines {id, query, document, category}. Texts are whitespace-normalized.
LoadResult<WeakPair> load_weak_pairs(const std::filesystem::path& path);
void write_weak_pairs(const std::filesystem::path& path, std::span<const WeakPair> pairs);

/// JSON-Lines {id, text}.
LoadResult<CorpusDoc> load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const CorpusDoc> docs);

/// JSON-Lines {id, text}.
LoadResult<Query> load_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, std::span<const Query> queries);

/// Relevance judgments: (query id, doc id) -> grade >= 0.
class Qrels {
 public:
  /// Throws on a negative grade or a second grade for the same pair.
  void add(const std::string& query_id, const std::string& doc_id, int grade);
  /// Grade of a judged pair, 0 for an unjudged one.
  int grade(const std::string& query_id, const std::string& doc_id) const;
  bool has_query(const std::string& query_id) const;
  /// All judgments of one query (empty when none).
  const std::map<std::string, int>& judged(const std::string& query_id) const;
  std::vector<std::string> query_ids() const;
  /// Doc ids with grade > 0.
  std::vector<std::string> relevant(const std::string& query_id) const;
  std::size_t size() const;

 private:
  std::map<std::string, std::map<std::string, int>> grades_;
};

/// TSV: query id, doc id, grade.
Qrels load_qrels(const std::filesystem::path& path);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

/// One training query with its positive and m sampled negatives, by doc id.
struct RankExample {
  std::string query_id;
  std::string query;
  std::string positive_id;
  std::vector<std::string> negative_ids;
  // provenance
  std::size_t miner_top_k = 0;
  std::uint64_t seed = 0;

  /// Positive not among negatives, negatives distinct, exactly m of them.
  void validate(std::size_t m) const;
};

/// JSON-Lines {query_id, query, positive_id, negative_ids[m]} (+ provenance).
LoadResult<RankExample> load_rank_examples(const std::filesystem::path& path);
void write_rank_examples(const std::filesystem::path& path, std::span<const RankExample> examples);

}  // namespace tsarank
