#include "tsarank/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "tsarank/error.hpp"
#include "tsarank/rng.hpp"

namespace tsarank {

std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      terms.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

InvertedIndex InvertedIndex::build(std::span<const CorpusDoc> docs) {
  InvertedIndex index;
  std::size_t total_len = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = docs[i];
    if (!index.ordinals_.emplace(doc.id, i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate document id '" + doc.id + "' in index input");
    }
    index.doc_ids_.push_back(doc.id);
    const auto terms = analyze(doc.text);
    index.doc_lengths_.push_back(terms.size());
    total_len += terms.size();
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(i), count});
    }
  }
  index.avg_length_ = docs.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(docs.size());
  return index;
}

std::optional<std::size_t> InvertedIndex::ordinal(const std::string& doc_id) const {
  auto it = ordinals_.find(doc_id);
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

std::span<const InvertedIndex::Posting> InvertedIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

double InvertedIndex::idf(const std::string& term) const {
  const double n = static_cast<double>(size());
  const double df = static_cast<double>(document_frequency(term));
  return std::log((n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::term_weight(double idf, std::uint32_t tf, std::size_t doc_len, Bm25Params p) const {
  const double f = static_cast<double>(tf);
  const double norm = 1.0 - p.b + p.b * static_cast<double>(doc_len) / avg_length_;
  return idf * f * (p.k1 + 1.0) / (f + p.k1 * norm);
}

double InvertedIndex::score(std::span<const std::string> query_terms, const std::string& doc_id,
                            Bm25Params params) const {
  const auto ord = ordinal(doc_id);
  if (!ord) throw Error(ErrorCode::UnknownId, "document '" + doc_id + "' is not in the index");
  double total = 0.0;
  for (const auto& term : query_terms) {
    const auto plist = postings(term);
    auto it = std::lower_bound(plist.begin(), plist.end(), *ord,
                               [](const Posting& p, std::size_t d) { return p.doc < d; });
    if (it == plist.end() || it->doc != *ord) continue;
    total += term_weight(idf(term), it->tf, doc_lengths_[*ord], params);
  }
  return total;
}

std::vector<ScoredId> InvertedIndex::rank_all(std::span<const std::string> query_terms, Bm25Params params) const {
  std::vector<double> acc(size(), 0.0);
  for (const auto& term : query_terms) {
    const auto plist = postings(term);
    if (plist.empty()) continue;
    const double w = idf(term);
    for (const auto& p : plist) acc[p.doc] += term_weight(w, p.tf, doc_lengths_[p.doc], params);
  }
  std::vector<ScoredId> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back({doc_ids_[i], acc[i]});
  std::sort(out.begin(), out.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return out;
}

std::vector<ScoredId> mine_negatives(const InvertedIndex& index, std::string_view query,
                                     const std::unordered_set<std::string>& positive_ids, std::size_t top_k,
                                     Bm25Params params) {
  if (index.size() == 0) throw Error(ErrorCode::EmptyInput, "cannot mine negatives from an empty index");
  if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
  const auto terms = analyze(query);
  std::vector<ScoredId> out;
  for (auto& s : index.rank_all(terms, params)) {
    if (out.size() == top_k) break;
    if (positive_ids.count(s.doc_id)) continue;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredId> build_candidates(const InvertedIndex& index, std::string_view query, std::size_t n,
                                       Bm25Params params) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "candidate count must be >= 1");
  auto all = index.rank_all(analyze(query), params);
  if (all.size() > n) all.resize(n);
  return all;
}

std::vector<RankExample> sample_examples(std::span<const TrainingQuery> queries, std::size_t m, std::uint64_t seed,
                                         std::size_t miner_top_k) {
  std::vector<RankExample> out;
  out.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    if (q.positive_ids.empty()) {
      throw Error(ErrorCode::InsufficientCandidates, "query " + q.id + " has no positive document");
    }
    if (q.candidate_ids.size() < m) {
      throw Error(ErrorCode::InsufficientCandidates, "query " + q.id + " has " + std::to_string(q.candidate_ids.size()) +
                                                         " candidates, needs m = " + std::to_string(m));
    }
    Rng rng(derive_seed(seed, "sampling", qi));
    RankExample ex;
    ex.query_id = q.id;
    ex.query = q.text;
    ex.positive_id = q.positive_ids[uniform_index(rng, q.positive_ids.size())];
    for (std::size_t idx : sample_without_replacement(rng, q.candidate_ids.size(), m)) {
      ex.negative_ids.push_back(q.candidate_ids[idx]);
    }
    ex.miner_top_k = miner_top_k;
    ex.seed = seed;
    ex.validate(m);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tsarank
