#include "tsarank/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tsarank/error.hpp"
#include "tsarank/ops.hpp"

namespace tsarank {

TokenSequence build_prompt(const TokenSequence& document) {
  if (document.empty()) throw Error(ErrorCode::EmptyInput, "cannot build a prompt for an empty document");
  TokenSequence prompt = tokenize(kPromptPrefix, SpanRole::Prompt);
  TokenSequence doc = document;
  if (doc.spans.empty()) doc.spans.push_back({SpanRole::Document, 0, doc.ids.size()});
  prompt.append(doc);
  prompt.append(tokenize(kPromptSuffix, SpanRole::Prompt));
  return prompt;
}

ScoringInput prepare_scoring_input(const LmConfig& config, const TokenSequence& query, const TokenSequence& document) {
  if (query.empty()) throw Error(ErrorCode::EmptyInput, "cannot score an empty query");
  if (document.empty()) throw Error(ErrorCode::EmptyInput, "cannot score against an empty document");
  const std::size_t overhead = kPromptPrefix.size() + kPromptSuffix.size() + 1;
  const std::size_t needed = overhead + query.size() - 1;
  if (needed >= config.max_sequence_length) {
    throw Error(ErrorCode::SequenceTooLong, "query of " + std::to_string(query.size()) +
                                               " tokens leaves no room for the document within max_sequence_length " +
                                               std::to_string(config.max_sequence_length));
  }
  const std::size_t keep = std::min(document.size(), config.max_sequence_length - needed);

  TokenSequence doc;
  doc.ids.assign(document.ids.begin(), document.ids.begin() + static_cast<std::ptrdiff_t>(keep));
  doc.spans.push_back({SpanRole::Document, 0, keep});
  const TokenSequence prompt = build_prompt(doc);

  ScoringInput in;
  in.ids = prompt.ids;
  in.ids.push_back(kQuerySeparator);
  in.first_query_row = in.ids.size() - 1;
  in.ids.insert(in.ids.end(), query.ids.begin(), query.ids.end() - 1);
  in.targets = query.ids;
  in.document_tokens_kept = keep;
  return in;
}

Tensor query_logprob_rows(Graph& graph, const LmCheckpoint& model, const ScoringInput& input) {
  return forward_logprobs(graph, model, input.ids, input.first_query_row);
}

Tensor query_token_logprobs(Graph& graph, const Tensor& rows, const ScoringInput& input) {
  std::vector<std::size_t> r(input.targets.size()), c(input.targets.size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  std::transform(input.targets.begin(), input.targets.end(), c.begin(),
                 [](TokenId t) { return static_cast<std::size_t>(t); });
  return ops::select(graph, rows, r, c);
}

double relevance_log_score(const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document) {
  Graph g(Graph::Mode::NoGrad);
  const ScoringInput in = prepare_scoring_input(model.config(), query, document);
  return ops::sum(g, query_token_logprobs(g, query_logprob_rows(g, model, in), in)).item();
}

double perplexity(const LmCheckpoint& model, const TokenSequence& query, const TokenSequence& document) {
  const double log_score = relevance_log_score(model, query, document);
  return std::exp(-log_score / static_cast<double>(query.size()));
}

RankedList rank(const LmCheckpoint& model, std::string query_id, const TokenSequence& query,
                std::span<const Document> docs) {
  if (docs.empty()) throw Error(ErrorCode::EmptyInput, "no documents to rank for query " + query_id);
  std::unordered_set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate document id '" + d.id + "' for query " + query_id);
    }
  }
  RankedList out;
  out.query_id = std::move(query_id);
  out.docs.resize(docs.size());
  std::vector<std::string> errors(docs.size());
  // Scoring reads the model only; pairs are independent.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(docs.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const double ls = relevance_log_score(model, query, docs[idx].tokens);
      out.docs[idx] = ScoredDocument{docs[idx].id, ls, std::exp(ls), 0};
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      // Re-run serially to surface the original error type.
      (void)relevance_log_score(model, query, docs[i].tokens);
    }
  }
  std::stable_sort(out.docs.begin(), out.docs.end(),
                   [](const ScoredDocument& a, const ScoredDocument& b) { return a.log_score > b.log_score; });
  for (std::size_t i = 0; i < out.docs.size(); ++i) out.docs[i].rank = i + 1;
  return out;
}

void write_run_file(const std::filesystem::path& path, std::span<const RankedList> runs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open run file " + path.string() + " for writing");
  char buf[64];
  for (const auto& run : runs)
    for (const auto& d : run.docs) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.log_score);
      out << run.query_id << '\t' << d.doc_id << '\t' << d.rank << '\t' << buf << '\n';
    }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<RankedList> read_run_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open run file " + path.string());
  std::vector<RankedList> runs;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string qid, did, rank_text, score_text;
    if (!std::getline(fields, qid, '\t') || !std::getline(fields, did, '\t') || !std::getline(fields, rank_text, '\t') ||
        !std::getline(fields, score_text)) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected 4 tab-separated fields");
    }
    ScoredDocument d;
    d.doc_id = did;
    try {
      d.rank = std::stoul(rank_text);
      d.log_score = std::stod(score_text);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": bad rank or score");
    }
    d.score = std::exp(d.log_score);
    auto [it, inserted] = index.emplace(qid, runs.size());
    if (inserted) runs.push_back(RankedList{qid, {}});
    runs[it->second].docs.push_back(d);
  }
  for (auto& run : runs) {
    std::stable_sort(run.docs.begin(), run.docs.end(),
                     [](const ScoredDocument& a, const ScoredDocument& b) { return a.rank < b.rank; });
  }
  return runs;
}

}  // namespace tsarank
