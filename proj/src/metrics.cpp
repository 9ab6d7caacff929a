#include "tsarank/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tsarank/error.hpp"

namespace tsarank {

double dcg_at_k(std::span<const int> grades, std::size_t k) {
  double total = 0.0;
  const std::size_t n = std::min(k, grades.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (grades[i] <= 0) continue;
    total += (std::exp2(static_cast<double>(grades[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return total;
}

double ndcg_at_k(const RankedList& ranked, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "ndcg cutoff k must be >= 1");
  std::vector<int> achieved;
  achieved.reserve(ranked.docs.size());
  for (const auto& d : ranked.docs) achieved.push_back(qrels.grade(ranked.query_id, d.doc_id));
  std::vector<int> ideal;
  for (const auto& [_, g] : qrels.judged(ranked.query_id)) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg_at_k(ideal, k);
  if (idcg <= 0.0) return 0.0;
  return dcg_at_k(achieved, k) / idcg;
}

std::vector<PplRow> ppl_report(std::span<const LabeledModel> models, std::span<const TextPair> positives,
                               std::span<const TextPair> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorCode::EmptyInput, "ppl report needs nonempty positive and negative pair sets");
  }
  auto mean_ppl = [](const LmCheckpoint& m, std::span<const TextPair> pairs) {
    std::vector<double> ppl(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(pairs.size()); ++i) {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      ppl[static_cast<std::size_t>(i)] =
          perplexity(m, tokenize(p.query, SpanRole::Query), tokenize(p.document, SpanRole::Document));
    }
    double total = 0.0;
    for (double v : ppl) total += v;
    return total / static_cast<double>(ppl.size());
  };
  std::vector<PplRow> rows;
  for (const auto& lm : models) {
    PplRow r;
    r.label = lm.label;
    r.stage = lm.model->stage();
    r.ppl_pos = mean_ppl(*lm.model, positives);
    r.ppl_neg = mean_ppl(*lm.model, negatives);
    r.delta = r.ppl_neg - r.ppl_pos;
    rows.push_back(r);
  }
  return rows;
}

std::string normalize_word(std::string_view word) {
  std::string out;
  for (unsigned char c : word) {
    if (std::ispunct(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> kWords = {
      "a",       "about",   "above",   "after",   "again",   "against", "all",     "am",      "an",      "and",
      "any",     "are",     "as",      "at",      "be",      "because", "been",    "before",  "being",   "below",
      "between", "both",    "but",     "by",      "can",     "could",   "did",     "do",      "does",    "doing",
      "down",    "during",  "each",    "few",     "for",     "from",    "further", "had",     "has",     "have",
      "having",  "he",      "her",     "here",    "hers",    "herself", "him",     "himself", "his",     "how",
      "i",       "if",      "in",      "into",    "is",      "it",      "its",     "itself",  "just",    "me",
      "more",    "most",    "my",      "myself",  "no",      "nor",     "not",     "now",     "of",      "off",
      "on",      "once",    "only",    "or",      "other",   "our",     "ours",    "ourselves", "out",   "over",
      "own",     "same",    "she",     "should",  "so",      "some",    "such",    "than",    "that",    "the",
      "their",   "theirs",  "them",    "themselves", "then", "there",   "these",   "they",    "this",    "those",
      "through", "to",      "too",     "under",   "until",   "up",      "very",    "was",     "we",      "were",
      "what",    "when",    "where",   "which",   "while",   "who",     "whom",    "why",     "will",    "with",
      "would",   "you",     "your",    "yours",   "yourself", "yourselves", "also", "may",    "might",   "must",
      "shall",   "upon",    "whether", "within",  "without", "yet",     "however", "therefore", "thus",  "via",
      "etc",     "among",   "across",  "along",   "around",  "since",   "though",  "unless",  "whereas", "whose",
  };
  return kWords;
}

TokenStats token_stats(std::span<const TextPair> generated, const std::unordered_set<std::string>& stopwords) {
  TokenStats st;
  double doc_total = 0.0, stop_total = 0.0;
  for (const auto& pair : generated) {
    std::vector<std::string> words;
    std::istringstream qs(pair.query);
    for (std::string w; qs >> w;) {
      auto n = normalize_word(w);
      if (!n.empty()) words.push_back(std::move(n));
    }
    if (words.empty()) {
      ++st.skipped_empty;
      continue;
    }
    std::unordered_set<std::string> doc_words;
    std::istringstream ds(pair.document);
    for (std::string w; ds >> w;) {
      auto n = normalize_word(w);
      if (!n.empty()) doc_words.insert(std::move(n));
    }
    std::size_t stop = 0, content = 0, in_doc = 0;
    for (const auto& w : words) {
      if (stopwords.count(w)) {
        ++stop;
      } else {
        ++content;
        in_doc += doc_words.count(w);
      }
    }
    stop_total += static_cast<double>(stop) / static_cast<double>(words.size());
    doc_total += content == 0 ? 0.0 : static_cast<double>(in_doc) / static_cast<double>(content);
    ++st.pairs;
  }
  if (st.pairs > 0) {
    st.doc_word_proportion = doc_total / static_cast<double>(st.pairs);
    st.stop_word_proportion = stop_total / static_cast<double>(st.pairs);
  }
  return st;
}

std::vector<TokenId> greedy_generate(const LmCheckpoint& model, const TokenSequence& document, std::size_t max_len) {
  if (max_len < 1) throw Error(ErrorCode::InvalidArgument, "max_len must be >= 1");
  const LmConfig& cfg = model.config();
  // Leave room for at least max_len new tokens by truncating the document.
  const std::size_t overhead = kPromptPrefix.size() + kPromptSuffix.size() + 1;
  if (overhead >= cfg.max_sequence_length) {
    throw Error(ErrorCode::SequenceTooLong, "prompt template alone exceeds max_sequence_length");
  }
  const std::size_t room = cfg.max_sequence_length - overhead;
  const std::size_t keep = std::min(document.size(), room > max_len ? room - max_len + 1 : std::size_t{1});
  TokenSequence doc;
  doc.ids.assign(document.ids.begin(), document.ids.begin() + static_cast<std::ptrdiff_t>(keep));
  doc.spans.push_back({SpanRole::Document, 0, keep});
  std::vector<TokenId> ids = build_prompt(doc).ids;
  ids.push_back(kQuerySeparator);

  std::vector<TokenId> out;
  while (out.size() < max_len && ids.size() <= cfg.max_sequence_length) {
    Graph g(Graph::Mode::NoGrad);
    const Tensor last = forward_logprobs(g, model, ids, ids.size() - 1);
    TokenId best = 0;
    double best_lp = last.at(0);
    for (std::size_t v = 1; v < cfg.vocab_size; ++v) {
      if (last.at(v) > best_lp) {
        best_lp = last.at(v);
        best = static_cast<TokenId>(v);
      }
    }
    if (best == tokens::kEos) break;
    out.push_back(best);
    ids.push_back(best);
  }
  return out;
}

void MetricsReport::finalize() {
  double total = 0.0;
  for (const auto& [_, v] : ndcg_per_query) total += v;
  ndcg_mean = ndcg_per_query.empty() ? 0.0 : total / static_cast<double>(ndcg_per_query.size());
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["meta"] = {{"label", meta.label}, {"stage", meta.stage}, {"seed", meta.seed}, {"config_hash", meta.config_hash}};
  j["k"] = k;
  j["ndcg_mean"] = ndcg_mean;
  j["ndcg_per_query"] = ndcg_per_query;
  if (ppl) j["ppl"] = {{"ppl_pos", ppl->ppl_pos}, {"ppl_neg", ppl->ppl_neg}, {"delta", ppl->delta}};
  if (tokens) {
    j["token_stats"] = {{"doc_word_proportion", tokens->doc_word_proportion},
                        {"stop_word_proportion", tokens->stop_word_proportion},
                        {"pairs", tokens->pairs},
                        {"skipped_empty", tokens->skipped_empty},
                        {"stopword_list", kStopwordListVersion},
                        {"note", "automated proxy: lowercase + punctuation stripping, no stemming"}};
  }
  return j;
}

MetricsReport evaluate_runs(std::span<const RankedList> runs, const Qrels& qrels, std::size_t k, RunMetadata meta) {
  MetricsReport report;
  report.meta = std::move(meta);
  report.k = k;
  for (const auto& run : runs) {
    if (!qrels.has_query(run.query_id)) {
      throw Error(ErrorCode::UnknownId, "run references query id '" + run.query_id + "' with no judgments");
    }
    report.ndcg_per_query[run.query_id] = ndcg_at_k(run, qrels, k);
  }
  report.finalize();
  return report;
}

EvalSet build_eval_set(std::span<const CorpusDoc> corpus, std::span<const Query> queries, const Qrels& qrels,
                       const EvalOptions& options) {
  if (options.k < 1) throw Error(ErrorCode::ConfigValidation, "eval k must be >= 1");
  const InvertedIndex index = InvertedIndex::build(corpus);
  EvalSet out;
  out.qrels = qrels;
  out.k = options.k;
  for (const auto& q : queries) {
    if (!qrels.has_query(q.id)) throw Error(ErrorCode::UnknownId, "eval query '" + q.id + "' has no judgments");
    EvalQuery eq{q.id, q.text, tokenize(q.text, SpanRole::Query), {}};
    const auto cands = build_candidates(index, q.text, options.candidates, options.bm25);
    for (const auto& c : cands) {
      eq.candidates.push_back({c.doc_id, tokenize(corpus[*index.ordinal(c.doc_id)].text)});
    }
    for (const auto& rel : qrels.relevant(q.id)) {
      const auto ord = index.ordinal(rel);
      if (!ord) throw Error(ErrorCode::UnknownId, "qrels document '" + rel + "' is not in the corpus");
      out.positives.push_back({q.text, corpus[*ord].text});
      if (out.generation_docs.size() < options.generation_docs) out.generation_docs.push_back(corpus[*ord].text);
    }
    for (const auto& c : cands) {
      if (qrels.grade(q.id, c.doc_id) > 0) continue;
      out.negatives.push_back({q.text, corpus[*index.ordinal(c.doc_id)].text});
      break;
    }
    out.queries.push_back(std::move(eq));
  }
  return out;
}

MetricsReport evaluate_model(const LmCheckpoint& model, const EvalSet& eval, RunMetadata meta, bool analysis,
                             std::size_t generation_max_len) {
  std::vector<RankedList> runs;
  runs.reserve(eval.queries.size());
  for (const auto& q : eval.queries) runs.push_back(rank(model, q.id, q.tokens, q.candidates));
  if (meta.stage.empty()) meta.stage = std::string(to_string(model.stage()));
  MetricsReport report = evaluate_runs(runs, eval.qrels, eval.k, std::move(meta));
  if (analysis) {
    const LabeledModel lm{report.meta.label, &model};
    report.ppl = ppl_report(std::span(&lm, 1), eval.positives, eval.negatives).front();
    std::vector<TextPair> generated(eval.generation_docs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(generated.size()); ++i) {
      const auto& doc = eval.generation_docs[static_cast<std::size_t>(i)];
      const auto ids = greedy_generate(model, tokenize(doc), generation_max_len);
      generated[static_cast<std::size_t>(i)] = {detokenize(ids), doc};
    }
    report.tokens = token_stats(generated, default_stopwords());
  }
  return report;
}

std::string format_table(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-22s %-6s %9s %10s %10s %10s %8s %8s\n", "run", "stage", "NDCG@k", "PPL_pos",
                "PPL_neg", "delta", "docword", "stopword");
  out << line;
  for (const auto& r : reports) {
    auto num = [](const std::optional<double>& v, const char* fmt) {
      char b[32];
      if (!v) return std::string("-");
      std::snprintf(b, sizeof(b), fmt, *v);
      return std::string(b);
    };
    const auto pp = r.ppl ? std::optional<double>(r.ppl->ppl_pos) : std::nullopt;
    const auto pn = r.ppl ? std::optional<double>(r.ppl->ppl_neg) : std::nullopt;
    const auto dl = r.ppl ? std::optional<double>(r.ppl->delta) : std::nullopt;
    const auto dw = r.tokens ? std::optional<double>(r.tokens->doc_word_proportion) : std::nullopt;
    const auto sw = r.tokens ? std::optional<double>(r.tokens->stop_word_proportion) : std::nullopt;
    std::snprintf(line, sizeof(line), "%-22s %-6s %9.4f %10s %10s %10s %8s %8s\n", r.meta.label.c_str(),
                  r.meta.stage.c_str(), r.ndcg_mean, num(pp, "%.3f").c_str(), num(pn, "%.3f").c_str(),
                  num(dl, "%.3f").c_str(), num(dw, "%.3f").c_str(), num(sw, "%.3f").c_str());
    out << line;
  }
  return out.str();
}

}  // namespace tsarank
