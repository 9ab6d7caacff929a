#include "tsarank/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_set>

#include "tsarank/bm25.hpp"
#include "tsarank/error.hpp"
#include "tsarank/hash.hpp"
#include "tsarank/rng.hpp"

namespace tsarank {

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::Sampled: return "sampled";
    case QueryMode::Contiguous: return "contiguous";
    case QueryMode::Leading: return "leading";
  }
  return "sampled";
}

QueryMode query_mode_from(std::string_view name) {
  if (name == "sampled") return QueryMode::Sampled;
  if (name == "contiguous") return QueryMode::Contiguous;
  if (name == "leading") return QueryMode::Leading;
  throw Error(ErrorCode::ConfigValidation, "unknown query mode '" + std::string(name) + "'");
}

void SynthParams::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, "synth: " + msg); };
  if (letters.empty() || digits.empty()) fail("letters and digits must be nonempty");
  if (std::set<char>(letters.begin(), letters.end()).size() != letters.size()) fail("letters repeat");
  if (std::set<char>(digits.begin(), digits.end()).size() != digits.size()) fail("digits repeat");
  if (doc_length < 2) fail("doc_length must be >= 2");
  if (query_length < 1 || query_length >= doc_length) fail("query_length must lie in [1, doc_length)");
  if (doc_length > lexicon_size()) fail("doc_length exceeds the lexicon size");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise_rate must lie in [0, 1]");
  if (!(ranking_noise_rate >= 0.0 && ranking_noise_rate <= 1.0)) fail("ranking_noise_rate must lie in [0, 1]");
  if (distractors_per_query > 0 && doc_length < 2 * query_length) {
    fail("distractors need doc_length >= 2 * query_length");
  }
  const std::size_t needed = (train_queries + eval_queries) * (1 + distractors_per_query);
  if (corpus_size < needed) {
    fail("corpus_size " + std::to_string(corpus_size) + " cannot hold " + std::to_string(needed) +
         " positives and distractors");
  }
}

namespace {

using Words = std::vector<std::size_t>;  // lexicon indices

struct Generator {
  const SynthParams& p;
  std::vector<std::string> lexicon;
  Rng rng;

  Generator(const SynthParams& params, std::uint64_t seed) : p(params), rng(derive_seed(seed, "data")) {
    for (char l : p.letters)
      for (char d : p.digits) lexicon.push_back(std::string{l, d});
  }

  Words random_doc() { return sample_without_replacement(rng, lexicon.size(), p.doc_length); }

  Words cut_query(const Words& doc, QueryMode mode, double noise) {
    Words q;
    switch (mode) {
      case QueryMode::Leading:
        q.assign(doc.begin(), doc.begin() + static_cast<std::ptrdiff_t>(p.query_length));
        break;
      case QueryMode::Contiguous: {
        const std::size_t start = uniform_index(rng, doc.size() - p.query_length + 1);
        q.assign(doc.begin() + static_cast<std::ptrdiff_t>(start),
                 doc.begin() + static_cast<std::ptrdiff_t>(start + p.query_length));
        break;
      }
      case QueryMode::Sampled: {
        auto picks = sample_without_replacement(rng, doc.size(), p.query_length);
        std::sort(picks.begin(), picks.end());
        for (std::size_t i : picks) q.push_back(doc[i]);
        break;
      }
    }
    for (auto& w : q) {
      if (noise > 0.0 && uniform_unit(rng) < noise) w = uniform_index(rng, lexicon.size());
    }
    return q;
  }

  // A document holding `query` contiguously at a non-leading offset, with no
  // query word in the leading span.
  Words distractor(const Words& query) {
    const std::unordered_set<std::size_t> banned(query.begin(), query.end());
    Words filler;
    while (filler.size() < p.doc_length - query.size()) {
      const std::size_t w = uniform_index(rng, lexicon.size());
      if (banned.count(w) || std::find(filler.begin(), filler.end(), w) != filler.end()) continue;
      filler.push_back(w);
    }
    const std::size_t offset = p.query_length + uniform_index(rng, p.doc_length - 2 * query.size() + 1);
    Words doc(filler.begin(), filler.begin() + static_cast<std::ptrdiff_t>(offset));
    doc.insert(doc.end(), query.begin(), query.end());
    doc.insert(doc.end(), filler.begin() + static_cast<std::ptrdiff_t>(offset), filler.end());
    return doc;
  }

  std::string render(const Words& words) const {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out.push_back(' ');
      out += lexicon[words[i]];
    }
    return out;
  }
};

std::string make_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, n);
  return buf;
}

}  // namespace

SynthData synth_corpus(const SynthParams& params, std::uint64_t seed) {
  params.validate();
  Generator gen(params, seed);
  SynthData out;

  for (std::size_t i = 0; i < params.weak_pairs; ++i) {
    const Words doc = gen.random_doc();
    const Words q = gen.cut_query(doc, params.weak_mode, params.noise_rate);
    out.weak_pairs.push_back({make_id('w', i), gen.render(q), gen.render(doc), pair_category_at(i)});
  }

  // Ranking corpus: per query one positive plus distractors, then filler.
  const std::size_t nq = params.train_queries + params.eval_queries;
  std::vector<Words> docs;
  std::vector<Words> queries;
  std::vector<std::size_t> positive_of;
  for (std::size_t i = 0; i < nq; ++i) {
    Words doc = gen.random_doc();
    Words q = gen.cut_query(doc, params.ranking_mode, params.ranking_noise_rate);
    positive_of.push_back(docs.size());
    docs.push_back(doc);
    for (std::size_t k = 0; k < params.distractors_per_query; ++k) docs.push_back(gen.distractor(q));
    queries.push_back(std::move(q));
  }
  while (docs.size() < params.corpus_size) docs.push_back(gen.random_doc());

  // Ids follow a shuffled order so that corpus position carries no signal.
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(gen.rng, i)]);
  std::vector<std::string> id_of(docs.size());
  for (std::size_t slot = 0; slot < order.size(); ++slot) id_of[order[slot]] = make_id('d', slot);
  out.corpus.resize(docs.size());
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    out.corpus[slot] = {id_of[order[slot]], gen.render(docs[order[slot]])};
  }

  for (std::size_t i = 0; i < nq; ++i) {
    Query q{make_id('q', i), gen.render(queries[i])};
    out.qrels.add(q.id, id_of[positive_of[i]], 1);
    (i < params.train_queries ? out.train_queries : out.eval_queries).push_back(std::move(q));
  }
  return out;
}

double mean_query_overlap(const std::vector<WeakPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto q = analyze(p.query);
    const auto d = analyze(p.document);
    const std::unordered_set<std::string> dset(d.begin(), d.end());
    std::size_t hit = 0;
    for (const auto& w : q) hit += dset.count(w);
    total += q.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(q.size());
  }
  return total / static_cast<double>(pairs.size());
}

std::string fingerprint(const SynthData& data) {
  std::uint64_t h = fnv1a64("tsarank-synth");
  auto mix = [&h](std::string_view s) {
    h = fnv1a64(s, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  };
  for (const auto& p : data.weak_pairs) {
    mix(p.id);
    mix(p.query);
    mix(p.document);
    mix(to_string(p.category));
  }
  for (const auto& d : data.corpus) {
    mix(d.id);
    mix(d.text);
  }
  for (const auto* qs : {&data.train_queries, &data.eval_queries})
    for (const auto& q : *qs) {
      mix(q.id);
      mix(q.text);
    }
  for (const auto& q : data.qrels.query_ids())
    for (const auto& [d, g] : data.qrels.judged(q)) {
      mix(q);
      mix(d);
      mix(std::to_string(g));
    }
  return hex64(h);
}

}  // namespace tsarank
