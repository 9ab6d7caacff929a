#include "tsarank/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tsarank {

namespace {

constexpr std::array<std::string_view, kPairCategoryCount> kCategoryNames = {
    "title-body",         "title-abstract",  "citation-reference", "post-comment",
    "entity-description", "question-answer", "summary-content",
};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  return out;
}

std::string required_string(const nlohmann::json& j, const char* field) {
  if (!j.contains(field)) throw Error(ErrorCode::Parse, std::string("missing field \"") + field + "\"");
  if (!j.at(field).is_string()) throw Error(ErrorCode::Parse, std::string("field \"") + field + "\" is not a string");
  return j.at(field).get<std::string>();
}

/// Parses every nonblank line with `parse`; failures become LineErrors.
template <typename T, typename Parse>
LoadResult<T> load_jsonl(const std::filesystem::path& path, Parse parse) {
  auto in = open_input(path);
  LoadResult<T> result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw Error(ErrorCode::Parse, "line is not a JSON object");
      result.items.push_back(parse(j));
    } catch (const Error& e) {
      result.rejected.push_back({lineno, e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what()});
    } catch (const nlohmann::json::exception& e) {
      result.rejected.push_back(
          {lineno, ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what()});
    }
  }
  return result;
}

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  auto out = open_output(path);
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

std::string_view to_string(PairCategory category) { return kCategoryNames[static_cast<std::size_t>(category)]; }

std::optional<PairCategory> pair_category_from(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == name) return static_cast<PairCategory>(i);
  return std::nullopt;
}

PairCategory pair_category_at(std::size_t index) { return static_cast<PairCategory>(index % kPairCategoryCount); }

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

LoadResult<WeakPair> load_weak_pairs(const std::filesystem::path& path) {
  return load_jsonl<WeakPair>(path, [](const nlohmann::json& j) {
    WeakPair p;
    p.id = required_string(j, "id");
    p.query = normalize_whitespace(required_string(j, "query"));
    p.document = normalize_whitespace(required_string(j, "document"));
    const std::string cat = required_string(j, "category");
    const auto parsed = pair_category_from(cat);
    if (!parsed) throw Error(ErrorCode::UnknownCategory, "unknown category \"" + cat + "\"");
    p.category = *parsed;
    if (p.query.empty() || p.document.empty()) throw Error(ErrorCode::Parse, "query and document must be nonempty");
    return p;
  });
}

void write_weak_pairs(const std::filesystem::path& path, std::span<const WeakPair> pairs) {
  std::vector<nlohmann::json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    rows.push_back({{"id", p.id}, {"query", p.query}, {"document", p.document}, {"category", to_string(p.category)}});
  }
  write_lines(path, rows);
}

LoadResult<CorpusDoc> load_corpus(const std::filesystem::path& path) {
  auto result = load_jsonl<CorpusDoc>(path, [](const nlohmann::json& j) {
    CorpusDoc d{required_string(j, "id"), normalize_whitespace(required_string(j, "text"))};
    if (d.text.empty()) throw Error(ErrorCode::Parse, "document text is empty");
    return d;
  });
  std::set<std::string> seen;
  for (const auto& d : result.items) {
    if (!seen.insert(d.id).second) {
      throw Error(ErrorCode::DuplicateId, path.string() + ": duplicate document id '" + d.id + "'");
    }
  }
  return result;
}

void write_corpus(const std::filesystem::path& path, std::span<const CorpusDoc> docs) {
  std::vector<nlohmann::json> rows;
  rows.reserve(docs.size());
  for (const auto& d : docs) rows.push_back({{"id", d.id}, {"text", d.text}});
  write_lines(path, rows);
}

LoadResult<Query> load_queries(const std::filesystem::path& path) {
  return load_jsonl<Query>(path, [](const nlohmann::json& j) {
    Query q{required_string(j, "id"), normalize_whitespace(required_string(j, "text"))};
    if (q.text.empty()) throw Error(ErrorCode::Parse, "query text is empty");
    return q;
  });
}

void write_queries(const std::filesystem::path& path, std::span<const Query> queries) {
  std::vector<nlohmann::json> rows;
  rows.reserve(queries.size());
  for (const auto& q : queries) rows.push_back({{"id", q.id}, {"text", q.text}});
  write_lines(path, rows);
}

void Qrels::add(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0) {
    throw Error(ErrorCode::InvalidArgument,
                "negative grade " + std::to_string(grade) + " for (" + query_id + ", " + doc_id + ")");
  }
  auto [it, inserted] = grades_[query_id].emplace(doc_id, grade);
  if (!inserted) throw Error(ErrorCode::DuplicateId, "second grade for (" + query_id + ", " + doc_id + ")");
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
  auto q = grades_.find(query_id);
  if (q == grades_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

bool Qrels::has_query(const std::string& query_id) const { return grades_.count(query_id) != 0; }

const std::map<std::string, int>& Qrels::judged(const std::string& query_id) const {
  static const std::map<std::string, int> kEmpty;
  auto q = grades_.find(query_id);
  return q == grades_.end() ? kEmpty : q->second;
}

std::vector<std::string> Qrels::query_ids() const {
  std::vector<std::string> ids;
  for (const auto& [q, _] : grades_) ids.push_back(q);
  return ids;
}

std::vector<std::string> Qrels::relevant(const std::string& query_id) const {
  std::vector<std::string> ids;
  for (const auto& [d, g] : judged(query_id))
    if (g > 0) ids.push_back(d);
  return ids;
}

std::size_t Qrels::size() const {
  std::size_t n = 0;
  for (const auto& [_, docs] : grades_) n += docs.size();
  return n;
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string qid, did, grade_text;
    if (!std::getline(fields, qid, '\t') || !std::getline(fields, did, '\t') || !std::getline(fields, grade_text)) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": bad grade '" + grade_text + "'");
    }
    try {
      qrels.add(qid, did, grade);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return qrels;
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  auto out = open_output(path);
  for (const auto& q : qrels.query_ids())
    for (const auto& [d, g] : qrels.judged(q)) out << q << '\t' << d << '\t' << g << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void RankExample::validate(std::size_t m) const {
  if (negative_ids.size() != m) {
    throw Error(ErrorCode::InvalidArgument, "example for query " + query_id + " has " +
                                                std::to_string(negative_ids.size()) + " negatives, expected " +
                                                std::to_string(m));
  }
  std::set<std::string> seen;
  for (const auto& n : negative_ids) {
    if (n == positive_id) {
      throw Error(ErrorCode::InvalidArgument, "example for query " + query_id + " lists its positive as a negative");
    }
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::DuplicateId, "example for query " + query_id + " repeats negative " + n);
    }
  }
}

LoadResult<RankExample> load_rank_examples(const std::filesystem::path& path) {
  return load_jsonl<RankExample>(path, [](const nlohmann::json& j) {
    RankExample ex;
    ex.query_id = required_string(j, "query_id");
    ex.query = normalize_whitespace(required_string(j, "query"));
    ex.positive_id = required_string(j, "positive_id");
    if (!j.contains("negative_ids") || !j.at("negative_ids").is_array()) {
      throw Error(ErrorCode::Parse, "missing array field \"negative_ids\"");
    }
    ex.negative_ids = j.at("negative_ids").get<std::vector<std::string>>();
    ex.miner_top_k = j.value("miner_top_k", std::size_t{0});
    ex.seed = j.value("seed", std::uint64_t{0});
    ex.validate(ex.negative_ids.size());
    return ex;
  });
}

void write_rank_examples(const std::filesystem::path& path, std::span<const RankExample> examples) {
  std::vector<nlohmann::json> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    rows.push_back({{"query_id", ex.query_id},
                    {"query", ex.query},
                    {"positive_id", ex.positive_id},
                    {"negative_ids", ex.negative_ids},
                    {"miner_top_k", ex.miner_top_k},
                    {"seed", ex.seed}});
  }
  write_lines(path, rows);
}

}  // namespace tsarank
