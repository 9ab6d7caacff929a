#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tsarank/error.hpp"
#include "tsarank/synth.hpp"

namespace tsarank {
namespace {

class DataFiles : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "tsarank_data_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }

  std::filesystem::path write(const std::string& name, const std::string& content) {
    std::ofstream(dir / name) << content;
    return dir / name;
  }
};

TEST(Data, NormalizeWhitespace) {
  EXPECT_EQ(normalize_whitespace("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(normalize_whitespace(" \n "), "");
}

TEST(Data, CategoriesRoundTrip) {
  for (std::size_t i = 0; i < kPairCategoryCount; ++i) {
    const PairCategory c = pair_category_at(i);
    EXPECT_EQ(pair_category_from(to_string(c)), c);
  }
  EXPECT_FALSE(pair_category_from("tweet-reply").has_value());
}

TEST_F(DataFiles, WeakPairsSkipBadLines) {
  const auto path = write("pairs.jsonl",
                          R"({"id":"p1","query":"a  b","document":"doc\ttext","category":"title-body"})"
                          "\n"
                          "not json\n"
                          R"({"id":"p2","query":"q","document":"d","category":"tweet"})"
                          "\n"
                          "\n"
                          R"({"id":"p3","query":"q","category":"title-body"})"
                          "\n"
                          R"({"id":"p4","query":"  ","document":"d","category":"post-comment"})"
                          "\n"
                          R"({"id":"p5","query":"q","document":"d","category":"question-answer"})"
                          "\n");
  const auto r = load_weak_pairs(path);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0].query, "a b");
  EXPECT_EQ(r.items[0].document, "doc text");
  EXPECT_EQ(r.items[1].category, PairCategory::QuestionAnswer);
  ASSERT_EQ(r.rejected.size(), 4u);
  EXPECT_EQ(r.rejected[0].line, 2u);
  EXPECT_EQ(r.rejected[1].code, ErrorCode::UnknownCategory);
  EXPECT_EQ(r.rejected[2].line, 5u);
  EXPECT_EQ(r.rejected[3].line, 6u);
}

TEST_F(DataFiles, MissingFileIsIoError) {
  try {
    load_corpus(dir / "absent.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST_F(DataFiles, CorpusDuplicateIdsFail) {
  const auto path = write("c.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
  EXPECT_THROW(load_corpus(path), Error);
}

TEST_F(DataFiles, RoundTrips) {
  const std::vector<WeakPair> pairs = {{"w1", "q one", "doc one", PairCategory::TitleAbstract},
                                       {"w2", "q \"two\"", "doc two", PairCategory::EntityDescription}};
  write_weak_pairs(dir / "w.jsonl", pairs);
  const auto wp = load_weak_pairs(dir / "w.jsonl");
  ASSERT_EQ(wp.items.size(), 2u);
  EXPECT_EQ(wp.items[1].query, "q \"two\"");
  EXPECT_EQ(wp.items[1].category, PairCategory::EntityDescription);

  const std::vector<Query> queries = {{"q1", "hello"}, {"q2", "world"}};
  write_queries(dir / "q.jsonl", queries);
  EXPECT_EQ(load_queries(dir / "q.jsonl").items[1].text, "world");

  Qrels qrels;
  qrels.add("q1", "d1", 2);
  qrels.add("q1", "d2", 0);
  qrels.add("q2", "d3", 1);
  write_qrels(dir / "qrels.tsv", qrels);
  const Qrels back = load_qrels(dir / "qrels.tsv");
  EXPECT_EQ(back.size(), 3u);
  EXPECT_EQ(back.grade("q1", "d1"), 2);
  EXPECT_EQ(back.grade("q1", "d9"), 0);
  EXPECT_EQ(back.relevant("q1"), std::vector<std::string>{"d1"});
  EXPECT_EQ(back.judged("q1").size(), 2u);
  EXPECT_TRUE(back.judged("q9").empty());

  RankExample ex{"q1", "hello", "d1", {"d2", "d3"}, 10, 7};
  write_rank_examples(dir / "r.jsonl", std::vector<RankExample>{ex});
  const auto re = load_rank_examples(dir / "r.jsonl");
  ASSERT_EQ(re.items.size(), 1u);
  EXPECT_EQ(re.items[0].negative_ids, ex.negative_ids);
  EXPECT_EQ(re.items[0].miner_top_k, 10u);
  EXPECT_EQ(re.items[0].seed, 7u);
}

TEST_F(DataFiles, QrelsErrors) {
  Qrels q;
  q.add("q", "d", 1);
  EXPECT_THROW(q.add("q", "d", 2), Error);
  EXPECT_THROW(q.add("q", "e", -1), Error);
  EXPECT_THROW(load_qrels(write("bad1.tsv", "q1\td1\n")), Error);
  EXPECT_THROW(load_qrels(write("bad2.tsv", "q1\td1\tx\n")), Error);
  try {
    load_qrels(write("bad3.tsv", "q1\td1\t1\nq1\td1\t1\n"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Data, RankExampleValidation) {
  RankExample ex{"q", "t", "p", {"a", "b"}, 0, 0};
  EXPECT_NO_THROW(ex.validate(2));
  EXPECT_THROW(ex.validate(3), Error);
  ex.negative_ids = {"a", "p"};
  EXPECT_THROW(ex.validate(2), Error);
  ex.negative_ids = {"a", "a"};
  EXPECT_THROW(ex.validate(2), Error);
}

SynthParams small_params() {
  SynthParams p;
  p.weak_pairs = 300;
  p.corpus_size = 200;
  p.train_queries = 30;
  p.eval_queries = 20;
  return p;
}

TEST(Synth, CountsAndDeterminism) {
  const SynthParams p = small_params();
  const SynthData a = synth_corpus(p, 5), b = synth_corpus(p, 5), c = synth_corpus(p, 6);
  EXPECT_EQ(a.weak_pairs.size(), 300u);
  EXPECT_EQ(a.corpus.size(), 200u);
  EXPECT_EQ(a.train_queries.size(), 30u);
  EXPECT_EQ(a.eval_queries.size(), 20u);
  EXPECT_EQ(a.qrels.size(), 50u);
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_NE(fingerprint(a), fingerprint(c));
}

TEST(Synth, StructureOfTheWorld) {
  const SynthParams p = small_params();
  const SynthData d = synth_corpus(p, 9);
  std::set<std::string> ids;
  for (const auto& doc : d.corpus) ids.insert(doc.id);
  EXPECT_EQ(ids.size(), d.corpus.size());
  std::set<std::string> positives;
  auto check = [&](const std::vector<Query>& qs) {
    for (const auto& q : qs) {
      const auto rel = d.qrels.relevant(q.id);
      ASSERT_EQ(rel.size(), 1u);
      EXPECT_TRUE(ids.count(rel[0]));
      EXPECT_TRUE(positives.insert(rel[0]).second) << "positive shared between queries";
      const auto doc = std::find_if(d.corpus.begin(), d.corpus.end(), [&](const CorpusDoc& c) { return c.id == rel[0]; });
      EXPECT_EQ(doc->text.rfind(q.text, 0), 0u) << "leading-mode query is the document prefix";
    }
  };
  check(d.train_queries);
  check(d.eval_queries);
  const double overlap = mean_query_overlap(d.weak_pairs);
  EXPECT_GT(overlap, 0.8);
  EXPECT_LT(overlap, 1.0);
}

TEST(Synth, ParameterValidation) {
  SynthParams p = small_params();
  p.corpus_size = 10;
  EXPECT_THROW(synth_corpus(p, 1), Error);
  p = small_params();
  p.query_length = p.doc_length;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(query_mode_from("random"), Error);
}

}  // namespace
}  // namespace tsarank
