#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"

#include "meshsuggest/bm25.hpp"
#include "meshsuggest/corpus_store.hpp"

namespace ms = meshsuggest;
using testsupport::fixture;

namespace {

std::string temp_file(const std::string& name, const std::string& content) {
  const auto path = (std::filesystem::temp_directory_path() / ("meshsuggest_" + name)).string();
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

std::set<std::string> names(const std::set<ms::MeshTerm>& s) {
  std::set<std::string> out;
  for (const auto& m : s) out.insert(m.key());
  return out;
}

}  // namespace

TEST(Documents, FixtureLoads) {
  const auto idx = ms::ingest_documents(fixture("documents.jsonl"));
  EXPECT_EQ(idx.size(), 50u);
  ASSERT_TRUE(idx.find("d07"));
  EXPECT_EQ(idx.document(*idx.find("d07")).pub_date.iso(), "2008-02-11");
}

TEST(Documents, DuplicateIdIsAnError) {
  const auto line = R"({"doc_id":"x","title":"a","abstract":"b","mesh_headings":[],"pub_date":"2001-01-01"})";
  const auto path = temp_file("dup.jsonl", std::string(line) + "\n" + line + "\n");
  EXPECT_THROW(ms::ingest_documents(path), ms::DataError);
}

TEST(Documents, MalformedRecordIsAnError) {
  const auto path = temp_file("bad.jsonl", R"({"doc_id":"x","title":"a"})" "\n");
  EXPECT_THROW(ms::ingest_documents(path), ms::DataError);
  const auto date = temp_file("baddate.jsonl",
                              R"({"doc_id":"x","title":"a","abstract":"b","mesh_headings":[],"pub_date":"2001-13-01"})" "\n");
  EXPECT_THROW(ms::ingest_documents(date), ms::DataError);
}

TEST(Documents, TokenizerLowercasesAndDropsPunctuation) {
  EXPECT_EQ(ms::tokenize("Fibrosis,"), std::vector<std::string>{"fibrosis"});
  EXPECT_EQ(ms::tokenize("Non-A, non-B"), (std::vector<std::string>{"non", "a", "non", "b"}));
}

TEST(MeshTree, AnatomyChain) {
  const auto tree = ms::ingest_mesh_tree(fixture("mesh_tree.tsv"));
  const std::vector<std::string> chain = {"Anatomy", "Body Regions", "Head", "Eye"};
  std::string prev;
  for (const auto& h : chain) {
    const auto t = tree.find(h);
    ASSERT_TRUE(t) << h;
    ASSERT_EQ(t->tree_numbers.size(), 1u);
    if (!prev.empty()) EXPECT_EQ(ms::MeshTree::parent_number(t->tree_numbers[0]), prev);
    prev = t->tree_numbers[0];
  }
  EXPECT_NO_THROW(tree.validate());
}

TEST(MeshTree, EmptyFileIsEmptyTree) {
  EXPECT_TRUE(ms::ingest_mesh_tree(temp_file("empty.tsv", "")).empty());
}

TEST(MeshTree, CycleIsRejected) {
  ms::MeshTree t;
  t.add("X", "A01");
  t.add("Y", "A01.1");
  t.add("X", "A01.1.2");
  EXPECT_THROW(t.validate(), ms::DataError);
  ms::MeshTree orphan;
  orphan.add("Z", "B01.5");
  EXPECT_THROW(orphan.validate(), ms::DataError);
}

TEST(MeshTree, TreeNumberOwnedByOneHeading) {
  ms::MeshTree t;
  t.add("X", "A01");
  EXPECT_THROW(t.add("Y", "A01"), ms::DataError);
}

TEST(Explode, Examples) {
  const auto tree = ms::ingest_mesh_tree(fixture("mesh_tree.tsv"));
  EXPECT_EQ(names(ms::explode({"Head", {}}, tree)), (std::set<std::string>{"head", "eye"}));
  EXPECT_EQ(names(ms::explode({"Eye", {}}, tree)), std::set<std::string>{"eye"});
  std::vector<std::string> warnings;
  EXPECT_EQ(names(ms::explode({"Nowhere", {}}, tree, &warnings)), std::set<std::string>{"nowhere"});
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Explode, MatchesBruteForceScanForEveryHeading) {
  const auto tree = ms::ingest_mesh_tree(fixture("mesh_tree.tsv"));
  const auto& naive = testsupport::naive_engine();
  for (const auto& h : naive.headings()) EXPECT_EQ(names(ms::explode({h, {}}, tree)), naive.closure(h)) << h;
  // multi-location headings: union of both subtrees
  EXPECT_EQ(names(ms::explode({"Fibrosis", {}}, tree)), (std::set<std::string>{"fibrosis", "liver cirrhosis"}));
  EXPECT_EQ(names(ms::explode({"Diabetes Mellitus", {}}, tree)),
            (std::set<std::string>{"diabetes mellitus", "diabetes complications", "diabetic retinopathy"}));
}

TEST(Umls, FixtureHasOneHundredRecords) {
  const auto p = testsupport::fixture_paths();
  const auto idx = ms::ingest_umls_tables(p.conso, p.def, p.sty, p.rel);
  EXPECT_EQ(idx.size(), 100u);
  const auto msh = idx.synonyms("C0000001", "MSH");
  ASSERT_EQ(msh.size(), 1u);
  EXPECT_EQ(idx.record(msh[0]).synonym, "Liver");
  EXPECT_EQ(idx.record(msh[0]).definition.value_or(""), "Large gland of the abdomen.");
  EXPECT_EQ(idx.record(msh[0]).semantic_type.value_or(""), "Body Part, Organ, or Organ Component");
  EXPECT_TRUE(idx.synonyms("C0000025", "MSH").empty());
  EXPECT_FALSE(idx.relations().empty());
}

TEST(Umls, MalformedRowReportsItsLine) {
  const auto path = temp_file("conso.rrf", "C1|MSH|Liver|\nC2|MSH\n");
  try {
    ms::ingest_umls_tables(path, "", "", "");
    FAIL();
  } catch (const ms::DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Topics, FixtureHasThreeTopics) {
  const auto t = ms::ingest_topics(fixture("topics.jsonl"));
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].topic_id, "T1");
}

TEST(Qrels, Parsing) {
  const auto q = ms::ingest_qrels(temp_file("q.txt", "T1 0 d7 1\nT1 0 d8 0\n"));
  EXPECT_EQ(q.at("T1").at("d7"), 1);
  EXPECT_EQ(q.at("T1").at("d8"), 0);
  const auto graded = temp_file("g.txt", "T1 0 d7 2\n");
  EXPECT_THROW(ms::ingest_qrels(graded), ms::DataError);
  EXPECT_EQ(ms::ingest_qrels(graded, ms::QrelsMode::kBinarize).at("T1").at("d7"), 1);
  EXPECT_THROW(ms::ingest_qrels(temp_file("b.txt", "T1 0 d7\n")), ms::DataError);
  EXPECT_THROW(ms::ingest_qrels(temp_file("c.txt", "T1 0 d7 x\n")), ms::DataError);
}

TEST(ExecuteBoolean, OrIsUnionOfPostings) {
  const auto& r = testsupport::fixture_resources();
  const auto a = ms::execute_boolean(ms::parse_query("fibroscan"), r.documents, r.tree);
  const auto b = ms::execute_boolean(ms::parse_query("sonographic"), r.documents, r.tree);
  auto u = a;
  u.insert(b.begin(), b.end());
  EXPECT_EQ(ms::execute_boolean(ms::parse_query("fibroscan OR sonographic"), r.documents, r.tree), u);
  EXPECT_FALSE(a.empty());
  EXPECT_FALSE(b.empty());
}

TEST(ExecuteBoolean, TruncationMatchesInflections) {
  const auto& r = testsupport::fixture_resources();
  const auto hits = ms::execute_boolean(ms::parse_query("\"liver biops*\"[tiab]"), r.documents, r.tree);
  EXPECT_TRUE(hits.count("d01"));  // "liver biopsy"
  EXPECT_TRUE(hits.count("d03"));  // "liver biopsies"
  EXPECT_FALSE(ms::execute_boolean(ms::parse_query("\"liver biops\"[tiab]"), r.documents, r.tree).count("d01"));
}

TEST(ExecuteBoolean, MeshExplosionAndNoExp) {
  const auto& r = testsupport::fixture_resources();
  const auto exploded = ms::execute_boolean(ms::parse_query("Ultrasonography[Mesh]"), r.documents, r.tree);
  const auto plain = ms::execute_boolean(ms::parse_query("Ultrasonography[Mesh:NoExp]"), r.documents, r.tree);
  EXPECT_TRUE(exploded.count("d08"));  // indexed with Ultrasonography, Doppler only
  EXPECT_FALSE(plain.count("d08"));
}

TEST(ExecuteBoolean, DateRestriction) {
  const auto& r = testsupport::fixture_resources();
  const auto all = ms::execute_boolean(ms::parse_query("Hepatitis C[Mesh]"), r.documents, r.tree);
  const auto early = ms::execute_boolean(ms::parse_query("Hepatitis C[Mesh]"), r.documents, r.tree,
                                         ms::Date::parse("2012-03-14"));
  EXPECT_TRUE(early.count("d01"));  // published on the cutoff day
  EXPECT_FALSE(early.count("d06"));
  EXPECT_LT(early.size(), all.size());
  EXPECT_EQ(early, testsupport::naive_engine().run(ms::parse_query("Hepatitis C[Mesh]"), "2012-03-14"));
}

TEST(ExecuteBoolean, RandomTreesMatchNaiveOracle) {
  const auto& r = testsupport::fixture_resources();
  testsupport::RandomQueries gen(3);
  for (int i = 0; i < 10; ++i) {
    const auto t = gen.tree(3);
    EXPECT_EQ(ms::execute_boolean(t, r.documents, r.tree), testsupport::naive_engine().run(t)) << ms::serialize_query(t);
  }
}

TEST(ExecuteBoolean, InvalidTreeIsRejected) {
  const auto& r = testsupport::fixture_resources();
  EXPECT_THROW(ms::execute_boolean(ms::QueryNode::op(ms::NodeKind::kNot, {ms::QueryNode::leaf("a")}), r.documents, r.tree),
               ms::QueryExecutionError);
}

TEST(Bm25, OneDocumentHandValue) {
  ms::Bm25Index idx;
  idx.add({"liver", "liver", "biopsy"});
  const auto hits = idx.search({"liver"});
  ASSERT_EQ(hits.size(), 1u);
  // idf = ln(1 + 0.5 / 1.5); tf part = 2 * 2.2 / (2 + 1.2)
  EXPECT_NEAR(hits[0].second, std::log(4.0 / 3.0) * 1.375, 1e-12);
}
