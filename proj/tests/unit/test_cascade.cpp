#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hiercas/cascade.hpp"
#include "hiercas/errors.hpp"

namespace {

namespace hd = hiercas::data;

const char* kLine = "42\talice\t1000\t3\talice:0 alice/bob:5 alice/bob/carol:9 alice/dave:5";

TEST(ParseLine, ReadsFieldsAndPaths) {
  const hd::CascadeRecord r = hd::parse_line(kLine);
  EXPECT_EQ(r.id, "42");
  EXPECT_EQ(r.root_user, "alice");
  EXPECT_EQ(r.publish_time, 1000);
  ASSERT_EQ(r.events.size(), 3u);
  EXPECT_EQ(r.events[0], (hd::RetweetEvent{"bob", "alice", 5}));
  EXPECT_EQ(r.events[1], (hd::RetweetEvent{"dave", "alice", 5}));
  EXPECT_EQ(r.events[2], (hd::RetweetEvent{"carol", "bob", 9}));
}

TEST(ParseLine, SortsByOffsetBeforeCheckingParents) {
  const auto r = hd::parse_line("x\tr\t0\t2\tr/a/b:7 r/a:3\r\n");
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0].child, "a");
  EXPECT_EQ(r.events[1].child, "b");
}

TEST(ParseLine, EventCountFieldIsNotEnforced) {
  EXPECT_EQ(hd::parse_line("x\tr\t0\t99\tr/a:1").events.size(), 1u);
}

TEST(ParseLine, RejectsMalformedLines) {
  const char* bad[] = {
      "x\tr\t0\t1",                  // missing field
      "\tr\t0\t1\tr/a:1",            // empty id
      "x\tr\tabc\t1\tr/a:1",         // non-numeric publish time
      "x\tr\t0\t-1\tr/a:1",          // negative count
      "x\tr\t0\t1\tr/a",             // no time
      "x\tr\t0\t1\tr/a:-4",          // negative offset
      "x\tr\t0\t1\tr//a:1",          // empty user
      "x\tr\t0\t1\tq:0",             // single user that is not the root
      "x\tr\t0\t1\tr/z/a:1",         // unknown parent
      "x\tr\t0\t2\tr/a:1 r/a:2",     // user joins twice
      "x\tr\t0\t2\tr/a:1 r/a/r:2",   // root retweets itself
  };
  for (const char* line : bad) {
    EXPECT_THROW(hd::parse_line(line, 7), hiercas::ParseError) << line;
  }
  try {
    hd::parse_line("x\tr\t0\t1", 12);
    FAIL();
  } catch (const hiercas::ParseError& e) {
    EXPECT_EQ(e.line(), 12u);
    EXPECT_NE(std::string(e.what()).find("line 12"), std::string::npos);
  }
}

TEST(FormatLine, RoundTripsThroughParse) {
  const hd::CascadeRecord r = hd::parse_line(kLine);
  const std::string line = hd::format_line(r);
  EXPECT_EQ(line, "42\talice\t1000\t3\talice:0 alice/bob:5 alice/dave:5 alice/bob/carol:9");
  EXPECT_EQ(hd::parse_line(line), r);

  hd::CascadeRecord empty{"e", "solo", 5, {}};
  EXPECT_EQ(hd::parse_line(hd::format_line(empty)), empty);
}

TEST(Corpus, LenientModeSkipsAndCountsBadLines) {
  const auto path = std::filesystem::temp_directory_path() / "hiercas_test_corpus.txt";
  {
    std::ofstream out(path);
    out << kLine << "\n\ngarbage\n" << "y\tr\t0\t1\tr/a:1\n";
  }
  const auto lenient = hd::read_corpus(path);
  EXPECT_EQ(lenient.records.size(), 2u);
  EXPECT_EQ(lenient.skipped, 1u);
  EXPECT_NE(lenient.first_error.find("line 3"), std::string::npos);
  EXPECT_THROW(hd::read_corpus(path, true), hiercas::ParseError);

  hd::write_corpus(path, lenient.records);
  EXPECT_EQ(hd::read_corpus(path, true).records, lenient.records);
  std::filesystem::remove(path);
}

hd::CascadeGraph sample_graph() {
  const std::vector<hd::CascadeGraph::Join> joins{
      {"b", 0, 1.0}, {"c", 1, 2.0}, {"d", 0, 2.0}, {"e", 2, 5.0}};
  return hd::CascadeGraph("g", "a", joins, 4.0);
}

TEST(Graph, StructureAndSizes) {
  const auto g = sample_graph();
  EXPECT_EQ(g.num_nodes(), 5u);
  EXPECT_EQ(g.depth(4), 3u);
  EXPECT_EQ(g.parent(3), 0u);
  EXPECT_FALSE(g.parent(0));
  EXPECT_EQ(g.size_at(0.5), 0);
  EXPECT_EQ(g.size_at(2.0), 3);  // ties at t count
  EXPECT_EQ(g.size_at(10.0), 4);
  EXPECT_EQ(hd::size_change(g, 5.0, 1.0), 3);
  EXPECT_THROW(hd::size_change(g, 1.0, 5.0), hiercas::ArgumentError);

  const auto inc = g.incident(0);
  ASSERT_EQ(inc.size(), 2u);
  EXPECT_EQ(inc[0].other, 1u);
  EXPECT_FALSE(inc[0].outgoing);
  EXPECT_TRUE(g.incident(1)[0].outgoing);
}

TEST(Graph, TruncationKeepsThePrefix) {
  const auto g = sample_graph();
  const auto cut = g.truncated(2.0);
  EXPECT_EQ(cut.num_nodes(), 4u);
  EXPECT_EQ(cut.observation_time(), g.observation_time());
  EXPECT_EQ(g.truncated(0.0).num_nodes(), 1u);
}

TEST(Graph, RejectsInvalidJoins) {
  const std::vector<hd::CascadeGraph::Join> unknown{{"b", 3, 1.0}};
  EXPECT_THROW(hd::CascadeGraph("g", "a", unknown, 2.0), hiercas::ArgumentError);
  const std::vector<hd::CascadeGraph::Join> dup{{"a", 0, 1.0}};
  EXPECT_THROW(hd::CascadeGraph("g", "a", dup, 2.0), hiercas::ArgumentError);
  const std::vector<hd::CascadeGraph::Join> order{{"b", 0, 2.0}, {"c", 0, 1.0}};
  EXPECT_THROW(hd::CascadeGraph("g", "a", order, 2.0), hiercas::ArgumentError);
}

hd::CascadeRecord labeled_record() {
  hd::CascadeRecord r{"r", "root", 0, {}};
  for (int k = 0; k < 8; ++k) {
    r.events.push_back({"u" + std::to_string(k), "root", k < 5 ? 100 * k : 1000 + k});
  }
  return r;
}

TEST(Labeling, CountsGrowthOnTheFullRecord) {
  hd::ObservationConfig cfg;
  cfg.t_obs = 400;
  cfg.t_pred = 1005;
  cfg.min_observed = 5;
  cfg.max_observed = 3;
  const auto lc = hd::build_labeled(labeled_record(), cfg);
  ASSERT_TRUE(lc);
  EXPECT_EQ(lc->observed, 5);
  EXPECT_EQ(lc->delta_p, 1);             // only offset 1005 is inside t_pred
  EXPECT_EQ(lc->graph.num_nodes(), 4u);  // capped input, uncapped label
  EXPECT_EQ(lc->graph.observation_time(), 400.0);

  cfg.min_observed = 6;
  EXPECT_FALSE(hd::build_labeled(labeled_record(), cfg));
}

TEST(Labeling, TimeUnitScalesModelTime) {
  hd::ObservationConfig cfg;
  cfg.t_obs = 86400;
  cfg.t_pred = 2 * 86400;
  cfg.min_observed = 1;
  cfg.time_unit = 86400;
  hd::CascadeRecord r{"r", "root", 0, {{"a", "root", 43200}}};
  const auto lc = hd::build_labeled(r, cfg);
  ASSERT_TRUE(lc);
  EXPECT_DOUBLE_EQ(lc->graph.observation_time(), 1.0);
  EXPECT_DOUBLE_EQ(lc->graph.nodes()[1].join_time, 0.5);
}

TEST(ObservationConfig, Validates) {
  hd::ObservationConfig cfg;
  cfg.t_pred = cfg.t_obs;
  EXPECT_THROW(cfg.validate(), hiercas::ConfigError);
  cfg = {};
  cfg.min_observed = cfg.max_observed + 1;
  EXPECT_THROW(cfg.validate(), hiercas::ConfigError);
}

TEST(Splits, PartitionIsCompleteDisjointAndSeeded) {
  const auto a = hd::split_indices(101, {}, 3);
  EXPECT_EQ(a.train.size(), 71u);
  EXPECT_EQ(a.val.size(), 15u);
  EXPECT_EQ(a.test.size(), 15u);
  std::vector<int> seen(101, 0);
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (std::size_t i : *part) ++seen[i];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_EQ(hd::split_indices(101, {}, 3).train, a.train);
  EXPECT_NE(hd::split_indices(101, {}, 4).train, a.train);
  EXPECT_THROW(hd::split_indices(0, {}, 1), hiercas::ConfigError);
  EXPECT_THROW(hd::split_indices(5, {0.5, 0.5, 0.5}, 1), hiercas::ConfigError);
}

TEST(Stats, AveragesOverCascades) {
  hd::ObservationConfig cfg;
  cfg.t_obs = 10;
  cfg.t_pred = 20;
  cfg.min_observed = 1;
  hd::CascadeRecord r{"r", "a", 0, {{"b", "a", 1}, {"c", "b", 2}, {"d", "a", 15}}};
  const auto lc = *hd::build_labeled(r, cfg);
  const hd::LabeledCascade both[] = {lc, lc};
  const auto s = hd::corpus_stats(both);
  EXPECT_EQ(s.cascades, 2u);
  EXPECT_EQ(s.nodes, 6u);
  EXPECT_EQ(s.edges, 4u);
  EXPECT_DOUBLE_EQ(s.average_hops, 1.5);
  EXPECT_DOUBLE_EQ(s.average_growth, 1.0);
}

}  // namespace
