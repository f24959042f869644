/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace sdse;
using sdse::test::Doc;

namespace {

// Independent recursive enumeration used as the path oracle.
void dfs_paths(const ModelGraph &g, VertexId at, VertexId trg, Path &cur, std::vector<Path> &out) {
  cur.push_back(at);
  if (at == trg) {
    out.push_back(cur);
  } else {
    for (const auto &e : g.edges())
      if (e.src == at && std::find(cur.begin(), cur.end(), e.dst) == cur.end())
        dfs_paths(g, e.dst, trg, cur, out);
  }
  cur.pop_back();
}

std::vector<Path> brute_paths(const ModelGraph &g, VertexId s, VertexId t) {
  std::vector<Path> out;
  Path cur;
  dfs_paths(g, s, t, cur, out);
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

TEST(Graph, ConvShapeRule) {
  auto g = Doc("one", {3, 8, 8}).conv("c", 3, 4).graph();
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.vertex(0).output_shape.dims, (std::vector<int64_t>{4, 8, 8}));
}

TEST(Graph, CycleRejected) {
  Doc d("cyc", {4, 4, 4});
  d.relu("a").relu("b", "a").edge("b", "a", 1);
  EXPECT_THROW(d.graph(), Error);
  Doc d2("cyc2", {4, 4, 4});
  d2.relu("a").relu("b", "a").relu("c", "b").vertex("j", "Add").edge("c", "j").edge("a", "j", 1).edge("j", "b", 1);
  EXPECT_THROW(d2.graph(), Error);
}

TEST(Graph, SchemaErrors) {
  EXPECT_THROW(parse_model("{"), ParseError);
  EXPECT_THROW(Doc("x", {3, 8, 8}).vertex("a", "Mystery").graph(), ParseError);
  EXPECT_THROW(Doc("x", {3, 8, 8}).vertex("a", "Conv", {{"kernel", 3}}).graph(), ParseError);
  Doc d("x", {3, 8, 8});
  d.relu("a").edge("a", "ghost");
  EXPECT_THROW(d.graph(), ParseError);
}

TEST(Graph, ShapeMismatchNamesVertex) {
  Doc d("x", {4, 8, 8});
  d.relu("a").conv("b", 3, 8, "a").vertex("add", "Add").edge("a", "add").edge("b", "add", 1);
  try {
    d.graph();
    FAIL() << "expected a shape error";
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
}

TEST(Graph, UnetLayerCounts) {
  auto g = sdse::test::model("unet");
  EXPECT_EQ(g.layer_count(), 53u);
  EXPECT_EQ(g.count_kind(OpKind::Conv), 23u);
}

TEST(Graph, BenchmarkLayerCounts) {
  struct Row {
    const char *name;
    std::size_t layers, convs;
  };
  for (const Row &r : {Row{"unet3d", 52, 19}, Row{"yolov8n", 115, 63}, Row{"x3dm", 396, 115}}) {
    auto g = sdse::test::model(r.name);
    EXPECT_EQ(g.layer_count(), r.layers) << r.name;
    EXPECT_EQ(g.count_kind(OpKind::Conv), r.convs) << r.name;
  }
}

TEST(Graph, SplitInsertedForFanOut) {
  auto g = sdse::test::model("diamond");
  auto split = g.find("Relu_1__split");
  ASSERT_TRUE(split.has_value());
  EXPECT_TRUE(g.vertex(*split).synthetic);
  EXPECT_EQ(g.vertex(*split).kind, OpKind::Split);
  EXPECT_EQ(g.out_edges(*split).size(), 2u);
  for (VertexId v = 0; v < g.size(); ++v)
    if (g.vertex(v).kind != OpKind::Split)
      EXPECT_LE(g.out_edges(v).size(), 1u) << g.vertex(v).name;
  EXPECT_EQ(g.layer_count(), 8u);
}

TEST(Graph, Ancestors) {
  auto g = sdse::test::model("diamond");
  EXPECT_TRUE(ancestors(g, g.input()).empty());
  const VertexId add = g.at("Add_6");
  EXPECT_EQ(ancestors(g, add), (std::set<VertexId>{g.at("Identity_2"), g.at("Conv_5")}));
  EXPECT_EQ(ancestors(g, g.at("Conv_5")), (std::set<VertexId>{g.at("Relu_4")}));
}

TEST(Graph, AncestorsInverseAdjacency) {
  for (const char *name : {"diamond", "long_skip", "unet"}) {
    auto g = sdse::test::model(name);
    for (VertexId v = 0; v < g.size(); ++v)
      for (VertexId u = 0; u < g.size(); ++u) {
        bool edge = false;
        for (const auto &e : g.edges())
          edge = edge || (e.src == u && e.dst == v);
        EXPECT_EQ(ancestors(g, v).count(u) == 1, edge);
      }
  }
}

TEST(Graph, PathsTrivialAndDiamond) {
  auto g = sdse::test::model("diamond");
  EXPECT_EQ(paths(g, g.input(), g.input()), (std::vector<Path>{{g.input()}}));
  auto ps = paths(g, g.at("Relu_1__split"), g.at("Add_6"));
  EXPECT_EQ(ps.size(), 2u);
  EXPECT_TRUE(paths(g, g.at("Add_6"), g.input()).empty());
}

TEST(Graph, PathsMatchBruteForce) {
  for (const char *name : {"linear", "diamond", "long_skip"}) {
    auto g = sdse::test::model(name);
    ASSERT_LE(g.size(), 20u);
    for (VertexId s = 0; s < g.size(); ++s)
      for (VertexId t = 0; t < g.size(); ++t) {
        auto got = paths(g, s, t);
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, brute_paths(g, s, t));
        for (const auto &p : got) {
          auto sorted = p;
          std::sort(sorted.begin(), sorted.end());
          EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
        }
      }
  }
}

TEST(Graph, UnetPathCountToDeepestConv) {
  auto g = sdse::test::model("unet");
  const VertexId deepest = g.at("Conv_22");
  EXPECT_EQ(paths(g, g.input(), deepest).size(), brute_paths(g, g.input(), deepest).size());
}

TEST(Graph, TopologicalOrder) {
  auto lin = Doc("lin", {2, 4, 4}).relu("a").relu("b", "a").relu("c", "b").graph();
  EXPECT_EQ(topological_order(lin), (std::vector<VertexId>{lin.at("a"), lin.at("b"), lin.at("c")}));
  for (const char *name : {"diamond", "unet", "yolov8n", "x3dm"}) {
    auto g = sdse::test::model(name);
    auto order = topological_order(g);
    ASSERT_EQ(order.size(), g.size());
    std::vector<std::size_t> pos(g.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      pos[order[i]] = i;
    for (const auto &e : g.edges())
      EXPECT_LT(pos[e.src], pos[e.dst]);
  }
  auto d = sdse::test::model("diamond");
  auto order = topological_order(d);
  auto at = [&](const char *n) { return std::find(order.begin(), order.end(), d.at(n)) - order.begin(); };
  // Independent branches keep vertex id order.
  ASSERT_LT(d.at("Conv_3"), d.at("Identity_2"));
  EXPECT_LT(at("Conv_3"), at("Identity_2"));
}

TEST(Graph, ShuffledDocumentGivesSameGraph) {
  std::ifstream in(sdse::test::fixture("models/unet.json"));
  auto doc = nlohmann::json::parse(in);
  const auto ref = parse_model(doc.dump());
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(doc["vertices"].begin(), doc["vertices"].end(), rng);
    std::shuffle(doc["edges"].begin(), doc["edges"].end(), rng);
    const auto g = parse_model(doc.dump());
    ASSERT_EQ(g.size(), ref.size());
    auto a = topological_order(g), b = topological_order(ref);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_EQ(g.vertex(a[i]).name, ref.vertex(b[i]).name);
  }
}

TEST(Graph, NaturalOrder) {
  EXPECT_TRUE(natural_less("Conv_2", "Conv_10"));
  EXPECT_FALSE(natural_less("Conv_10", "Conv_2"));
  EXPECT_TRUE(natural_less("Add_9", "Conv_0"));
}

TEST(Graph, EdgeWordsAndWordLength) {
  auto g = sdse::test::model("unet");
  EXPECT_EQ(g.word_length(), 8);
  for (const auto &e : g.edges()) {
    EXPECT_GT(e.words, 0);
    EXPECT_EQ(e.words, g.vertex(e.src).output_words());
  }
}
