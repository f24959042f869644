/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sdse/report.hpp"

using namespace sdse;
using sdse::test::Doc;

namespace {

DeviceSpec huge_device() {
  DeviceSpec d;
  d.name = "huge";
  d.dsp = 1'000'000;
  d.lut = 100'000'000;
  d.ff = 200'000'000;
  d.bram18k = 100'000;
  d.uram = 10'000;
  d.bandwidth_gbps = 1000;
  d.reconfig_time_s = 0.1;
  return d;
}

ModelGraph conv_relu_conv() {
  return Doc("crc", {4, 8, 8}).conv("Conv_0", 3, 4).relu("Relu_1", "Conv_0").conv("Conv_2", 3, 4, "Relu_1").graph();
}

std::vector<VertexId> all_vertices(const ModelGraph &g) { return schedule_order(g); }

} // namespace

TEST(Dse, ScheduleOrderKeepsSplitsAfterProducer) {
  auto g = sdse::test::model("unet");
  auto order = schedule_order(g);
  ASSERT_EQ(order.size(), g.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    if (g.vertex(order[i]).kind == OpKind::Split) {
      ASSERT_GT(i, 0u);
      EXPECT_EQ(g.edge(g.in_edges(order[i]).front()).src, order[i - 1]);
    }
}

TEST(Dse, InitializeMaximalSplit) {
  auto g = conv_relu_conv();
  auto plan = initialize_min(g, huge_device());
  EXPECT_EQ(plan.subgraphs.size(), 3u);
  for (const auto &d : plan.design) {
    EXPECT_EQ(d.p, 1);
    EXPECT_EQ(d.m_frag, 0.0);
  }
  EXPECT_TRUE(std::none_of(plan.evicted.begin(), plan.evicted.end(), [](char c) { return c != 0; }));
}

TEST(Dse, InitializeBoundaryKinds) {
  auto g = conv_relu_conv();
  DseConfig cfg;
  cfg.boundary_kinds = std::set<OpKind>{OpKind::Conv};
  auto plan = initialize_min(g, huge_device(), cfg);
  ASSERT_EQ(plan.subgraphs.size(), 2u);
  EXPECT_EQ(g.vertex(plan.subgraphs[1].members.front()).name, "Conv_2");
  EXPECT_EQ(plan.subgraphs[0].members.size(), 2u);
}

TEST(Dse, InitializeUnetZcu102) {
  auto g = sdse::test::model("unet");
  auto d = sdse::test::device("zcu102");
  auto plan = initialize_min(g, d);
  EXPECT_GE(plan.subgraphs.size(), 6u);
  // Minimal subgraphs may need off-chip weights to fit; the returned plan keeps none.
  for (const auto &s : plan.subgraphs) {
    auto design = plan.design;
    auto evicted = plan.evicted;
    EXPECT_TRUE(alloc_off_chip(g, d, s.members, design, evicted, {})) << g.vertex(s.members.front()).name;
    EXPECT_TRUE(evaluate_subgraph(g, d, s.members, design, evicted).feasible);
  }
}

TEST(Dse, InitializeInfeasibleNamesBinding) {
  auto g = sdse::test::model("x3dm");
  auto d = sdse::test::device("tiny");
  try {
    initialize_min(g, d);
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError &e) {
    EXPECT_FALSE(e.binding.empty());
  }
}

TEST(Dse, ParallelismSaturatesSingleVertex) {
  auto g = Doc("one", {4, 8, 8}).conv("c", 3, 4).graph();
  std::vector<DesignVector> design(g.size());
  std::vector<char> evicted(g.edges().size(), 0);
  alloc_parallelism(g, huge_device(), all_vertices(g), design, evicted, {});
  auto opts = parallelism_options(g.vertex(0));
  EXPECT_EQ(design[0].p, opts.back());
}

TEST(Dse, ParallelismGoesToSlowestFirst) {
  auto g = Doc("two", {16, 8, 8}).conv("big", 3, 16).relu("r", "big").graph();
  std::vector<DesignVector> design(g.size());
  std::vector<char> evicted(g.edges().size(), 0);
  std::vector<AuditRecord> trail;
  alloc_parallelism(g, huge_device(), all_vertices(g), design, evicted, {}, &trail);
  ASSERT_FALSE(trail.empty());
  EXPECT_EQ(trail.front().target, "big");
  EXPECT_EQ(trail.front().pass, "parallelism");
}

TEST(Dse, ParallelismLowersUnetII) {
  auto g = sdse::test::model("unet_small");
  auto d = sdse::test::device("u200");
  auto init = initialize_min(g, d);
  const auto &members = init.subgraphs[0].members;
  std::vector<DesignVector> design = init.design;
  std::vector<char> evicted = init.evicted;
  const double before = init.subgraphs[0].ii;
  alloc_parallelism(g, d, members, design, evicted, {});
  auto after = evaluate_subgraph(g, d, members, design, evicted);
  EXPECT_LE(after.ii, before);
  EXPECT_TRUE(after.feasible);
}

TEST(Dse, OffChipNothingWhenFitting) {
  auto g = conv_relu_conv();
  std::vector<DesignVector> design(g.size());
  std::vector<char> evicted(g.edges().size(), 0);
  std::vector<AuditRecord> trail;
  EXPECT_TRUE(alloc_off_chip(g, huge_device(), all_vertices(g), design, evicted, {}, &trail));
  EXPECT_TRUE(trail.empty());
}

TEST(Dse, OffChipEvictsUnetLongSkipFirst) {
  auto g = sdse::test::model("unet");
  auto d = sdse::test::device("vcu1525");
  auto plan = run_dse(g, d, 1);
  std::vector<const AuditRecord *> taken;
  for (const auto &a : plan.audit)
    if (a.pass == "off_chip" && a.action == "evict")
      taken.push_back(&a);
  ASSERT_FALSE(taken.empty());
  EXPECT_EQ(taken.front()->target, "Relu_3__split->Concat_47");
}

TEST(Dse, OffChipScoresNonIncreasing) {
  for (const char *dev : {"vcu1525", "zcu102"}) {
    auto g = sdse::test::model("unet");
    auto plan = run_dse(g, sdse::test::device(dev), 1);
    std::map<int, double> last;
    for (const auto &a : plan.audit) {
      if (a.pass != "off_chip")
        continue;
      if (last.count(a.subgraph))
        EXPECT_LE(a.score, last[a.subgraph]) << a.target;
      last[a.subgraph] = a.score;
    }
  }
}

TEST(Dse, TinyGraphOnHugeDeviceIsOneSubgraph) {
  auto g = conv_relu_conv();
  auto plan = run_dse(g, huge_device(), 1);
  EXPECT_EQ(plan.subgraphs.size(), 1u);
  for (VertexId v = 0; v < g.size(); ++v)
    EXPECT_EQ(plan.design[v].p, parallelism_options(g.vertex(v)).back());
}

TEST(Dse, MergeImprovesMonotonically) {
  auto g = sdse::test::model("unet3d");
  auto d = sdse::test::device("u200");
  auto plan = run_dse(g, d, 1);
  double prev = 1e300;
  for (const auto &a : plan.audit) {
    if (a.pass != "merge")
      continue;
    EXPECT_GT(a.score, 0.0);
    for (const auto &[k, v] : a.ledger_after)
      if (k == "t") {
        EXPECT_LT(v, prev);
        prev = v;
      }
  }
}

TEST(Dse, MergeInfeasiblePairUnchanged) {
  auto g = sdse::test::model("unet");
  auto d = sdse::test::device("zcu102");
  auto init = initialize_min(g, d);
  DseConfig cfg;
  cfg.max_merge_rounds = 0;
  auto same = merge_subgraphs(g, d, init, 1, cfg);
  EXPECT_EQ(same.subgraphs.size(), init.subgraphs.size());
}

TEST(Dse, LargerBatchKeepsMoreSubgraphs) {
  auto g = sdse::test::model("unet3d");
  auto d = sdse::test::device("u200");
  auto one = run_dse(g, d, 1);
  auto many = run_dse(g, d, 64);
  EXPECT_GE(many.subgraphs.size(), one.subgraphs.size());
}

TEST(Dse, PlansPassConstraintCheck) {
  for (const char *m : {"linear", "diamond", "long_skip", "unet_small", "yolov8n"})
    for (const char *dev : {"zcu102", "u200"}) {
      auto g = sdse::test::model(m);
      auto d = sdse::test::device(dev);
      auto plan = run_dse(g, d, 4);
      EXPECT_TRUE(check_constraints(g, d, plan).empty()) << m << " on " << dev;
      for (EdgeId e = 0; e < g.edges().size(); ++e)
        if (plan.evicted[e])
          EXPECT_TRUE(is_branch_edge(g, e));
    }
}

TEST(Dse, Deterministic) {
  auto g = sdse::test::model("unet");
  auto d = sdse::test::device("zcu102");
  auto a = run_dse(g, d, 4);
  auto b = run_dse(g, d, 4);
  EXPECT_EQ(plan_to_json(g, a).dump(), plan_to_json(g, b).dump());
  EXPECT_EQ(audit_jsonl(a.audit), audit_jsonl(b.audit));
}

TEST(Dse, ConstraintsEmptyPlan) {
  auto g = sdse::test::model("linear");
  DesignPlan empty;
  auto v = check_constraints(g, huge_device(), empty);
  for (const auto &x : v)
    EXPECT_NE(x.resource, "dependency");
}

TEST(Dse, ConstraintsDependencyViolation) {
  auto g = conv_relu_conv();
  auto d = huge_device();
  std::vector<DesignVector> design(g.size());
  std::vector<char> evicted(g.edges().size(), 0);
  // Producer Conv_0 runs after its consumer.
  auto plan = evaluate_plan(g, d, {{g.at("Relu_1")}, {g.at("Conv_0")}, {g.at("Conv_2")}}, design, evicted, 1);
  auto v = check_constraints(g, d, plan);
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const Violation &x) { return x.resource == "dependency"; }));
}

TEST(Dse, ConstraintsBandwidthExcess) {
  auto g = conv_relu_conv();
  auto d = huge_device();
  auto plan = initialize_min(g, d);
  double worst = 0;
  for (const auto &s : plan.subgraphs)
    worst = std::max(worst, s.bandwidth_gbps);
  ASSERT_GT(worst, 1.0);
  int at_worst = 0;
  for (const auto &s : plan.subgraphs)
    at_worst += s.bandwidth_gbps == worst;
  d.bandwidth_gbps = worst - 1.0;
  auto v = check_constraints(g, d, plan);
  int bw = 0;
  for (const auto &x : v)
    if (x.resource == "bandwidth") {
      ++bw;
      if (&x == &v.front() || x.amount >= 1.0 - 1e-9)
        EXPECT_LE(x.amount, 1.0 + 1e-9);
    }
  EXPECT_GE(bw, at_worst);
  EXPECT_TRUE(std::any_of(v.begin(), v.end(),
                          [](const Violation &x) { return x.resource == "bandwidth" && std::abs(x.amount - 1.0) < 1e-9; }));
}

TEST(Dse, SubgraphSimConfigMatchesPlan) {
  auto g = sdse::test::model("unet");
  auto d = sdse::test::device("u200");
  auto plan = run_dse(g, d, 1);
  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i) {
    auto sc = subgraph_sim_config(g, d, plan, i);
    EXPECT_EQ(sc.members, plan.subgraphs[i].members);
    EXPECT_EQ(sc.evicted.size(), plan.subgraphs[i].evicted.size());
  }
}
