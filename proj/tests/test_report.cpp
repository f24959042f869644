/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sdse/report.hpp"

using namespace sdse;

TEST(Report, PlanRoundTrip) {
  for (const char *m : {"unet", "unet_small"}) {
    auto g = sdse::test::model(m);
    auto d = sdse::test::device("u200");
    auto plan = run_dse(g, d, 4);
    auto back = plan_from_json(g, d, plan_to_json(g, plan));
    EXPECT_EQ(back.performance, plan.performance) << m;
    EXPECT_EQ(back.design, plan.design) << m;
    EXPECT_EQ(back.evicted, plan.evicted) << m;
    EXPECT_EQ(plan_to_json(g, back).dump(), plan_to_json(g, plan).dump());
  }
}

TEST(Report, PlanErrors) {
  auto g = sdse::test::model("linear");
  auto d = sdse::test::device("u200");
  auto doc = plan_to_json(g, run_dse(g, d, 1));
  auto bad = doc;
  bad["subgraphs"][0][0] = "Ghost_99";
  EXPECT_THROW(plan_from_json(g, d, bad), ParseError);
  bad = doc;
  bad.erase("batch");
  EXPECT_THROW(plan_from_json(g, d, bad), ParseError);
  EXPECT_THROW(load_plan(g, d, "/nonexistent/plan.json"), ParseError);
}

TEST(Report, AuditRoundTrip) {
  std::vector<AuditRecord> audit{{"init", -1, "a..b", "create", 0.0, {{"subgraphs", 3}}},
                                 {"off_chip", 0, "x->y", "evict", 3488.0, {{"bram18k", 12}, {"bw", 1.5}}},
                                 {"off_chip", 1, "Conv_2", "fragment m=0.25",
                                  std::numeric_limits<double>::infinity(), {}}};
  auto text = audit_jsonl(audit);
  auto back = parse_audit_jsonl(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].pass, audit[i].pass);
    EXPECT_EQ(back[i].target, audit[i].target);
    EXPECT_EQ(back[i].action, audit[i].action);
    EXPECT_EQ(back[i].score, audit[i].score);
    EXPECT_EQ(back[i].ledger_after, audit[i].ledger_after);
  }
  EXPECT_EQ(audit_jsonl(back), text);
  EXPECT_THROW(parse_audit_jsonl("{\"pass\": 1}\n"), ParseError);
}

TEST(Report, ReportJsonTotals) {
  auto g = sdse::test::model("unet_small");
  auto d = sdse::test::device("zcu102");
  auto plan = run_dse(g, d, 1);
  auto doc = report_to_json(g, d, plan);
  ASSERT_EQ(doc["subgraph_reports"].size(), plan.subgraphs.size());
  for (const auto &s : doc["subgraph_reports"]) {
    EXPECT_LE(s["utilization_pct"]["dsp"].get<double>(), 100.0 + 1e-9);
    EXPECT_LE(s["bandwidth_pct"].get<double>(), 100.0 + 1e-9);
  }
  EXPECT_DOUBLE_EQ(doc["performance"]["theta_fps"].get<double>(), plan.performance.theta);
  auto text = format_report(g, d, plan);
  EXPECT_NE(text.find("subgraph 0"), std::string::npos);
}

TEST(Report, SweepCsv) {
  std::vector<BatchPoint> pts{{1, {}}, {4, {}}};
  pts[0].performance.theta = 10;
  auto csv = batch_sweep_csv(pts);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "batch,theta_fps,t_s,reconfig_share,subgraphs");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  auto r = ratio_sweep_csv({{1.0, 5.0, 100.0}});
  EXPECT_EQ(r, "multiplier,macs_per_second,ii_cycles\n1,5,100\n");
}
