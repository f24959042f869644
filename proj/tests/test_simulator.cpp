/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace sdse;
using sdse::test::Doc;

namespace {

SimConfig base_config(const ModelGraph &g, const std::vector<int64_t> &p, int frames = 2) {
  SimConfig sc;
  sc.graph = &g;
  sc.parallelism = p;
  sc.fifo_depth = buffer_depths(g, perf_map(g, p));
  sc.frames = frames;
  return sc;
}

void attach_dma(SimConfig &sc, const DeviceSpec &d, int word_length) {
  sc.dma.burst_words = d.dma_burst_words;
  sc.dma.latency_cycles = static_cast<double>(d.dma_latency_cycles);
  sc.dma.bandwidth_words = d.bandwidth_words_per_cycle(word_length);
  sc.dma.ports = d.max_dma_ports;
}

EdgeId edge_between(const ModelGraph &g, const std::string &src, const std::string &dst) {
  for (EdgeId e : g.out_edges(g.at(src)))
    if (g.vertex(g.edge(e).dst).name == dst)
      return e;
  return kNoEdge;
}

} // namespace

TEST(Simulator, SingleElementwiseVertex) {
  auto g = Doc("one", {4, 5, 5}).relu("r").graph();
  SimConfig sc;
  sc.graph = &g;
  sc.parallelism = {1};
  auto r = simulate(sc);
  // First word after rho, then a frame period of lambda + rho at the stage rate.
  EXPECT_DOUBLE_EQ(r.fill_time[0], 1.0);
  EXPECT_NEAR(r.total_cycles, 100.0 + 2 * 1.0, 1e-9);
  EXPECT_EQ(r.total_stalls(), 0.0);
  EXPECT_FALSE(r.deadlock);
}

TEST(Simulator, LinearMatchesEstimatorExactly) {
  auto g = sdse::test::model("linear");
  for (int64_t par : {1, 2}) {
    std::vector<int64_t> p;
    for (const auto &v : g.vertices())
      p.push_back(is_valid_parallelism(v, par) ? par : 1);
    auto sc = base_config(g, p, 3);
    auto r = simulate(sc);
    auto perf = perf_map(g, p);
    EXPECT_DOUBLE_EQ(r.measured_ii, initiation_interval(g, perf));
    EXPECT_NEAR(r.measured_depth, graph_pipeline_depth(g, perf), 1e-6 * r.measured_depth);
    EXPECT_FALSE(r.stalled());
  }
}

TEST(Simulator, InputFillIsRho) {
  auto g = sdse::test::model("linear");
  std::vector<int64_t> p(g.size(), 1);
  auto r = simulate(base_config(g, p, 1));
  const VertexId in = g.input();
  auto perf = perf_map(g, p);
  EXPECT_DOUBLE_EQ(measure_pipeline_depth(r, in), perf[in].rho / perf[in].r_in);
}

TEST(Simulator, BranchBufferPreventsStalls) {
  auto g = sdse::test::model("diamond");
  std::vector<int64_t> p(g.size(), 1);
  auto ok = simulate(base_config(g, p));
  EXPECT_FALSE(ok.stalled());
  auto starved = base_config(g, p);
  const EdgeId skip = edge_between(g, "Relu_1__split", "Identity_2");
  ASSERT_NE(skip, kNoEdge);
  starved.fifo_depth[skip] = 1;
  EXPECT_TRUE(simulate(starved).stalled());
}

TEST(Simulator, DeadlockReported) {
  auto g = sdse::test::model("long_skip");
  std::vector<int64_t> p(g.size(), 1);
  auto sc = base_config(g, p, 1);
  const EdgeId skip = edge_between(g, "Relu_1__split", "Concat_9");
  ASSERT_NE(skip, kNoEdge);
  sc.fifo_depth[skip] = 1;
  auto r = simulate(sc);
  EXPECT_TRUE(r.stalled());
  if (r.deadlock)
    EXPECT_FALSE(r.deadlock_info.empty());
}

TEST(Simulator, Deterministic) {
  auto g = sdse::test::model("unet_small");
  std::vector<int64_t> p(g.size(), 1);
  auto a = simulate(base_config(g, p));
  auto b = simulate(base_config(g, p));
  EXPECT_EQ(a.total_cycles, b.total_cycles);
  EXPECT_EQ(a.fill_time, b.fill_time);
  EXPECT_EQ(a.max_occupancy, b.max_occupancy);
  EXPECT_EQ(a.stall_cycles, b.stall_cycles);
}

TEST(Simulator, ConservesWords) {
  auto g = sdse::test::model("diamond");
  std::vector<int64_t> p(g.size(), 1);
  auto r = simulate(base_config(g, p, 2));
  for (EdgeId e = 0; e < g.edges().size(); ++e) {
    EXPECT_EQ(r.words_pushed[e], 2 * g.edge(e).words);
    EXPECT_EQ(r.words_popped[e], r.words_pushed[e]);
  }
}

TEST(Simulator, LegalEvictionAddsNoStalls) {
  auto g = sdse::test::model("long_skip");
  auto d = sdse::test::device("zcu102");
  std::vector<int64_t> p(g.size(), 1);
  auto base = base_config(g, p);
  attach_dma(base, d, g.word_length());
  const double baseline = simulate(base).total_stalls();
  const EdgeId skip = edge_between(g, "Relu_1__split", "Concat_9");
  ASSERT_TRUE(buffer_spec(base.fifo_depth[skip], d).legal());
  auto ev = base;
  ev.evicted.push_back({skip, 1.0, 1.0, {}});
  auto r = simulate(ev);
  EXPECT_FALSE(r.deadlock);
  EXPECT_EQ(r.total_stalls(), baseline);
  EXPECT_LE(r.max_occupancy[skip], residual_depth(d));
}

TEST(Simulator, IllegalEvictionStalls) {
  auto g = sdse::test::model("diamond");
  auto d = sdse::test::device("zcu102");
  std::vector<int64_t> p(g.size(), 1);
  auto sc = base_config(g, p);
  attach_dma(sc, d, g.word_length());
  const EdgeId e = edge_between(g, "Relu_1__split", "Conv_3");
  ASSERT_FALSE(buffer_spec(sc.fifo_depth[e], d).legal());
  const double baseline = simulate(sc).total_stalls();
  sc.evicted.push_back({e, 1.0, 1.0, {}});
  EXPECT_GT(simulate(sc).total_stalls(), baseline);
}

TEST(Simulator, RatioSweepBaselineAndSaturation) {
  auto g = sdse::test::model("long_skip");
  auto d = sdse::test::device("zcu102");
  std::vector<int64_t> p(g.size(), 1);
  auto sc = base_config(g, p, 3);
  attach_dma(sc, d, g.word_length());
  const EdgeId skip = edge_between(g, "Relu_1__split", "Concat_9");
  sc.evicted.push_back({skip, 0.5, 1.0, {}});
  const double ii = simulate(sc).measured_ii;
  // Average traffic at multiplier 1 is words * 0.5 * 2 per frame; give it 1.5x that.
  const double need = static_cast<double>(g.edge(skip).words) / ii;
  sc.dma.bandwidth_words = 1.5 * need;
  auto pts = sweep_ratio_variability(sc, {1.0, 1.2, 2.0}, d.freq_mhz);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_DOUBLE_EQ(pts[0].ii_cycles, ii);
  EXPECT_DOUBLE_EQ(pts[1].ii_cycles, ii);
  EXPECT_LT(pts[2].macs_per_second, pts[0].macs_per_second);
}

TEST(Simulator, ConfigErrors) {
  auto g = sdse::test::model("linear");
  SimConfig sc;
  EXPECT_THROW(simulate(sc), SimConfigError);
  sc.graph = &g;
  sc.parallelism = std::vector<int64_t>(g.size(), 1);
  sc.frames = 0;
  EXPECT_THROW(simulate(sc), SimConfigError);
  sc.frames = 1;
  sc.parallelism[0] = 7;
  EXPECT_THROW(simulate(sc), Error);
}

TEST(Simulator, WaveformCsv) {
  auto g = sdse::test::model("linear");
  auto sc = base_config(g, std::vector<int64_t>(g.size(), 1), 1);
  sc.record_waveform = true;
  auto r = simulate(sc);
  ASSERT_FALSE(r.waveform.empty());
  auto path = (std::filesystem::temp_directory_path() / "sdse_wave.csv").string();
  write_waveform_csv(r, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "cycle,vertex,event");
  std::filesystem::remove(path);
}
