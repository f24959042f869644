/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <vector>

#include "sdse/graph.hpp"
#include "sdse/layer_models.hpp"

namespace sdse {

/// VertexPerf indexed by vertex id.
using PerfMap = std::vector<VertexPerf>;

/// Membership mask indexed by vertex id. An empty mask means the whole graph.
using Members = std::vector<char>;

Members members_mask(const ModelGraph &g, const std::vector<VertexId> &members);

PerfMap perf_map(const ModelGraph &g, const std::vector<int64_t> &parallelism);

/// Words per cycle leaving v while it streams a frame: sigma_out / (lambda + rho).
double emission_rate(const VertexPerf &perf);

/// Frame period of one vertex, lambda + rho.
inline double stage_period(const VertexPerf &perf) { return perf.lambda + perf.rho; }

/// max over ancestors a of (lambda_a + rho_a). Throws if v has no ancestors in `in`.
double interval_prev(const ModelGraph &g, VertexId v, const PerfMap &perf, const Members &in = {});

/// r_in when v has no ancestors in `in`, else sigma_in / interval_prev.
double initiation_rate(const ModelGraph &g, VertexId v, const PerfMap &perf, const Members &in = {});

/// Largest sum of rho_n / r_st(n) over paths from the input to v.
double vertex_delay(const ModelGraph &g, VertexId v, const PerfMap &perf);

/// vertex_delay for every vertex of `in` (0 elsewhere). Paths start at vertices
/// without ancestors in `in`.
std::vector<double> vertex_delays(const ModelGraph &g, const PerfMap &perf, const Members &in = {});

double graph_pipeline_depth(const ModelGraph &g, const PerfMap &perf, const Members &in = {});

/// Frame period of the slowest member.
double initiation_interval(const ModelGraph &g, const PerfMap &perf, const Members &in = {});

struct SubgraphTiming {
  double ii = 1.0;         ///< cycles
  double depth = 0.0;      ///< cycles
  double freq_mhz = 0.0;   ///< 0 selects the global frequency
  double reconfig_s = -1;  ///< negative selects the global reconfiguration time
};

struct PerformanceReport {
  double t = 0.0;          ///< seconds per batch
  double theta = 0.0;      ///< frames per second
  int n = 0;
  int64_t b = 1;
  double compute_s = 0.0;
  double reconfig_s = 0.0;
  double reconfig_share = 0.0;
  std::vector<double> subgraph_compute_s;

  bool operator==(const PerformanceReport &) const = default;
};

double batch_latency(const std::vector<SubgraphTiming> &plan, int64_t b, double freq_mhz, double reconfig_s);
double throughput(int64_t b, double t);
PerformanceReport evaluate_performance(const std::vector<SubgraphTiming> &plan, int64_t b, double freq_mhz,
                                       double reconfig_s);

} // namespace sdse
