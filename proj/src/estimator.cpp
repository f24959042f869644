/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/estimator.hpp"

#include <algorithm>

namespace sdse {

namespace {

bool member(const Members &in, VertexId v) { return in.empty() || in[v]; }

} // namespace

Members members_mask(const ModelGraph &g, const std::vector<VertexId> &members) {
  Members m(g.size(), 0);
  for (VertexId v : members)
    m.at(v) = 1;
  return m;
}

PerfMap perf_map(const ModelGraph &g, const std::vector<int64_t> &parallelism) {
  if (parallelism.size() != g.size())
    throw Error("parallelism vector does not match the graph");
  PerfMap perf;
  perf.reserve(g.size());
  for (const auto &v : g.vertices())
    perf.push_back(vertex_perf(v, parallelism[v.id]));
  return perf;
}

double emission_rate(const VertexPerf &perf) { return perf.sigma_out / (perf.lambda + perf.rho); }

double interval_prev(const ModelGraph &g, VertexId v, const PerfMap &perf, const Members &in) {
  double best = -1.0;
  for (EdgeId e : g.in_edges(v)) {
    VertexId a = g.edge(e).src;
    if (member(in, a))
      best = std::max(best, perf[a].lambda + perf[a].rho);
  }
  if (best < 0)
    throw Error("vertex '" + g.vertex(v).name + "' has no ancestors");
  return best;
}

double initiation_rate(const ModelGraph &g, VertexId v, const PerfMap &perf, const Members &in) {
  bool has_ancestor = false;
  for (EdgeId e : g.in_edges(v))
    has_ancestor = has_ancestor || member(in, g.edge(e).src);
  if (!has_ancestor)
    return perf[v].r_in;
  return perf[v].sigma_in / interval_prev(g, v, perf, in);
}

std::vector<double> vertex_delays(const ModelGraph &g, const PerfMap &perf, const Members &in) {
  std::vector<double> delay(g.size(), 0.0);
  for (VertexId v : topological_order(g)) {
    if (!member(in, v))
      continue;
    double upstream = 0.0;
    for (EdgeId e : g.in_edges(v)) {
      VertexId a = g.edge(e).src;
      if (member(in, a))
        upstream = std::max(upstream, delay[a]);
    }
    delay[v] = upstream + perf[v].rho / initiation_rate(g, v, perf, in);
  }
  return delay;
}

double vertex_delay(const ModelGraph &g, VertexId v, const PerfMap &perf) {
  if (v >= g.size())
    throw Error("vertex id out of range");
  return vertex_delays(g, perf)[v];
}

double graph_pipeline_depth(const ModelGraph &g, const PerfMap &perf, const Members &in) {
  auto d = vertex_delays(g, perf, in);
  return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
}

double initiation_interval(const ModelGraph &g, const PerfMap &perf, const Members &in) {
  double ii = 0.0;
  for (const auto &v : g.vertices())
    if (member(in, v.id))
      ii = std::max(ii, stage_period(perf[v.id]));
  return std::max(ii, 1.0);
}

double batch_latency(const std::vector<SubgraphTiming> &plan, int64_t b, double freq_mhz, double reconfig_s) {
  return evaluate_performance(plan, b, freq_mhz, reconfig_s).t;
}

double throughput(int64_t b, double t) {
  if (!(t > 0))
    throw Error("throughput needs a positive latency");
  return static_cast<double>(b) / t;
}

PerformanceReport evaluate_performance(const std::vector<SubgraphTiming> &plan, int64_t b, double freq_mhz,
                                       double reconfig_s) {
  if (plan.empty())
    throw Error("empty plan");
  if (b < 1)
    throw Error("batch size must be >= 1");
  if (!(freq_mhz > 0))
    throw Error("frequency must be positive");
  PerformanceReport r;
  r.n = static_cast<int>(plan.size());
  r.b = b;
  for (const auto &s : plan) {
    const double f = (s.freq_mhz > 0 ? s.freq_mhz : freq_mhz) * 1e6;
    const double compute = (static_cast<double>(b) * s.ii + s.depth) / f;
    r.subgraph_compute_s.push_back(compute);
    r.compute_s += compute;
    r.reconfig_s += s.reconfig_s >= 0 ? s.reconfig_s : reconfig_s;
  }
  r.t = r.compute_s + r.reconfig_s;
  r.theta = throughput(b, r.t);
  r.reconfig_share = r.reconfig_s / r.t;
  return r;
}

} // namespace sdse
