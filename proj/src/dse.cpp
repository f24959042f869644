/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/dse.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <numeric>
#include <sstream>

namespace sdse {

namespace {

constexpr double kBandwidthEps = 1e-9;

std::string edge_name(const ModelGraph &g, EdgeId e) {
  return g.vertex(g.edge(e).src).name + "->" + g.vertex(g.edge(e).dst).name;
}

std::vector<int64_t> parallelism_of(const std::vector<DesignVector> &design) {
  std::vector<int64_t> p(design.size());
  for (std::size_t i = 0; i < design.size(); ++i)
    p[i] = design[i].p;
  return p;
}

bool internal(const ModelGraph &g, EdgeId e, const Members &in) {
  return in[g.edge(e).src] && in[g.edge(e).dst];
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <typename F>
auto parallel_map(std::size_t n, int jobs, F f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<R> out(n);
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = f(i);
    return out;
  }
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(jobs));
  std::vector<std::future<void>> futs;
  for (std::size_t w = 0; w < workers; ++w)
    futs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers)
        out[i] = f(i);
    }));
  for (auto &fu : futs)
    fu.get();
  return out;
}

} // namespace

ResourceVector SubgraphPlan::resources() const {
  ResourceVector r;
  r.dsp = compute.dsp;
  r.ff = compute.ff;
  r.lut = compute.lut + memory.lutram_luts;
  r.bram18k = memory.bram18k;
  r.uram = memory.uram;
  return r;
}

std::vector<int> DesignPlan::assignment(std::size_t vertices) const {
  std::vector<int> a(vertices, -1);
  for (std::size_t i = 0; i < subgraphs.size(); ++i)
    for (VertexId v : subgraphs[i].members)
      if (v < vertices)
        a[v] = static_cast<int>(i);
  return a;
}

std::vector<VertexId> schedule_order(const ModelGraph &g) {
  std::vector<VertexId> out;
  out.reserve(g.size());
  for (VertexId v : topological_order(g)) {
    if (g.vertex(v).kind == OpKind::Split)
      continue;
    out.push_back(v);
    // Splits follow their producer; chains of splits cannot occur after parsing.
    for (EdgeId e : g.out_edges(v))
      if (g.vertex(g.edge(e).dst).kind == OpKind::Split)
        out.push_back(g.edge(e).dst);
  }
  return out;
}

SubgraphPlan evaluate_subgraph(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                               const std::vector<DesignVector> &design, const std::vector<char> &evicted,
                               const DseConfig &cfg) {
  SubgraphPlan s;
  s.members = members;
  const Members in = members_mask(g, members);
  const int L = g.word_length();
  const PerfMap perf = perf_map(g, parallelism_of(design));
  s.ii = initiation_interval(g, perf, in);
  s.depth = graph_pipeline_depth(g, perf, in);

  int64_t fragmented = 0;
  for (VertexId v : members) {
    s.compute += vertex_resources(g.vertex(v), design[v].p, L, cfg.costs);
    if (design[v].m_frag > 0)
      ++fragmented;
  }
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (evicted[e] && internal(g, e, in))
      s.evicted.push_back(e);
  if (cfg.codec != CodecScheme::None)
    s.compute += codec_overhead(cfg.codec, 2 * static_cast<int64_t>(s.evicted.size()) + fragmented, cfg.costs);

  const auto depths = buffer_depths(g, perf, cfg.buffers, in);
  const int64_t residual = residual_depth(device);
  std::vector<Store> stores;
  double io = 0.0;
  for (VertexId v : members) {
    const Vertex &vx = g.vertex(v);
    const VertexPerf &pf = perf[v];
    if (v == g.input()) {
      io += static_cast<double>(vx.input_words()) / pf.lambda;
      stores.push_back({"in:" + vx.name, L, residual});
    }
    for (EdgeId e : g.in_edges(v))
      if (!in[g.edge(e).src]) {
        io += static_cast<double>(g.edge(e).words) / pf.lambda;
        stores.push_back({"in:" + edge_name(g, e), L, residual});
      }
    bool exits = g.out_edges(v).empty();
    for (EdgeId e : g.out_edges(v))
      if (!in[g.edge(e).dst]) {
        exits = true;
      } else {
        const int64_t d = evicted[e] ? residual : depths[e];
        stores.push_back({"edge:" + edge_name(g, e), L, d});
      }
    if (exits) {
      int64_t outs = g.out_edges(v).empty() ? 1 : 0;
      for (EdgeId e : g.out_edges(v))
        outs += in[g.edge(e).dst] ? 0 : 1;
      io += emission_rate(pf) * static_cast<double>(outs);
      stores.push_back({"out:" + vx.name, L, residual});
    }
    if ((vx.kind == OpKind::Conv || vx.kind == OpKind::Pool) && pf.rho > 1)
      stores.push_back({"line:" + vx.name, L, static_cast<int64_t>(std::ceil(pf.rho))});
    if (has_weights(vx)) {
      const int64_t p = design[v].p;
      const int64_t vol = weight_volume(vx);
      const int64_t depth = (vol + p - 1) / p;
      const double m = design[v].m_frag;
      int64_t kept = static_cast<int64_t>(std::ceil((1.0 - m) * static_cast<double>(depth) - 1e-9));
      if (m > 0)
        kept += device.dma_burst_words;
      stores.push_back({"weights:" + vx.name, L * p, kept});
      if (m > 0)
        s.fragment_words += fragment_weights(vx, m, pf, cfg.weight_ratio).delta_bw;
    }
  }
  bool illegal = false;
  for (EdgeId e : s.evicted) {
    // In-order reads. Legality is reported, not thrown, so hand-written plans can be checked.
    illegal = illegal || !buffer_spec(depths[e], device).legal();
    s.eviction_words += emission_rate(perf[g.edge(e).src]) * cfg.activation_ratio * 2.0;
  }
  s.io_words = io;
  s.memory = pack_memory(stores, device, s.compute.lut, cfg.costs);
  s.bandwidth_gbps = device.to_gbps(s.bandwidth_words(), L);

  const double bw_cap = device.bandwidth_words_per_cycle(L);
  s.feasible = true;
  auto fail = [&](const char *what) {
    if (s.feasible)
      s.binding = what;
    s.feasible = false;
  };
  if (s.compute.dsp > device.dsp)
    fail("dsp");
  if (s.compute.ff > device.ff)
    fail("ff");
  if (!s.memory.feasible)
    fail(s.memory.binding.empty() ? "memory" : s.memory.binding.c_str());
  if (s.bandwidth_words() > bw_cap * (1 + kBandwidthEps))
    fail("bandwidth");
  if (illegal)
    fail("eviction");
  return s;
}

namespace {

struct Candidate {
  bool edge = true;
  std::size_t id = 0; ///< edge id or vertex id
  int step = 0;       ///< fragmentation step, 1-based
  double delta_d = 0;
  double delta_bw = 0;
  double score = 0;
};

void reset_off_chip(const ModelGraph &g, const Members &in, const std::vector<VertexId> &members,
                    std::vector<DesignVector> &design, std::vector<char> &evicted) {
  for (VertexId v : members)
    design[v].m_frag = 0.0;
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (internal(g, e, in))
      evicted[e] = 0;
}

std::vector<std::pair<std::string, double>> ledger(const SubgraphPlan &s) {
  const ResourceVector r = s.resources();
  return {{"dsp", static_cast<double>(r.dsp)},
          {"lut", static_cast<double>(r.lut)},
          {"bram18k", static_cast<double>(r.bram18k)},
          {"uram", static_cast<double>(r.uram)},
          {"bandwidth_gbps", s.bandwidth_gbps},
          {"ii", s.ii},
          {"depth", s.depth}};
}

} // namespace

bool alloc_off_chip(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                    std::vector<DesignVector> &design, std::vector<char> &evicted, const DseConfig &cfg,
                    std::vector<AuditRecord> *trail) {
  const Members in = members_mask(g, members);
  reset_off_chip(g, in, members, design, evicted);
  const SubgraphPlan base = evaluate_subgraph(g, device, members, design, evicted, cfg);
  if (base.feasible)
    return true;
  // Off-chip traffic only trades memory for bandwidth.
  if (base.binding == "dsp" || base.binding == "ff" || base.binding == "bandwidth")
    return false;

  const int L = g.word_length();
  const PerfMap perf = perf_map(g, parallelism_of(design));
  const auto depths = buffer_depths(g, perf, cfg.buffers, in);
  std::vector<Candidate> cands;
  for (EdgeId e = 0; e < g.edges().size(); ++e) {
    if (!internal(g, e, in) || !is_branch_edge(g, e, in))
      continue;
    const BufferSpec spec = buffer_spec(depths[e], device);
    if (!spec.legal())
      continue;
    const EvictionResult r = evict_activation(spec, emission_rate(perf[g.edge(e).src]), cfg.activation_ratio, 1.0);
    cands.push_back({true, e, 0, r.delta_d, r.delta_bw, eviction_benefit(r.delta_d, r.delta_bw, L)});
  }
  const int steps = std::max(1, cfg.frag_steps);
  for (VertexId v : members) {
    const Vertex &vx = g.vertex(v);
    if (!has_weights(vx))
      continue;
    const FragmentationResult f = fragment_weights(vx, 1.0 / steps, perf[v], cfg.weight_ratio);
    for (int k = 1; k <= steps; ++k)
      cands.push_back({false, v, k, f.delta_d, f.delta_bw, eviction_benefit(f.delta_d, f.delta_bw, L)});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate &a, const Candidate &b) {
    if (a.score != b.score)
      return a.score > b.score;
    if (a.edge != b.edge)
      return a.edge;
    return a.id != b.id ? a.id < b.id : a.step < b.step;
  });

  // Bandwidth decides which candidates are admissible; memory decides how many are needed.
  const double budget = device.bandwidth_words_per_cycle(L) * (1 + kBandwidthEps) - base.bandwidth_words();
  std::vector<Candidate> taken;
  double used = 0.0;
  for (const auto &c : cands)
    if (used + c.delta_bw <= budget) {
      used += c.delta_bw;
      taken.push_back(c);
    }

  auto apply = [&](std::size_t k) {
    reset_off_chip(g, in, members, design, evicted);
    for (std::size_t i = 0; i < k; ++i) {
      const Candidate &c = taken[i];
      if (c.edge)
        evicted[c.id] = 1;
      else
        design[c.id].m_frag = static_cast<double>(c.step) / steps;
    }
    return evaluate_subgraph(g, device, members, design, evicted, cfg);
  };

  if (taken.empty() || !apply(taken.size()).feasible)
    return false;
  std::size_t lo = 0, hi = taken.size(); // apply(lo) infeasible, apply(hi) feasible
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (apply(mid).feasible ? hi : lo) = mid;
  }
  if (trail) {
    for (std::size_t i = 0; i < hi; ++i) {
      const SubgraphPlan s = apply(i + 1);
      const Candidate &c = taken[i];
      std::ostringstream action;
      if (c.edge)
        action << "evict";
      else
        action << "fragment m=" << static_cast<double>(c.step) / steps;
      trail->push_back({"off_chip", -1, c.edge ? edge_name(g, c.id) : g.vertex(c.id).name, action.str(), c.score,
                        ledger(s)});
    }
  } else {
    apply(hi);
  }
  return true;
}

void alloc_parallelism(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                       std::vector<DesignVector> &design, std::vector<char> &evicted, const DseConfig &cfg,
                       std::vector<AuditRecord> *trail) {
  const Members in = members_mask(g, members);
  const int L = g.word_length();

  // Tries a parallelism change; on success design/evicted hold the new configuration.
  auto attempt = [&](VertexId v, int64_t p) {
    auto d = design;
    auto ev = evicted;
    d[v].p = p;
    ResourceVector c;
    for (VertexId u : members)
      c += vertex_resources(g.vertex(u), d[u].p, L, cfg.costs);
    if (c.dsp > device.dsp || c.ff > device.ff || c.lut > device.lut)
      return false;
    if (!alloc_off_chip(g, device, members, d, ev, cfg))
      return false;
    design = std::move(d);
    evicted = std::move(ev);
    return true;
  };
  auto record = [&](VertexId v, int64_t from, const char *why) {
    if (!trail)
      return;
    const SubgraphPlan s = evaluate_subgraph(g, device, members, design, evicted, cfg);
    std::ostringstream action;
    action << why << " p " << from << "->" << design[v].p;
    trail->push_back({"parallelism", -1, g.vertex(v).name, action.str(), s.ii, ledger(s)});
  };

  {
    auto d = design;
    auto ev = evicted;
    if (!alloc_off_chip(g, device, members, d, ev, cfg))
      return;
    design = std::move(d);
    evicted = std::move(ev);
  }

  // Phase 1: the bottleneck stage.
  const std::size_t guard = 64 * members.size() + 64;
  for (std::size_t it = 0; it < guard; ++it) {
    VertexId b = members.front();
    double worst = -1.0, second = 0.0;
    std::vector<double> period(g.size(), 0.0);
    for (VertexId v : members)
      period[v] = stage_period(vertex_perf(g.vertex(v), design[v].p));
    for (VertexId v : members)
      if (period[v] > worst || (period[v] == worst && v < b)) {
        worst = period[v];
        b = v;
      }
    for (VertexId v : members)
      if (v != b)
        second = std::max(second, period[v]);
    const auto opts = parallelism_options(g.vertex(b));
    const std::size_t cur = std::find(opts.begin(), opts.end(), design[b].p) - opts.begin();
    if (cur + 1 >= opts.size())
      break;
    const auto period_at = [&](std::size_t i) { return stage_period(vertex_perf(g.vertex(b), opts[i])); };
    if (period_at(opts.size() - 1) >= worst)
      break; // more lanes cannot shorten this stage
    std::size_t target = opts.size() - 1;
    for (std::size_t i = cur + 1; i < opts.size(); ++i)
      if (period_at(i) < second) {
        target = i;
        break;
      }
    const int64_t from = design[b].p;
    if (attempt(b, opts[target])) {
      record(b, from, "bottleneck");
      continue;
    }
    std::size_t lo = cur, hi = target;
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      const auto keep_d = design;
      const auto keep_e = evicted;
      if (attempt(b, opts[mid])) {
        lo = mid;
        design = keep_d;
        evicted = keep_e;
      } else {
        hi = mid;
      }
    }
    if (lo == cur || !attempt(b, opts[lo]))
      break;
    record(b, from, "bottleneck");
  }

  // Phase 2: spend what is left on pipeline depth without raising II.
  std::vector<char> excluded(g.size(), 0);
  for (std::size_t step = 0; step < 2 * members.size(); ++step) {
    PerfMap perf = perf_map(g, parallelism_of(design));
    const double ii = initiation_interval(g, perf, in);
    const double depth = graph_pipeline_depth(g, perf, in);
    VertexId best = g.size();
    int64_t best_p = 0;
    double best_gain = 0.0;
    for (VertexId v : members) {
      if (excluded[v])
        continue;
      const auto opts = parallelism_options(g.vertex(v));
      auto it = std::upper_bound(opts.begin(), opts.end(), design[v].p);
      if (it == opts.end())
        continue;
      const VertexPerf keep = perf[v];
      perf[v] = vertex_perf(g.vertex(v), *it);
      const double gain = depth - graph_pipeline_depth(g, perf, in);
      const bool ok = initiation_interval(g, perf, in) <= ii;
      perf[v] = keep;
      if (ok && gain > best_gain * (1 + 1e-12) && gain > depth * 1e-9) {
        best = v;
        best_p = *it;
        best_gain = gain;
      }
    }
    if (best == g.size())
      break;
    const int64_t from = design[best].p;
    if (attempt(best, best_p))
      record(best, from, "depth");
    else
      excluded[best] = 1;
  }
}

SubgraphPlan optimize_subgraph(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                               std::vector<DesignVector> &design, std::vector<char> &evicted, const DseConfig &cfg) {
  const Members in = members_mask(g, members);
  for (VertexId v : members)
    design[v].p = 1;
  reset_off_chip(g, in, members, design, evicted);
  std::vector<AuditRecord> trail;
  alloc_parallelism(g, device, members, design, evicted, cfg, &trail);
  alloc_off_chip(g, device, members, design, evicted, cfg, &trail);
  SubgraphPlan s = evaluate_subgraph(g, device, members, design, evicted, cfg);
  s.trail = std::move(trail);
  return s;
}

DesignPlan evaluate_plan(const ModelGraph &g, const DeviceSpec &device, const std::vector<std::vector<VertexId>> &parts,
                         const std::vector<DesignVector> &design, const std::vector<char> &evicted, int64_t batch,
                         const DseConfig &cfg) {
  if (design.size() != g.size() || evicted.size() != g.edges().size())
    throw Error("design does not match the graph");
  DesignPlan plan;
  plan.model = g.name();
  plan.device = device.name;
  plan.batch = batch;
  plan.design = design;
  plan.evicted = evicted;
  plan.subgraphs = parallel_map(parts.size(), cfg.jobs, [&](std::size_t i) {
    return evaluate_subgraph(g, device, parts[i], design, evicted, cfg);
  });
  const auto where = plan.assignment(g.size());
  for (auto &d : plan.design)
    d.s_i = d.s_o = d.a_i = d.a_o = false;
  for (VertexId v : g.outputs())
    plan.design[v].s_o = true;
  plan.design[g.input()].s_i = true;
  for (EdgeId e = 0; e < g.edges().size(); ++e) {
    const Edge &edge = g.edge(e);
    if (where[edge.src] != where[edge.dst]) {
      plan.design[edge.src].s_o = true;
      plan.design[edge.dst].s_i = true;
    }
    if (evicted[e]) {
      plan.design[edge.src].a_o = true;
      plan.design[edge.dst].a_i = true;
    }
  }
  std::vector<SubgraphTiming> timings;
  for (const auto &s : plan.subgraphs)
    timings.push_back({s.ii, s.depth});
  plan.performance = evaluate_performance(timings, batch, device.freq_mhz, device.reconfig_time_s);
  return plan;
}

DesignPlan initialize_min(const ModelGraph &g, const DeviceSpec &device, const DseConfig &cfg) {
  std::vector<std::vector<VertexId>> parts;
  for (VertexId v : schedule_order(g)) {
    const OpKind k = g.vertex(v).kind;
    const bool cut = k != OpKind::Split && (!cfg.boundary_kinds || cfg.boundary_kinds->count(k));
    if (parts.empty() || cut)
      parts.emplace_back();
    parts.back().push_back(v);
  }
  std::vector<DesignVector> design(g.size());
  std::vector<char> evicted(g.edges().size(), 0);
  for (const auto &part : parts) {
    auto d = design;
    auto ev = evicted;
    if (!alloc_off_chip(g, device, part, d, ev, cfg)) {
      const SubgraphPlan s = evaluate_subgraph(g, device, part, d, ev, cfg);
      std::string names;
      for (VertexId v : part)
        names += (names.empty() ? "" : ",") + g.vertex(v).name;
      throw InfeasibleError("subgraph {" + names + "} does not fit " + device.name + " at minimal parallelism (" +
                                s.binding + ")",
                            s.binding);
    }
  }
  DesignPlan plan = evaluate_plan(g, device, parts, design, evicted, 1, cfg);
  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i) {
    const auto &m = plan.subgraphs[i].members;
    plan.audit.push_back({"init", static_cast<int>(i), g.vertex(m.front()).name + ".." + g.vertex(m.back()).name,
                          "create", 0.0, ledger(plan.subgraphs[i])});
  }
  return plan;
}

namespace {

struct Optimized {
  SubgraphPlan plan;
  std::vector<DesignVector> design; ///< members only, in member order
  std::vector<std::pair<EdgeId, char>> evicted;
};

Optimized optimize_part(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                        std::vector<DesignVector> design, std::vector<char> evicted, const DseConfig &cfg) {
  Optimized o;
  o.plan = optimize_subgraph(g, device, members, design, evicted, cfg);
  const Members in = members_mask(g, members);
  for (VertexId v : members)
    o.design.push_back(design[v]);
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (internal(g, e, in))
      o.evicted.emplace_back(e, evicted[e]);
  return o;
}

void install(const Optimized &o, std::vector<DesignVector> &design, std::vector<char> &evicted) {
  for (std::size_t i = 0; i < o.plan.members.size(); ++i) {
    DesignVector d = o.design[i];
    design[o.plan.members[i]].p = d.p;
    design[o.plan.members[i]].m_frag = d.m_frag;
  }
  for (auto [e, x] : o.evicted)
    evicted[e] = x;
}

double plan_latency(const std::vector<const SubgraphPlan *> &subs, int64_t batch, const DeviceSpec &device) {
  std::vector<SubgraphTiming> t;
  for (const auto *s : subs)
    t.push_back({s->ii, s->depth});
  return batch_latency(t, batch, device.freq_mhz, device.reconfig_time_s);
}

} // namespace

DesignPlan merge_subgraphs(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan, int64_t batch,
                           const DseConfig &cfg) {
  std::vector<std::vector<VertexId>> parts;
  std::vector<SubgraphPlan> subs = plan.subgraphs;
  for (const auto &s : subs)
    parts.push_back(s.members);
  std::vector<DesignVector> design = plan.design;
  std::vector<char> evicted = plan.evicted;
  std::vector<AuditRecord> merges;
  std::map<std::vector<VertexId>, Optimized> cache;

  for (int round = 0; round < cfg.max_merge_rounds && parts.size() > 1; ++round) {
    std::vector<const SubgraphPlan *> cur;
    for (const auto &s : subs)
      cur.push_back(&s);
    const double t_cur = plan_latency(cur, batch, device);

    std::vector<std::vector<VertexId>> keys(parts.size() - 1);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      keys[i] = parts[i];
      keys[i].insert(keys[i].end(), parts[i + 1].begin(), parts[i + 1].end());
      if (!cache.count(keys[i]))
        todo.push_back(i);
    }
    auto fresh = parallel_map(todo.size(), cfg.jobs, [&](std::size_t j) {
      return optimize_part(g, device, keys[todo[j]], design, evicted, cfg);
    });
    for (std::size_t j = 0; j < todo.size(); ++j)
      cache.emplace(keys[todo[j]], std::move(fresh[j]));

    std::size_t best = parts.size();
    double best_t = t_cur;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const Optimized &o = cache.at(keys[i]);
      if (!o.plan.feasible)
        continue;
      std::vector<const SubgraphPlan *> next;
      for (std::size_t k = 0; k < subs.size(); ++k)
        if (k == i)
          next.push_back(&o.plan);
        else if (k != i + 1)
          next.push_back(&subs[k]);
      const double t = plan_latency(next, batch, device);
      if (t < best_t * (1 - 1e-12)) {
        best_t = t;
        best = i;
      }
    }
    if (best == parts.size())
      break;
    const Optimized &o = cache.at(keys[best]);
    install(o, design, evicted);
    const std::string target = g.vertex(parts[best].front()).name + ".." + g.vertex(parts[best + 1].back()).name;
    parts[best] = keys[best];
    parts.erase(parts.begin() + best + 1);
    subs[best] = o.plan;
    subs.erase(subs.begin() + best + 1);
    merges.push_back({"merge", static_cast<int>(best), target, "merge", t_cur - best_t,
                      {{"t", best_t}, {"subgraphs", static_cast<double>(parts.size())}}});
  }

  DesignPlan out = evaluate_plan(g, device, parts, design, evicted, batch, cfg);
  for (std::size_t i = 0; i < out.subgraphs.size(); ++i)
    out.subgraphs[i].trail = subs[i].trail;
  out.audit = plan.audit;
  out.audit.insert(out.audit.end(), merges.begin(), merges.end());
  return out;
}

DesignPlan run_dse(const ModelGraph &g, const DeviceSpec &device, int64_t batch, const DseConfig &cfg) {
  if (batch < 1)
    throw Error("batch size must be at least 1");
  const DesignPlan init = initialize_min(g, device, cfg);
  std::vector<std::vector<VertexId>> parts;
  for (const auto &s : init.subgraphs)
    parts.push_back(s.members);
  std::vector<DesignVector> design = init.design;
  std::vector<char> evicted = init.evicted;
  auto opt = parallel_map(parts.size(), cfg.jobs, [&](std::size_t i) {
    return optimize_part(g, device, parts[i], design, evicted, cfg);
  });
  for (const auto &o : opt)
    install(o, design, evicted);
  DesignPlan first = evaluate_plan(g, device, parts, design, evicted, batch, cfg);
  for (std::size_t i = 0; i < first.subgraphs.size(); ++i)
    first.subgraphs[i].trail = opt[i].plan.trail;

  DesignPlan plan = merge_subgraphs(g, device, first, batch, cfg);
  std::vector<AuditRecord> audit = init.audit;
  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i)
    for (AuditRecord r : plan.subgraphs[i].trail) {
      r.subgraph = static_cast<int>(i);
      audit.push_back(std::move(r));
    }
  audit.insert(audit.end(), plan.audit.begin(), plan.audit.end());
  plan.audit = std::move(audit);
  return plan;
}

std::vector<Violation> check_constraints(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan,
                                         const DseConfig &cfg) {
  std::vector<Violation> out;
  if (plan.subgraphs.empty())
    return out;
  const int L = g.word_length();
  if (plan.design.size() != g.size() || plan.evicted.size() != g.edges().size()) {
    out.push_back({-1, "design", 0.0, "design vectors do not match the graph"});
    return out;
  }
  const auto where = plan.assignment(g.size());
  for (VertexId v = 0; v < g.size(); ++v) {
    const Vertex &vx = g.vertex(v);
    const DesignVector &d = plan.design[v];
    if (where[v] < 0)
      out.push_back({-1, "design", 0.0, vx.name + " is not in any subgraph"});
    if (!is_valid_parallelism(vx, d.p))
      out.push_back({where[v], "design", static_cast<double>(d.p), vx.name + ": invalid parallelism"});
    if (d.m_frag < 0.0 || d.m_frag > 1.0 || (d.m_frag > 0.0 && !has_weights(vx)))
      out.push_back({where[v], "fragmentation", d.m_frag, vx.name + ": invalid fragmentation"});
  }
  for (EdgeId e = 0; e < g.edges().size(); ++e) {
    const Edge &edge = g.edge(e);
    const int a = where[edge.src], b = where[edge.dst];
    if (a >= 0 && b >= 0 && a > b)
      out.push_back({b, "dependency", 0.0, edge_name(g, e) + " runs backwards across subgraphs"});
    if (plan.evicted[e]) {
      if (a != b || a < 0) {
        out.push_back({a, "eviction", 0.0, edge_name(g, e) + " is evicted but crosses a subgraph boundary"});
        continue;
      }
      const Members in = members_mask(g, plan.subgraphs[a].members);
      if (!is_branch_edge(g, e, in))
        out.push_back({a, "eviction", 0.0, edge_name(g, e) + " is not a branch edge"});
    }
  }
  if (!out.empty())
    return out;

  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i) {
    const int si = static_cast<int>(i);
    const SubgraphPlan s = evaluate_subgraph(g, device, plan.subgraphs[i].members, plan.design, plan.evicted, cfg);
    const ResourceVector r = s.resources();
    auto over = [&](const char *what, int64_t used, int64_t cap) {
      if (used > cap)
        out.push_back({si, what, static_cast<double>(used - cap),
                       std::string(what) + " " + std::to_string(used) + " > " + std::to_string(cap)});
    };
    over("dsp", r.dsp, device.dsp);
    over("lut", r.lut, device.lut);
    over("ff", r.ff, device.ff);
    over("bram18k", r.bram18k, device.bram18k);
    over("uram", r.uram, device.uram);
    const double cap = device.bandwidth_words_per_cycle(L);
    if (s.bandwidth_words() > cap * (1 + kBandwidthEps))
      out.push_back({si, "bandwidth", s.bandwidth_gbps - device.bandwidth_gbps, "off-chip bandwidth exceeded"});
    if (s.binding == "eviction")
      out.push_back({si, "eviction", 0.0, "evicted buffer is not deeper than its residual FIFOs"});
  }
  return out;
}

SimConfig subgraph_sim_config(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan,
                              std::size_t subgraph, const DseConfig &cfg) {
  if (subgraph >= plan.subgraphs.size())
    throw Error("subgraph index out of range");
  const auto &members = plan.subgraphs[subgraph].members;
  const Members in = members_mask(g, members);
  const int L = g.word_length();
  SimConfig sc;
  sc.graph = &g;
  sc.members = members;
  sc.parallelism = parallelism_of(plan.design);
  const PerfMap perf = perf_map(g, sc.parallelism);
  sc.fifo_depth = buffer_depths(g, perf, cfg.buffers, in);
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (plan.evicted[e] && internal(g, e, in)) {
      EvictedEdge ev;
      ev.edge = e;
      ev.c_bar = cfg.activation_ratio;
      ev.alpha = 1.0;
      sc.evicted.push_back(ev);
    }
  for (VertexId v : members) {
    const Vertex &vx = g.vertex(v);
    const double m = plan.design[v].m_frag;
    if (m > 0 && has_weights(vx))
      sc.reserved.push_back({"weights:" + vx.name, fragment_weights(vx, m, perf[v], cfg.weight_ratio).delta_bw, v});
  }
  const double io = plan.subgraphs[subgraph].io_words;
  if (io > 0)
    sc.reserved.push_back({"io", io, kNoVertex});
  sc.dma.burst_words = device.dma_burst_words;
  sc.dma.latency_cycles = static_cast<double>(device.dma_latency_cycles);
  sc.dma.bandwidth_words = device.bandwidth_words_per_cycle(L);
  sc.dma.ports = device.max_dma_ports;
  return sc;
}

} // namespace sdse
