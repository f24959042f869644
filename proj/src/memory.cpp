/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/memory.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace sdse {

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

bool member(const Members &in, VertexId v) { return in.empty() || in[v]; }

} // namespace

int64_t residual_depth(const DeviceSpec &device) { return 2 * device.dma_burst_words; }

BufferSpec buffer_spec(int64_t d_b, const DeviceSpec &device) {
  return {d_b, residual_depth(device), device.dma_latency_cycles};
}

EvictionResult evict_activation(const BufferSpec &buffer, double r, double c_bar, double alpha) {
  if (!buffer.legal())
    throw IllegalEviction("eviction needs d_b > max(d_b', t_db): d_b=" + std::to_string(buffer.d_b) +
                          ", d_b'=" + std::to_string(buffer.d_b_prime) + ", t_db=" + std::to_string(buffer.t_db));
  if (!(c_bar > 0) || c_bar > 1.0 + 1e-12)
    throw Error("average compression ratio must be in (0, 1]");
  if (alpha < 1.0)
    throw Error("read penalty must be >= 1");
  EvictionResult res;
  res.r = r;
  res.c_bar = c_bar;
  res.alpha = alpha;
  res.delta_d = static_cast<double>(buffer.d_b - buffer.d_b_prime);
  res.delta_bw = r * c_bar * (1.0 + alpha);
  return res;
}

EvictionResult evict_activation(const ModelGraph &g, EdgeId e, int64_t d_b, const PerfMap &perf,
                                const DeviceSpec &device, double c_bar, bool in_order) {
  const Edge &edge = g.edge(e);
  try {
    return evict_activation(buffer_spec(d_b, device), emission_rate(perf[edge.src]), c_bar,
                            in_order ? 1.0 : device.alpha_random);
  } catch (const IllegalEviction &ex) {
    throw IllegalEviction("edge " + g.vertex(edge.src).name + "->" + g.vertex(edge.dst).name + ": " + ex.what());
  }
}

FragmentationResult fragment_weights(double m, double d, double r, double c) {
  if (m < 0 || m > 1)
    throw Error("fragmentation ratio must be in [0, 1]");
  FragmentationResult res;
  res.m = m;
  res.d = d;
  res.delta_d = m * d;
  res.delta_bw = m * r * c;
  return res;
}

double weight_rate(const Vertex &v, const VertexPerf &perf) {
  return static_cast<double>(macs(v)) / (perf.lambda + perf.rho);
}

FragmentationResult fragment_weights(const Vertex &v, double m, const VertexPerf &perf, double c) {
  if (!has_weights(v))
    throw Error("vertex '" + v.name + "' has no weights to fragment");
  return fragment_weights(m, static_cast<double>(weight_volume(v)), weight_rate(v, perf), c);
}

double quantize_fragmentation(double m, int steps) {
  if (steps < 1)
    throw Error("fragmentation steps must be >= 1");
  return std::floor(std::clamp(m, 0.0, 1.0) * steps + 1e-9) / steps;
}

double eviction_benefit(double delta_d, double delta_bw, int word_length) {
  if (delta_bw <= 0)
    return std::numeric_limits<double>::infinity();
  return word_length * delta_d / delta_bw;
}

namespace {

/// Vertices reachable from `start` inside `in`, as a mask.
std::vector<char> reach(const ModelGraph &g, VertexId start, const Members &in) {
  std::vector<char> seen(g.size(), 0);
  std::vector<VertexId> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    VertexId v = stack.back();
    stack.pop_back();
    for (EdgeId e : g.out_edges(v)) {
      VertexId w = g.edge(e).dst;
      if (member(in, w) && !seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  return seen;
}

struct Branch {
  EdgeId edge;
  VertexId head;
  std::vector<char> reach;
  std::vector<double> first; // fill time of each reached vertex relative to the split
};

/// Words each out-edge of split s must hold, or -1 when an edge never reconverges.
std::vector<std::pair<EdgeId, double>> split_skews(const ModelGraph &g, const PerfMap &perf, VertexId s,
                                                   const Members &in, const std::vector<VertexId> &order,
                                                   const std::vector<std::size_t> &rank) {
  std::vector<Branch> branches;
  for (EdgeId e : g.out_edges(s)) {
    VertexId head = g.edge(e).dst;
    if (!member(in, head))
      continue;
    Branch b{e, head, reach(g, head, in), std::vector<double>(g.size(), -1.0)};
    for (VertexId v : order) {
      if (!b.reach[v] || !member(in, v))
        continue;
      double up = v == head ? 0.0 : -1.0;
      if (v != head)
        for (EdgeId ie : g.in_edges(v)) {
          VertexId a = g.edge(ie).src;
          if (b.reach[a] && b.first[a] >= 0)
            up = std::max(up, b.first[a]);
        }
      if (up < 0)
        continue;
      b.first[v] = up + perf[v].rho / initiation_rate(g, v, perf, in);
    }
    branches.push_back(std::move(b));
  }

  // First and last word arrival at join j through branch b.
  auto arrival = [&](const Branch &b, VertexId j) {
    if (b.head == j)
      return std::pair{0.0, stage_period(perf[s])};
    double first = 0, last = 0;
    for (EdgeId ie : g.in_edges(j)) {
      VertexId a = g.edge(ie).src;
      if (a == s || !b.reach[a] || b.first[a] < 0)
        continue;
      first = std::max(first, b.first[a]);
      last = std::max(last, b.first[a] + stage_period(perf[a]));
    }
    return std::pair{first, last};
  };

  // Slowest stage a branch or its join can drain at.
  const double t_split = stage_period(perf[s]);
  double drain = t_split;
  for (const auto &b : branches)
    for (VertexId v = 0; v < g.size(); ++v)
      if (b.reach[v])
        drain = std::max(drain, stage_period(perf[v]));

  std::vector<std::pair<EdgeId, double>> out;
  for (const auto &b : branches) {
    const double words = static_cast<double>(g.edge(b.edge).words);
    const double r = emission_rate(perf[s]);
    double need = -1.0;
    for (const auto &o : branches) {
      if (o.edge == b.edge)
        continue;
      VertexId join = g.size();
      for (VertexId v = 0; v < g.size(); ++v)
        if (b.reach[v] && o.reach[v] && (join == g.size() || rank[v] < rank[join]))
          join = v;
      if (join == g.size())
        continue;
      auto [bf, bl] = arrival(b, join);
      auto [of, ol] = arrival(o, join);
      const double first = std::max(0.0, of - bf);
      const double last = std::max(0.0, ol - bl);
      double lead = r * std::max(first, last);
      // The split finishes a frame in t_split; past the first-word skew the join
      // drains this branch no faster than one frame per `drain` cycles.
      if (first > 0)
        lead = std::max(lead, words * (1.0 - std::max(0.0, t_split - first) / drain));
      need = std::max({need, 0.0, lead});
    }
    out.emplace_back(b.edge, need);
  }
  return out;
}

} // namespace

bool is_branch_edge(const ModelGraph &g, EdgeId e, const Members &in) {
  const Edge &edge = g.edge(e);
  if (g.vertex(edge.src).kind != OpKind::Split || !member(in, edge.src) || !member(in, edge.dst))
    return false;
  auto mine = reach(g, edge.dst, in);
  for (EdgeId o : g.out_edges(edge.src)) {
    if (o == e || !member(in, g.edge(o).dst))
      continue;
    auto theirs = reach(g, g.edge(o).dst, in);
    for (VertexId v = 0; v < g.size(); ++v)
      if (mine[v] && theirs[v])
        return true;
  }
  return false;
}

std::vector<int64_t> buffer_depths(const ModelGraph &g, const PerfMap &perf, const BufferConfig &cfg,
                                   const Members &in) {
  std::vector<int64_t> depth(g.edges().size(), 0);
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (member(in, g.edge(e).src) && member(in, g.edge(e).dst))
      depth[e] = cfg.default_fifo_depth;
  auto order = topological_order(g);
  std::vector<std::size_t> rank(g.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    rank[order[i]] = i;
  for (const auto &v : g.vertices()) {
    if (v.kind != OpKind::Split || !member(in, v.id))
      continue;
    for (auto [e, need] : split_skews(g, perf, v.id, in, order, rank)) {
      if (need < 0)
        continue;
      const double words = std::ceil(need - 1e-9);
      depth[e] = std::min<int64_t>(g.edge(e).words, static_cast<int64_t>(words) + cfg.slack);
    }
  }
  return depth;
}

int64_t branch_buffer_depth(const ModelGraph &g, const PerfMap &perf, EdgeId e, const BufferConfig &cfg,
                            const Members &in) {
  if (e >= g.edges().size())
    throw Error("edge id out of range");
  return buffer_depths(g, perf, cfg, in).at(e);
}

std::string_view to_string(MemKind kind) {
  switch (kind) {
  case MemKind::BRAM:
    return "bram";
  case MemKind::URAM:
    return "uram";
  case MemKind::LUTRAM:
    return "lutram";
  }
  return "?";
}

int64_t bram_count(int64_t width, int64_t depth, const DeviceSpec &device) {
  int64_t best = std::numeric_limits<int64_t>::max();
  for (const auto &geo : device.bram_geometries)
    best = std::min(best, ceil_div(width, geo.width) * ceil_div(depth, geo.depth));
  return best;
}

int64_t uram_count(int64_t width, int64_t depth, const DeviceSpec &device) {
  const auto &geo = device.uram_geometry;
  if (width <= geo.width) {
    // Sequential access lets narrow words share one wide row.
    const int64_t per_row = geo.width / width;
    return ceil_div(ceil_div(depth, per_row), geo.depth);
  }
  return ceil_div(width, geo.width) * ceil_div(depth, geo.depth);
}

int64_t lutram_count(int64_t width, int64_t depth, const CostTable &costs) {
  return ceil_div(width * depth, costs.lutram_bits_per_lut);
}

int64_t primitive_count(const Store &s, MemKind kind, const DeviceSpec &device, const CostTable &costs) {
  if (s.width <= 0 || s.depth <= 0)
    return 0;
  switch (kind) {
  case MemKind::BRAM:
    return bram_count(s.width, s.depth, device);
  case MemKind::URAM:
    return uram_count(s.width, s.depth, device);
  case MemKind::LUTRAM:
    return lutram_count(s.width, s.depth, costs);
  }
  return 0;
}

namespace {

struct Usage {
  int64_t bram = 0, uram = 0, lut = 0;
};

double ratio(int64_t used, int64_t cap) {
  if (used == 0)
    return 0.0;
  return cap > 0 ? static_cast<double>(used) / static_cast<double>(cap) : std::numeric_limits<double>::infinity();
}

std::pair<double, double> score(const Usage &u, const DeviceSpec &d) {
  double b = ratio(u.bram, d.bram18k), r = ratio(u.uram, d.uram), l = ratio(u.lut, d.lut);
  return {std::max({b, r, l}), b + r + l};
}

void apply(Usage &u, MemKind k, int64_t count, int sign) {
  (k == MemKind::BRAM ? u.bram : k == MemKind::URAM ? u.uram : u.lut) += sign * count;
}

} // namespace

MemoryAllocation pack_memory(const std::vector<Store> &stores, const DeviceSpec &device, int64_t logic_luts,
                             const CostTable &costs) {
  std::vector<std::size_t> order(stores.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stores[a].width * stores[a].depth > stores[b].width * stores[b].depth;
  });

  constexpr MemKind kinds[] = {MemKind::BRAM, MemKind::URAM, MemKind::LUTRAM};
  std::vector<std::array<int64_t, 3>> counts(stores.size());
  for (std::size_t i = 0; i < stores.size(); ++i)
    for (int k = 0; k < 3; ++k)
      counts[i][k] = primitive_count(stores[i], kinds[k], device, costs);

  Usage usage;
  usage.lut = logic_luts;
  std::vector<int> choice(stores.size(), 0);
  for (std::size_t i : order) {
    std::pair<double, double> best{std::numeric_limits<double>::infinity(), 0};
    for (int k = 0; k < 3; ++k) {
      if (kinds[k] == MemKind::URAM && device.uram == 0)
        continue;
      apply(usage, kinds[k], counts[i][k], +1);
      auto s = score(usage, device);
      apply(usage, kinds[k], counts[i][k], -1);
      if (s < best) {
        best = s;
        choice[i] = k;
      }
    }
    apply(usage, kinds[choice[i]], counts[i][choice[i]], +1);
  }

  for (int sweep = 0; sweep < 4; ++sweep) {
    bool moved = false;
    for (std::size_t i : order) {
      auto current = score(usage, device);
      for (int k = 0; k < 3; ++k) {
        if (k == choice[i] || (kinds[k] == MemKind::URAM && device.uram == 0))
          continue;
        apply(usage, kinds[choice[i]], counts[i][choice[i]], -1);
        apply(usage, kinds[k], counts[i][k], +1);
        auto s = score(usage, device);
        if (s < current) {
          choice[i] = k;
          current = s;
          moved = true;
        } else {
          apply(usage, kinds[k], counts[i][k], -1);
          apply(usage, kinds[choice[i]], counts[i][choice[i]], +1);
        }
      }
    }
    if (!moved)
      break;
  }

  MemoryAllocation alloc;
  for (std::size_t i = 0; i < stores.size(); ++i)
    alloc.placements.push_back({stores[i], kinds[choice[i]], counts[i][choice[i]]});
  alloc.bram18k = usage.bram;
  alloc.uram = usage.uram;
  alloc.lutram_luts = usage.lut - logic_luts;
  alloc.bram_ratio = ratio(usage.bram, device.bram18k);
  alloc.uram_ratio = ratio(usage.uram, device.uram);
  alloc.lut_ratio = ratio(usage.lut, device.lut);
  if (alloc.max_ratio() > 1.0) {
    alloc.feasible = false;
    alloc.binding = alloc.bram_ratio >= alloc.max_ratio() ? "bram18k"
                    : alloc.uram_ratio >= alloc.max_ratio() ? "uram"
                                                            : "lut";
  }
  return alloc;
}

MemoryAllocation allocate_on_chip(const std::vector<Store> &stores, const DeviceSpec &device, int64_t logic_luts,
                                  const CostTable &costs) {
  auto alloc = pack_memory(stores, device, logic_luts, costs);
  if (!alloc.feasible)
    throw InfeasibleError("on-chip memory does not fit " + device.name + ": " + alloc.binding + " exhausted",
                          alloc.binding);
  return alloc;
}

} // namespace sdse
