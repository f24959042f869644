/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sdse/codec.hpp"
#include "sdse/device.hpp"
#include "sdse/estimator.hpp"
#include "sdse/memory.hpp"
#include "sdse/simulator.hpp"

namespace sdse {

/// Per-vertex design choices.
struct DesignVector {
  bool s_i = false;   ///< reads an input from off-chip (subgraph entry)
  bool s_o = false;   ///< writes an output off-chip (subgraph exit)
  int64_t p = 1;
  bool a_i = false;   ///< an input edge is evicted
  bool a_o = false;   ///< an output edge is evicted
  double m_frag = 0.0;

  bool operator==(const DesignVector &) const = default;
};

struct DseConfig {
  /// Cuts are allowed only before vertices of these kinds; nullopt allows every cut.
  std::optional<std::set<OpKind>> boundary_kinds;
  CodecScheme codec = CodecScheme::None;
  double activation_ratio = 1.0; ///< c_bar of evicted activations
  double weight_ratio = 1.0;     ///< compile-time ratio of fragmented weights
  int frag_steps = 16;
  int max_merge_rounds = 100;
  int jobs = 1;
  BufferConfig buffers;
  CostTable costs = CostTable::defaults();
};

/// One DSE decision, written as a JSON line.
struct AuditRecord {
  std::string pass;   ///< init, parallelism, off_chip, merge
  int subgraph = -1;
  std::string target; ///< vertex name, "src->dst" edge, or subgraph range
  std::string action;
  double score = 0.0;
  /// Resource and bandwidth totals of the subgraph (or plan) after the decision.
  std::vector<std::pair<std::string, double>> ledger_after;
};

struct SubgraphPlan {
  std::vector<VertexId> members; ///< schedule order
  std::vector<EdgeId> evicted;   ///< ascending
  double ii = 0.0;
  double depth = 0.0;
  ResourceVector compute;        ///< operators plus codec, no memory
  MemoryAllocation memory;
  double io_words = 0.0;         ///< words/cycle crossing the subgraph boundary
  double eviction_words = 0.0;
  double fragment_words = 0.0;
  double bandwidth_gbps = 0.0;
  bool feasible = false;
  std::string binding;
  std::vector<AuditRecord> trail; ///< passes 2 and 4 decisions of the accepted configuration

  double bandwidth_words() const { return io_words + eviction_words + fragment_words; }
  /// dsp/ff from compute; lut includes LUTRAM; bram/uram from the packing.
  ResourceVector resources() const;
};

struct DesignPlan {
  std::string model;
  std::string device;
  int64_t batch = 1;
  std::vector<DesignVector> design;     ///< per vertex id
  std::vector<char> evicted;            ///< per edge id
  std::vector<SubgraphPlan> subgraphs;  ///< execution order
  PerformanceReport performance;
  std::vector<AuditRecord> audit;

  /// Subgraph index of every vertex.
  std::vector<int> assignment(std::size_t vertices) const;
};

struct Violation {
  int subgraph = -1;
  std::string resource; ///< dsp, lut, ff, bram18k, uram, bandwidth, dependency, eviction, fragmentation, design
  double amount = 0.0;  ///< excess in resource units (Gb/s for bandwidth)
  std::string message;
};

/// Topological order with every Split directly after its producer.
std::vector<VertexId> schedule_order(const ModelGraph &g);

/// Recomputes every metric of one subgraph from the design choices.
SubgraphPlan evaluate_subgraph(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                               const std::vector<DesignVector> &design, const std::vector<char> &evicted,
                               const DseConfig &cfg = {});

/// Rebuilds a full plan (flags, subgraph metrics, performance) from parallelism,
/// fragmentation and eviction choices over the given subgraph ranges.
DesignPlan evaluate_plan(const ModelGraph &g, const DeviceSpec &device, const std::vector<std::vector<VertexId>> &parts,
                         const std::vector<DesignVector> &design, const std::vector<char> &evicted, int64_t batch,
                         const DseConfig &cfg = {});

/// Pass 1: as many subgraphs as the cut rules allow, p = 1 everywhere.
/// Throws InfeasibleError when a minimal subgraph cannot fit.
DesignPlan initialize_min(const ModelGraph &g, const DeviceSpec &device, const DseConfig &cfg = {});

/// Passes 2-4 on one subgraph, starting from p = 1 and no off-chip traffic.
/// Returns the design of its members (other entries untouched) in `design`/`evicted`.
SubgraphPlan optimize_subgraph(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                               std::vector<DesignVector> &design, std::vector<char> &evicted,
                               const DseConfig &cfg = {});

/// Pass 2 alone: raises parallelism of the bottleneck while the subgraph stays feasible.
void alloc_parallelism(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                       std::vector<DesignVector> &design, std::vector<char> &evicted, const DseConfig &cfg,
                       std::vector<AuditRecord> *trail = nullptr);

/// Pass 4 alone: resets and re-chooses evictions and fragmentation of the subgraph,
/// taking candidates by descending score until the on-chip memory fits.
/// Returns true when the subgraph ends up feasible.
bool alloc_off_chip(const ModelGraph &g, const DeviceSpec &device, const std::vector<VertexId> &members,
                    std::vector<DesignVector> &design, std::vector<char> &evicted, const DseConfig &cfg,
                    std::vector<AuditRecord> *trail = nullptr);

/// Pass 5: merges adjacent subgraphs while batch latency strictly improves.
DesignPlan merge_subgraphs(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan, int64_t batch,
                           const DseConfig &cfg = {});

DesignPlan run_dse(const ModelGraph &g, const DeviceSpec &device, int64_t batch, const DseConfig &cfg = {});

std::vector<Violation> check_constraints(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan,
                                         const DseConfig &cfg = {});

/// Simulation setup for one subgraph of a plan, with evicted edges and off-chip
/// streams (fragmented weights, boundary I/O) on the DMA ports.
SimConfig subgraph_sim_config(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan,
                              std::size_t subgraph, const DseConfig &cfg = {});

} // namespace sdse
