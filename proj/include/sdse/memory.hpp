/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "sdse/device.hpp"
#include "sdse/estimator.hpp"

namespace sdse {

/// Raised when an eviction would violate d_b > max(d_b', t_db).
class IllegalEviction : public Error {
public:
  using Error::Error;
};

/// No packing fits the device; `binding` names the saturated resource.
class InfeasibleError : public Error {
public:
  InfeasibleError(const std::string &what, std::string binding) : Error(what), binding(std::move(binding)) {}
  std::string binding;
};

struct BufferSpec {
  int64_t d_b = 0;
  int64_t d_b_prime = 0;
  int64_t t_db = 0;

  bool legal() const { return d_b > std::max(d_b_prime, t_db); }
};

struct EvictionResult {
  double delta_d = 0;
  double delta_bw = 0;
  double r = 0;
  double c_bar = 1;
  double alpha = 1;
};

struct FragmentationResult {
  double m = 0;
  double d = 0;
  double delta_d = 0;
  double delta_bw = 0;
};

struct BufferConfig {
  int64_t default_fifo_depth = 64;
  int64_t slack = 32;
};

/// Depth of the two burst FIFOs left on chip by an eviction.
int64_t residual_depth(const DeviceSpec &device);
BufferSpec buffer_spec(int64_t d_b, const DeviceSpec &device);

EvictionResult evict_activation(const BufferSpec &buffer, double r, double c_bar, double alpha);
EvictionResult evict_activation(const ModelGraph &g, EdgeId e, int64_t d_b, const PerfMap &perf,
                                const DeviceSpec &device, double c_bar, bool in_order = true);

FragmentationResult fragment_weights(double m, double d, double r, double c);
FragmentationResult fragment_weights(const Vertex &v, double m, const VertexPerf &perf, double c);

/// Weight words consumed per cycle while the vertex streams a frame.
double weight_rate(const Vertex &v, const VertexPerf &perf);
/// Rounds m down to a multiple of 1/steps.
double quantize_fragmentation(double m, int steps);

/// L * delta_d / delta_bw; +infinity when delta_bw is zero.
double eviction_benefit(double delta_d, double delta_bw, int word_length);

/// True when e leaves a Split and another branch of the same Split reconverges with it.
bool is_branch_edge(const ModelGraph &g, EdgeId e, const Members &in = {});

int64_t branch_buffer_depth(const ModelGraph &g, const PerfMap &perf, EdgeId e, const BufferConfig &cfg = {},
                            const Members &in = {});
/// Depth of every edge (0 for edges not inside `in`).
std::vector<int64_t> buffer_depths(const ModelGraph &g, const PerfMap &perf, const BufferConfig &cfg = {},
                                   const Members &in = {});

enum class MemKind { BRAM, URAM, LUTRAM };
std::string_view to_string(MemKind kind);

struct Store {
  std::string name;
  int64_t width = 0; ///< bits
  int64_t depth = 0; ///< rows
};

struct Placement {
  Store store;
  MemKind kind = MemKind::BRAM;
  int64_t count = 0; ///< primitives, or LUTs for LUTRAM
};

struct MemoryAllocation {
  std::vector<Placement> placements;
  int64_t bram18k = 0;
  int64_t uram = 0;
  int64_t lutram_luts = 0;
  double bram_ratio = 0;
  double uram_ratio = 0;
  double lut_ratio = 0; ///< logic plus LUTRAM
  bool feasible = true;
  std::string binding;

  double max_ratio() const { return std::max({bram_ratio, uram_ratio, lut_ratio}); }
};

int64_t bram_count(int64_t width, int64_t depth, const DeviceSpec &device);
int64_t uram_count(int64_t width, int64_t depth, const DeviceSpec &device);
int64_t lutram_count(int64_t width, int64_t depth, const CostTable &costs);
int64_t primitive_count(const Store &s, MemKind kind, const DeviceSpec &device, const CostTable &costs);

/// Greedy first-fit-decreasing that keeps the largest utilisation ratio low, then a
/// rebalancing sweep. Never throws; check `feasible`.
MemoryAllocation pack_memory(const std::vector<Store> &stores, const DeviceSpec &device, int64_t logic_luts,
                             const CostTable &costs = CostTable::defaults());
/// pack_memory that throws InfeasibleError naming the binding resource.
MemoryAllocation allocate_on_chip(const std::vector<Store> &stores, const DeviceSpec &device, int64_t logic_luts,
                                  const CostTable &costs = CostTable::defaults());

} // namespace sdse
