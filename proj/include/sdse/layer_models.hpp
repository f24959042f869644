/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdse/graph.hpp"

namespace sdse {

/// Streaming behaviour of one vertex at a chosen parallelism.
///
/// `rho` is the number of input words the vertex must absorb before it can emit
/// anything (line-buffer fill); it is numerically the fill time at unit rate.
/// Rates are aggregate over all input slots.
struct VertexPerf {
  double r_in = 1.0;      ///< standard input rate, words/cycle
  double sigma_in = 0.0;  ///< input feature-map words per frame
  double rho = 1.0;       ///< pipeline depth
  double lambda = 0.0;    ///< cycles to process one frame
  double r_out = 1.0;     ///< words/cycle
  double sigma_out = 0.0; ///< output words per frame
};

struct ResourceVector {
  int64_t dsp = 0;
  int64_t lut = 0;
  int64_t ff = 0;
  int64_t bram18k = 0;
  int64_t uram = 0;

  ResourceVector &operator+=(const ResourceVector &o);
  friend ResourceVector operator+(ResourceVector a, const ResourceVector &b) { return a += b; }
  ResourceVector operator*(int64_t k) const;
  /// Component-wise <=.
  bool fits_in(const ResourceVector &capacity) const;
  bool operator==(const ResourceVector &) const = default;
};

/// Affine per-kind compute cost: dsp = dsp_per_p * p, lut = lut_base + lut_per_p * p, ...
struct KindCost {
  double dsp_per_p = 0;
  double lut_base = 0;
  double lut_per_p = 0;
  double ff_base = 0;
  double ff_per_p = 0;
};

struct StreamCost {
  int64_t lut = 0;
  int64_t ff = 0;
};

/// Device-independent cost coefficients, overridable from a JSON file.
struct CostTable {
  std::map<OpKind, KindCost> kinds;
  StreamCost rle;
  StreamCost huffman;
  /// Bits stored per LUT when a store is mapped to distributed RAM.
  int64_t lutram_bits_per_lut = 64;

  static CostTable defaults();
  static CostTable from_json(const std::string &text);
  static CostTable load(const std::string &path);
  std::string to_json() const;
};

/// Legal parallelism values for v in increasing order.
std::vector<int64_t> parallelism_options(const Vertex &v);
bool is_valid_parallelism(const Vertex &v, int64_t p);

/// Multiply-accumulates (or window ops for pooling) per frame.
int64_t macs(const Vertex &v);

/// Weight words of a weight-bearing vertex; throws for other kinds.
int64_t weight_volume(const Vertex &v);
bool has_weights(const Vertex &v);

VertexPerf vertex_perf(const Vertex &v, int64_t p);
ResourceVector vertex_resources(const Vertex &v, int64_t p, int word_length,
                                const CostTable &costs = CostTable::defaults());

} // namespace sdse
