/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sdse/estimator.hpp"

namespace sdse {

class SimConfigError : public Error {
public:
  using Error::Error;
};

inline constexpr EdgeId kNoEdge = std::numeric_limits<EdgeId>::max();
inline constexpr VertexId kNoVertex = std::numeric_limits<VertexId>::max();

/// An edge routed through off-chip memory.
struct EvictedEdge {
  EdgeId edge = kNoEdge;
  double c_bar = 1.0;
  double alpha = 1.0;
  /// Actual per-frame compression ratios, cycled; empty means c_bar every frame.
  std::vector<double> ratio_trace;
};

/// Constant off-chip traffic sharing the DMA ports: fragmented weights, subgraph I/O.
struct ReservedStream {
  std::string name;
  double demand = 0.0;           ///< words/cycle
  VertexId vertex = kNoVertex;   ///< slowed down when its port is oversubscribed
};

struct DmaConfig {
  int64_t burst_words = 64;
  double latency_cycles = 512;
  double bandwidth_words = 0.0; ///< total words/cycle over all ports
  int ports = 1;
};

struct SimConfig {
  const ModelGraph *graph = nullptr;
  std::vector<VertexId> members;      ///< empty simulates the whole graph
  std::vector<int64_t> parallelism;   ///< per vertex id
  std::vector<int64_t> fifo_depth;    ///< per edge id; empty or 0 selects default_fifo_depth
  int64_t default_fifo_depth = 64;
  int frames = 1;
  int64_t token_words = 0;            ///< 0 picks the smallest size within max_tokens
  int64_t max_tokens = 2'000'000;
  std::vector<EvictedEdge> evicted;
  std::vector<ReservedStream> reserved;
  DmaConfig dma;
  double ratio_multiplier = 1.0;
  bool record_waveform = false;
  int timeline_buckets = 64;
};

struct WaveEvent {
  double cycle;
  std::string vertex;
  std::string event;
};

struct SimReport {
  int frames = 0;
  int64_t token_words = 1;
  double total_cycles = 0;
  std::vector<double> fill_time;         ///< first-output cycle per vertex, -1 if none
  std::vector<double> interval;          ///< last frame-to-frame emission interval per vertex
  double measured_ii = 0;
  double measured_depth = 0;
  std::vector<double> stall_cycles;      ///< skew-induced, per vertex
  std::vector<double> backpressure_cycles;
  std::vector<int64_t> max_occupancy;    ///< words, per edge (on-chip part for evicted edges)
  std::vector<int64_t> words_pushed;     ///< per edge, at the producer
  std::vector<int64_t> words_popped;     ///< per edge, at the consumer
  std::vector<std::vector<double>> port_utilization;
  double bucket_cycles = 0;
  bool deadlock = false;
  double deadlock_cycle = 0;
  std::string deadlock_info;
  int64_t macs_per_frame = 0;
  std::vector<WaveEvent> waveform;

  double total_stalls() const;
  /// True when skew blocked a branch or the run deadlocked.
  bool stalled() const { return deadlock || total_stalls() > 0; }
};

SimReport simulate(const SimConfig &cfg);

/// First-output cycle of v; throws if v produced nothing.
double measure_pipeline_depth(const SimReport &report, VertexId v);

struct SweepPoint {
  double multiplier = 1.0;
  double macs_per_second = 0.0;
  double ii_cycles = 0.0;
};

/// Re-runs cfg with every evicted edge's actual ratio scaled by each multiplier.
std::vector<SweepPoint> sweep_ratio_variability(const SimConfig &cfg, const std::vector<double> &multipliers,
                                                double freq_mhz, int jobs = 1);

/// Writes the waveform as CSV (cycle,vertex,event).
void write_waveform_csv(const SimReport &report, const std::string &path);

} // namespace sdse
