/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include "sdse/layer_models.hpp"

namespace sdse {

/// One width x depth configuration of a memory primitive.
struct MemoryGeometry {
  int64_t width = 0;
  int64_t depth = 0;
};

struct DeviceSpec {
  std::string name;
  double freq_mhz = 200.0;
  int64_t dsp = 0;
  int64_t lut = 0;
  int64_t ff = 0;
  int64_t bram18k = 0;
  int64_t uram = 0;
  double bandwidth_gbps = 0.0;
  double reconfig_time_s = 0.0;
  int64_t dma_burst_words = 64;
  int64_t dma_latency_cycles = 512;
  double alpha_random = 2.0;
  int max_dma_ports = 4;
  std::vector<MemoryGeometry> bram_geometries = {{1, 16384}, {2, 8192}, {4, 4096}, {9, 2048}, {18, 1024}, {36, 512}};
  MemoryGeometry uram_geometry = {72, 4096};

  ResourceVector capacity() const { return {dsp, lut, ff, bram18k, uram}; }
  double bandwidth_words_per_cycle(int word_length) const;
  double to_gbps(double words_per_cycle, int word_length) const;

  static DeviceSpec from_json(const std::string &text);
  static DeviceSpec load(const std::string &path);
  std::string to_json() const;
};

} // namespace sdse
