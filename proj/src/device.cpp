/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/device.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sdse {

using json = nlohmann::json;

double DeviceSpec::bandwidth_words_per_cycle(int word_length) const {
  return bandwidth_gbps * 1e3 / (freq_mhz * word_length);
}

double DeviceSpec::to_gbps(double words_per_cycle, int word_length) const {
  return words_per_cycle * word_length * freq_mhz / 1e3;
}

namespace {

template <typename T> T field(const json &doc, const char *key) {
  if (!doc.contains(key))
    throw ParseError(std::string("device: missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception &) {
    throw ParseError(std::string("device: field '") + key + "' has the wrong type");
  }
}

std::vector<MemoryGeometry> geometries(const json &arr) {
  std::vector<MemoryGeometry> out;
  for (const auto &g : arr)
    out.push_back({g.at(0).get<int64_t>(), g.at(1).get<int64_t>()});
  return out;
}

} // namespace

DeviceSpec DeviceSpec::from_json(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("device: invalid JSON: ") + e.what());
  }
  DeviceSpec d;
  d.name = field<std::string>(doc, "name");
  d.freq_mhz = field<double>(doc, "freq_mhz");
  d.dsp = field<int64_t>(doc, "dsp");
  d.lut = field<int64_t>(doc, "lut");
  d.ff = field<int64_t>(doc, "ff");
  d.bram18k = field<int64_t>(doc, "bram18k");
  d.uram = field<int64_t>(doc, "uram");
  d.bandwidth_gbps = field<double>(doc, "bandwidth_gbps");
  d.reconfig_time_s = field<double>(doc, "reconfig_time_s");
  d.dma_burst_words = field<int64_t>(doc, "dma_burst_words");
  d.dma_latency_cycles = field<int64_t>(doc, "dma_latency_cycles");
  d.alpha_random = field<double>(doc, "alpha_random");
  d.max_dma_ports = field<int>(doc, "max_dma_ports");
  if (doc.contains("bram_geometries"))
    d.bram_geometries = geometries(doc["bram_geometries"]);
  if (doc.contains("uram_geometry"))
    d.uram_geometry = {doc["uram_geometry"].at(0).get<int64_t>(), doc["uram_geometry"].at(1).get<int64_t>()};

  auto positive = [&](double v, const char *key) {
    if (!(v > 0))
      throw ParseError(std::string("device '") + d.name + "': '" + key + "' must be positive");
  };
  positive(d.freq_mhz, "freq_mhz");
  positive(static_cast<double>(d.lut), "lut");
  positive(static_cast<double>(d.ff), "ff");
  positive(d.bandwidth_gbps, "bandwidth_gbps");
  positive(static_cast<double>(d.dma_burst_words), "dma_burst_words");
  positive(static_cast<double>(d.max_dma_ports), "max_dma_ports");
  if (d.dsp < 0 || d.bram18k < 0 || d.uram < 0 || d.reconfig_time_s < 0 || d.dma_latency_cycles < 0)
    throw ParseError("device '" + d.name + "': negative capacity");
  if (d.alpha_random < 1.0)
    throw ParseError("device '" + d.name + "': alpha_random must be >= 1");
  if (d.bram_geometries.empty())
    throw ParseError("device '" + d.name + "': no BRAM geometries");
  return d;
}

DeviceSpec DeviceSpec::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open device file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string DeviceSpec::to_json() const {
  json doc = {{"name", name},
              {"freq_mhz", freq_mhz},
              {"dsp", dsp},
              {"lut", lut},
              {"ff", ff},
              {"bram18k", bram18k},
              {"uram", uram},
              {"bandwidth_gbps", bandwidth_gbps},
              {"reconfig_time_s", reconfig_time_s},
              {"dma_burst_words", dma_burst_words},
              {"dma_latency_cycles", dma_latency_cycles},
              {"alpha_random", alpha_random},
              {"max_dma_ports", max_dma_ports}};
  json geo = json::array();
  for (const auto &g : bram_geometries)
    geo.push_back({g.width, g.depth});
  doc["bram_geometries"] = geo;
  doc["uram_geometry"] = {uram_geometry.width, uram_geometry.depth};
  return doc.dump(2);
}

} // namespace sdse
