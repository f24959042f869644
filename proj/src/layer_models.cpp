/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/layer_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace sdse {

using json = nlohmann::json;

namespace {

class InvalidParallelism : public Error {
public:
  using Error::Error;
};

std::vector<int64_t> divisors(int64_t n) {
  std::vector<int64_t> small, large;
  for (int64_t d = 1; d * d <= n; ++d) {
    if (n % d == 0) {
      small.push_back(d);
      if (d != n / d)
        large.push_back(n / d);
    }
  }
  small.insert(small.end(), large.rbegin(), large.rend());
  return small;
}

int64_t kernel_volume(const Vertex &v) {
  return std::accumulate(v.attrs.kernel.begin(), v.attrs.kernel.end(), int64_t{1}, std::multiplies<>());
}

int64_t out_spatial(const Vertex &v) { return v.output_shape.volume() / v.output_shape.channels(); }

/// Words the sliding window must buffer before producing its first output.
double line_buffer_fill(const Vertex &v) {
  const Shape &in = v.input_shapes.front();
  const auto &k = v.attrs.kernel;
  const int64_t c = in.channels();
  if (in.spatial_rank() == 3) {
    const int64_t h = in.spatial(1), w = in.spatial(2);
    return static_cast<double>(((k[0] - 1) * h * w + (k[1] - 1) * w + k[2]) * c);
  }
  const int64_t w = in.spatial(in.spatial_rank() - 1);
  return static_cast<double>(((k[0] - 1) * w + k.back()) * c);
}

int64_t parallelism_bound(const Vertex &v) {
  switch (v.kind) {
  case OpKind::Conv:
    return kernel_volume(v) * (v.input_shapes.front().channels() / v.attrs.groups) * v.attrs.filters;
  case OpKind::Concat: {
    int64_t g = 0;
    for (const auto &s : v.input_shapes)
      g = std::gcd(g, s.channels());
    return g;
  }
  default:
    return v.input_shapes.front().channels();
  }
}

} // namespace

ResourceVector &ResourceVector::operator+=(const ResourceVector &o) {
  dsp += o.dsp;
  lut += o.lut;
  ff += o.ff;
  bram18k += o.bram18k;
  uram += o.uram;
  return *this;
}

ResourceVector ResourceVector::operator*(int64_t k) const { return {dsp * k, lut * k, ff * k, bram18k * k, uram * k}; }

bool ResourceVector::fits_in(const ResourceVector &c) const {
  return dsp <= c.dsp && lut <= c.lut && ff <= c.ff && bram18k <= c.bram18k && uram <= c.uram;
}

CostTable CostTable::defaults() {
  CostTable t;
  t.kinds[OpKind::Conv] = {1.0, 900, 95, 1200, 130};
  t.kinds[OpKind::Pool] = {0.0, 400, 40, 500, 60};
  t.kinds[OpKind::Activation] = {0.0, 60, 12, 80, 16};
  t.kinds[OpKind::Add] = {0.0, 120, 20, 150, 24};
  t.kinds[OpKind::Concat] = {0.0, 150, 10, 180, 12};
  t.kinds[OpKind::Upsample] = {0.0, 200, 18, 260, 20};
  t.kinds[OpKind::GlobalPool] = {0.0, 300, 40, 400, 48};
  t.kinds[OpKind::Split] = {0.0, 40, 6, 60, 8};
  t.rle = {350, 420};
  t.huffman = {1400, 1100};
  return t;
}

CostTable CostTable::from_json(const std::string &text) {
  CostTable t = defaults();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("cost table: invalid JSON: ") + e.what());
  }
  if (doc.contains("kinds")) {
    for (const auto &[name, c] : doc.at("kinds").items()) {
      auto kind = parse_kind(name);
      if (!kind)
        throw ParseError("cost table: unknown kind '" + name + "'");
      KindCost &k = t.kinds[*kind];
      k.dsp_per_p = c.value("dsp_per_p", k.dsp_per_p);
      k.lut_base = c.value("lut_base", k.lut_base);
      k.lut_per_p = c.value("lut_per_p", k.lut_per_p);
      k.ff_base = c.value("ff_base", k.ff_base);
      k.ff_per_p = c.value("ff_per_p", k.ff_per_p);
    }
  }
  if (doc.contains("codec")) {
    const json &c = doc.at("codec");
    if (c.contains("rle"))
      t.rle = {c["rle"].value("lut", t.rle.lut), c["rle"].value("ff", t.rle.ff)};
    if (c.contains("huffman"))
      t.huffman = {c["huffman"].value("lut", t.huffman.lut), c["huffman"].value("ff", t.huffman.ff)};
  }
  t.lutram_bits_per_lut = doc.value("lutram_bits_per_lut", t.lutram_bits_per_lut);
  return t;
}

CostTable CostTable::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open cost table '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string CostTable::to_json() const {
  json doc;
  for (const auto &[kind, c] : kinds)
    doc["kinds"][std::string(to_string(kind))] = {{"dsp_per_p", c.dsp_per_p}, {"lut_base", c.lut_base},
                                                  {"lut_per_p", c.lut_per_p}, {"ff_base", c.ff_base},
                                                  {"ff_per_p", c.ff_per_p}};
  doc["codec"]["rle"] = {{"lut", rle.lut}, {"ff", rle.ff}};
  doc["codec"]["huffman"] = {{"lut", huffman.lut}, {"ff", huffman.ff}};
  doc["lutram_bits_per_lut"] = lutram_bits_per_lut;
  return doc.dump(2);
}

std::vector<int64_t> parallelism_options(const Vertex &v) { return divisors(parallelism_bound(v)); }

bool is_valid_parallelism(const Vertex &v, int64_t p) { return p >= 1 && parallelism_bound(v) % p == 0; }

int64_t macs(const Vertex &v) {
  switch (v.kind) {
  case OpKind::Conv:
    return kernel_volume(v) * (v.input_shapes.front().channels() / v.attrs.groups) * v.attrs.filters * out_spatial(v);
  case OpKind::Pool:
    return kernel_volume(v) * v.output_shape.volume();
  default:
    return 0;
  }
}

bool has_weights(const Vertex &v) { return v.kind == OpKind::Conv; }

int64_t weight_volume(const Vertex &v) {
  if (!has_weights(v))
    throw Error("vertex '" + v.name + "' (" + std::string(to_string(v.kind)) + ") has no weights");
  return kernel_volume(v) * (v.input_shapes.front().channels() / v.attrs.groups) * v.attrs.filters;
}

VertexPerf vertex_perf(const Vertex &v, int64_t p) {
  if (!is_valid_parallelism(v, p))
    throw InvalidParallelism("vertex '" + v.name + "': parallelism " + std::to_string(p) + " is not a divisor of " +
                             std::to_string(parallelism_bound(v)));
  VertexPerf perf;
  perf.sigma_in = static_cast<double>(v.input_words());
  perf.sigma_out = static_cast<double>(v.output_words());
  const double lanes = static_cast<double>(p);
  // Each of the p streams moves at most one word per cycle.
  double work = std::max(perf.sigma_in, perf.sigma_out);
  switch (v.kind) {
  case OpKind::Conv:
  case OpKind::Pool:
    work = std::max(work, static_cast<double>(macs(v)));
    perf.rho = line_buffer_fill(v);
    break;
  case OpKind::GlobalPool:
    perf.rho = perf.sigma_in;
    break;
  case OpKind::Add:
    work = perf.sigma_out;
    perf.rho = 1;
    break;
  default:
    perf.rho = 1;
    break;
  }
  perf.rho = std::min(perf.rho, perf.sigma_in);
  perf.lambda = work / lanes;
  perf.r_in = perf.sigma_in / perf.lambda;
  perf.r_out = perf.sigma_out / perf.lambda;
  return perf;
}

ResourceVector vertex_resources(const Vertex &v, int64_t p, int word_length, const CostTable &costs) {
  const KindCost &c = costs.kinds.at(v.kind);
  const double width = word_length / 8.0;
  const double dsp_lanes = word_length <= 16 ? 1.0 : 4.0;
  ResourceVector r;
  double dsp_per_p = c.dsp_per_p;
  if (v.kind == OpKind::Add && v.attrs.mode == "mul")
    dsp_per_p = std::max(dsp_per_p, 1.0);
  r.dsp = static_cast<int64_t>(std::ceil(dsp_per_p * dsp_lanes * p));
  r.lut = static_cast<int64_t>(std::ceil(c.lut_base + c.lut_per_p * width * p));
  r.ff = static_cast<int64_t>(std::ceil(c.ff_base + c.ff_per_p * width * p));
  return r;
}

} // namespace sdse
