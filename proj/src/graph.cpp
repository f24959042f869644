/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace sdse {

using json = nlohmann::json;

namespace {

constexpr std::pair<OpKind, std::string_view> kKindNames[] = {
    {OpKind::Conv, "Conv"},         {OpKind::Pool, "Pool"},
    {OpKind::Activation, "Relu"},   {OpKind::Add, "Add"},
    {OpKind::Concat, "Concat"},     {OpKind::Upsample, "Upsample"},
    {OpKind::GlobalPool, "GlobalPool"}, {OpKind::Split, "Split"},
};

struct RawVertex {
  std::string name;
  OpKind kind;
  json attrs;
  bool synthetic = false;
};

struct RawEdge {
  std::string src;
  std::string dst;
  int slot;
};

template <typename T>
T require(const json &obj, const char *key, const std::string &where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception &) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

/// Reads a scalar-or-array integer attribute and broadcasts it to `rank` entries.
std::vector<int> spatial_attr(const json &attrs, const char *key, std::size_t rank, std::optional<int> fallback,
                              const std::string &where) {
  if (!attrs.contains(key)) {
    if (!fallback)
      throw ParseError(where + ": missing attribute '" + key + "'");
    return std::vector<int>(rank, *fallback);
  }
  const json &v = attrs.at(key);
  if (v.is_number_integer())
    return std::vector<int>(rank, v.get<int>());
  if (v.is_array() && v.size() == rank) {
    std::vector<int> out;
    for (const auto &x : v) {
      if (!x.is_number_integer())
        throw ParseError(where + ": attribute '" + key + "' must hold integers");
      out.push_back(x.get<int>());
    }
    return out;
  }
  throw ParseError(where + ": attribute '" + key + "' must be an integer or an array of " + std::to_string(rank));
}

std::vector<std::pair<int, int>> pad_attr(const json &attrs, std::size_t rank, const std::string &where) {
  if (attrs.contains("pads")) {
    const json &p = attrs.at("pads");
    if (!p.is_array() || p.size() != rank)
      throw ParseError(where + ": 'pads' must list [begin, end] per spatial dim");
    std::vector<std::pair<int, int>> out;
    for (const auto &pr : p) {
      if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() || !pr[1].is_number_integer())
        throw ParseError(where + ": 'pads' entries must be [begin, end]");
      out.emplace_back(pr[0].get<int>(), pr[1].get<int>());
    }
    return out;
  }
  auto sym = spatial_attr(attrs, "pad", rank, 0, where);
  std::vector<std::pair<int, int>> out;
  for (int p : sym)
    out.emplace_back(p, p);
  return out;
}

Attrs normalize_attrs(OpKind kind, const json &raw, std::size_t rank, const std::string &where) {
  Attrs a;
  switch (kind) {
  case OpKind::Conv:
    a.kernel = spatial_attr(raw, "kernel", rank, std::nullopt, where);
    a.stride = spatial_attr(raw, "stride", rank, 1, where);
    a.pads = pad_attr(raw, rank, where);
    if (!raw.contains("filters"))
      throw ParseError(where + ": Conv requires 'filters'");
    a.filters = raw.at("filters").get<int64_t>();
    a.groups = raw.value("groups", 1);
    break;
  case OpKind::Pool: {
    a.kernel = spatial_attr(raw, "kernel", rank, std::nullopt, where);
    a.stride = raw.contains("stride") ? spatial_attr(raw, "stride", rank, 1, where) : a.kernel;
    a.pads = pad_attr(raw, rank, where);
    a.mode = raw.value("mode", std::string("max"));
    break;
  }
  case OpKind::Activation:
    a.function = raw.value("function", std::string("relu"));
    break;
  case OpKind::Add:
    a.mode = raw.value("mode", std::string("add"));
    if (a.mode != "add" && a.mode != "mul")
      throw ParseError(where + ": Add mode must be 'add' or 'mul'");
    break;
  case OpKind::Upsample:
    a.scale = spatial_attr(raw, "scale", rank, 2, where);
    break;
  case OpKind::GlobalPool:
    a.mode = raw.value("mode", std::string("avg"));
    break;
  case OpKind::Concat:
  case OpKind::Split:
    break;
  }
  for (int k : a.kernel)
    if (k <= 0)
      throw ShapeError(where + ": kernel sizes must be positive");
  for (int s : a.stride)
    if (s <= 0)
      throw ShapeError(where + ": strides must be positive");
  for (int s : a.scale)
    if (s <= 0)
      throw ShapeError(where + ": scale must be positive");
  return a;
}

int64_t window_out(int64_t in, int k, int s, std::pair<int, int> pad) {
  return (in + pad.first + pad.second - k) / s + 1;
}

Shape infer_shape(const Vertex &v) {
  const std::string where = "vertex '" + v.name + "'";
  const auto &in = v.input_shapes;
  auto expect_slots = [&](std::size_t n) {
    if (in.size() != n)
      throw ShapeError(where + ": expected " + std::to_string(n) + " input(s), got " + std::to_string(in.size()));
  };
  switch (v.kind) {
  case OpKind::Conv:
  case OpKind::Pool: {
    expect_slots(1);
    Shape out;
    int64_t channels = in[0].channels();
    if (v.kind == OpKind::Conv) {
      const auto &a = v.attrs;
      if (a.filters <= 0)
        throw ShapeError(where + ": filters must be positive");
      if (a.groups <= 0 || channels % a.groups != 0 || a.filters % a.groups != 0)
        throw ShapeError(where + ": groups must divide input channels and filters");
      channels = a.filters;
    }
    out.dims.push_back(channels);
    for (std::size_t i = 0; i < in[0].spatial_rank(); ++i) {
      int64_t o = window_out(in[0].spatial(i), v.attrs.kernel[i], v.attrs.stride[i], v.attrs.pads[i]);
      if (o <= 0)
        throw ShapeError(where + ": kernel larger than padded input " + to_string(in[0]));
      out.dims.push_back(o);
    }
    return out;
  }
  case OpKind::Activation:
  case OpKind::Split:
    expect_slots(1);
    return in[0];
  case OpKind::Add: {
    if (in.size() < 2)
      throw ShapeError(where + ": Add needs at least two inputs");
    for (std::size_t s = 1; s < in.size(); ++s) {
      bool broadcast = v.attrs.mode == "mul" && in[s].channels() == in[0].channels() &&
                       in[s].volume() == in[s].channels() && in[s].dims.size() == in[0].dims.size();
      if (!(in[s] == in[0]) && !broadcast)
        throw ShapeError(where + ": input shapes " + to_string(in[0]) + " and " + to_string(in[s]) + " differ");
    }
    return in[0];
  }
  case OpKind::Concat: {
    if (in.size() < 2)
      throw ShapeError(where + ": Concat needs at least two inputs");
    Shape out = in[0];
    for (std::size_t s = 1; s < in.size(); ++s) {
      if (in[s].dims.size() != in[0].dims.size() ||
          !std::equal(in[s].dims.begin() + 1, in[s].dims.end(), in[0].dims.begin() + 1))
        throw ShapeError(where + ": spatial dims of " + to_string(in[s]) + " and " + to_string(in[0]) + " differ");
      out.dims[0] += in[s].channels();
    }
    return out;
  }
  case OpKind::Upsample: {
    expect_slots(1);
    Shape out = in[0];
    for (std::size_t i = 0; i < out.spatial_rank(); ++i)
      out.dims[i + 1] *= v.attrs.scale[i];
    return out;
  }
  case OpKind::GlobalPool: {
    expect_slots(1);
    Shape out = in[0];
    std::fill(out.dims.begin() + 1, out.dims.end(), 1);
    return out;
  }
  }
  throw ShapeError(where + ": unknown kind");
}

} // namespace

std::string_view to_string(OpKind kind) {
  for (const auto &[k, n] : kKindNames)
    if (k == kind)
      return n;
  return "?";
}

std::optional<OpKind> parse_kind(std::string_view name) {
  for (const auto &[k, n] : kKindNames)
    if (n == name)
      return k;
  if (name == "Activation")
    return OpKind::Activation;
  return std::nullopt;
}

int64_t Shape::volume() const {
  if (dims.empty())
    return 0;
  return std::accumulate(dims.begin(), dims.end(), int64_t{1}, std::multiplies<>());
}

int64_t Shape::plane_words() const {
  if (dims.size() < 3)
    return volume();
  return dims[dims.size() - 1] * dims[dims.size() - 2] * channels();
}

std::string to_string(const Shape &shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.dims.size(); ++i)
    os << (i ? "x" : "") << shape.dims[i];
  return os.str();
}

int64_t Vertex::input_words() const {
  int64_t total = 0;
  for (const auto &s : input_shapes)
    total += s.volume();
  return total;
}

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2])))
        ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2])))
        ++j2;
      auto da = a.substr(i, i2 - i), db = b.substr(j, j2 - j);
      while (da.size() > 1 && da.front() == '0')
        da.remove_prefix(1);
      while (db.size() > 1 && db.front() == '0')
        db.remove_prefix(1);
      if (da.size() != db.size())
        return da.size() < db.size();
      if (da != db)
        return da < db;
      i = i2;
      j = j2;
    } else {
      if (a[i] != b[j])
        return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if (a.size() - i != b.size() - j)
    return a.size() - i < b.size() - j;
  return a < b;
}

std::optional<VertexId> ModelGraph::find(std::string_view name) const {
  auto it = std::lower_bound(vertices_.begin(), vertices_.end(), name,
                             [](const Vertex &v, std::string_view n) { return natural_less(v.name, n); });
  if (it != vertices_.end() && it->name == name)
    return it->id;
  return std::nullopt;
}

VertexId ModelGraph::at(std::string_view name) const {
  if (auto id = find(name))
    return *id;
  throw Error("vertex '" + std::string(name) + "' not in graph '" + name_ + "'");
}

std::vector<VertexId> ModelGraph::outputs() const {
  std::vector<VertexId> out;
  for (const auto &v : vertices_)
    if (out_[v.id].empty())
      out.push_back(v.id);
  return out;
}

std::size_t ModelGraph::layer_count() const {
  return std::count_if(vertices_.begin(), vertices_.end(), [](const Vertex &v) { return !v.synthetic; });
}

std::size_t ModelGraph::count_kind(OpKind kind) const {
  return std::count_if(vertices_.begin(), vertices_.end(),
                       [&](const Vertex &v) { return v.kind == kind && !v.synthetic; });
}

ModelGraph parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object())
    throw ParseError("document must be a JSON object");

  ModelGraph g;
  g.name_ = require<std::string>(doc, "name", "document");
  const json &input = doc.contains("input") ? doc.at("input") : throw ParseError("document: missing field 'input'");
  const auto input_name = require<std::string>(input, "id", "input");
  g.input_shape_.dims = require<std::vector<int64_t>>(input, "shape", "input");
  g.word_length_ = require<int>(input, "word_length", "input");
  if (g.input_shape_.dims.size() != 3 && g.input_shape_.dims.size() != 4)
    throw ParseError("input: shape must be [C,H,W] or [C,D,H,W]");
  for (auto d : g.input_shape_.dims)
    if (d <= 0)
      throw ParseError("input: shape dims must be positive");
  if (g.word_length_ != 8 && g.word_length_ != 16 && g.word_length_ != 32)
    throw ParseError("input: word_length must be 8, 16 or 32");

  if (!doc.contains("vertices") || !doc.at("vertices").is_array())
    throw ParseError("document: 'vertices' must be an array");
  if (!doc.contains("edges") || !doc.at("edges").is_array())
    throw ParseError("document: 'edges' must be an array");

  std::map<std::string, RawVertex> raw;
  for (const auto &jv : doc.at("vertices")) {
    auto name = require<std::string>(jv, "id", "vertex");
    auto kind_name = require<std::string>(jv, "kind", "vertex '" + name + "'");
    auto kind = parse_kind(kind_name);
    if (!kind)
      throw ParseError("vertex '" + name + "': unsupported kind '" + kind_name + "'");
    json attrs = jv.value("attrs", json::object());
    if (!attrs.is_object())
      throw ParseError("vertex '" + name + "': 'attrs' must be an object");
    if (!raw.emplace(name, RawVertex{name, *kind, attrs}).second)
      throw ParseError("vertex '" + name + "': duplicate id");
  }
  if (!raw.count(input_name))
    throw ParseError("input: id '" + input_name + "' is not a vertex");

  std::vector<RawEdge> edges;
  for (const auto &je : doc.at("edges")) {
    RawEdge e{require<std::string>(je, "src", "edge"), require<std::string>(je, "dst", "edge"),
              require<int>(je, "dst_slot", "edge")};
    const std::string where = "edge " + e.src + "->" + e.dst;
    if (!raw.count(e.src) || !raw.count(e.dst))
      throw ParseError(where + ": unknown endpoint");
    if (e.dst == input_name)
      throw ParseError(where + ": the input vertex cannot have incoming edges");
    if (e.slot < 0)
      throw ParseError(where + ": negative slot");
    edges.push_back(e);
  }

  // Dense slots per consumer.
  std::map<std::string, std::vector<int>> slots;
  for (const auto &e : edges)
    slots[e.dst].push_back(e.slot);
  for (auto &[name, s] : slots) {
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] != static_cast<int>(i))
        throw ParseError("vertex '" + name + "': input slots must be dense from 0 without duplicates");
  }
  for (const auto &[name, v] : raw)
    if (name != input_name && !slots.count(name))
      throw ParseError("vertex '" + name + "': no incoming edge");

  // Give every tensor a single consumer.
  std::map<std::string, std::vector<std::size_t>> fanout;
  for (std::size_t i = 0; i < edges.size(); ++i)
    fanout[edges[i].src].push_back(i);
  for (auto &[src, idx] : fanout) {
    if (idx.size() < 2 || raw.at(src).kind == OpKind::Split)
      continue;
    std::string split = src + "__split";
    while (raw.count(split))
      split += "_";
    raw.emplace(split, RawVertex{split, OpKind::Split, json::object(), true});
    for (auto i : idx)
      edges[i].src = split;
    edges.push_back({src, split, 0});
  }

  std::vector<RawVertex> ordered;
  for (auto &[name, v] : raw)
    ordered.push_back(std::move(v));
  std::sort(ordered.begin(), ordered.end(),
            [](const RawVertex &a, const RawVertex &b) { return natural_less(a.name, b.name); });
  std::map<std::string, VertexId> ids;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    ids[ordered[i].name] = i;
    Vertex v;
    v.id = i;
    v.name = ordered[i].name;
    v.kind = ordered[i].kind;
    v.synthetic = ordered[i].synthetic;
    g.vertices_.push_back(std::move(v));
  }
  g.input_ = ids.at(input_name);
  g.in_.assign(g.size(), {});
  g.out_.assign(g.size(), {});
  std::sort(edges.begin(), edges.end(), [&](const RawEdge &a, const RawEdge &b) {
    return std::tuple(ids.at(a.dst), a.slot, ids.at(a.src)) < std::tuple(ids.at(b.dst), b.slot, ids.at(b.src));
  });
  for (const auto &e : edges) {
    Edge edge{ids.at(e.src), ids.at(e.dst), e.slot, 0, g.word_length_};
    g.in_[edge.dst].push_back(g.edges_.size());
    g.out_[edge.src].push_back(g.edges_.size());
    g.edges_.push_back(edge);
  }
  for (auto &out : g.out_)
    std::sort(out.begin(), out.end(), [&](EdgeId a, EdgeId b) { return g.edges_[a].dst < g.edges_[b].dst; });

  auto order = topological_order(g);

  for (VertexId id : order) {
    Vertex &v = g.vertices_[id];
    const std::string where = "vertex '" + v.name + "'";
    if (id == g.input_) {
      v.input_shapes = {g.input_shape_};
    } else {
      for (EdgeId e : g.in_[id])
        v.input_shapes.push_back(g.vertices_[g.edges_[e].src].output_shape);
    }
    const std::size_t rank = v.input_shapes.front().spatial_rank();
    for (const auto &s : v.input_shapes)
      if (s.spatial_rank() != rank)
        throw ShapeError(where + ": inputs mix 2D and 3D tensors");
    v.attrs = normalize_attrs(v.kind, ordered[id].attrs, rank, where);
    v.output_shape = infer_shape(v);
  }
  for (auto &e : g.edges_)
    e.words = g.vertices_[e.src].output_shape.volume();
  if (g.outputs().empty())
    throw ParseError("graph has no output vertex");
  return g;
}

ModelGraph load_model(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::set<VertexId> ancestors(const ModelGraph &g, VertexId v) {
  std::set<VertexId> out;
  for (EdgeId e : g.in_edges(v))
    out.insert(g.edge(e).src);
  return out;
}

std::vector<Path> paths(const ModelGraph &g, VertexId src, VertexId trg) {
  if (src >= g.size() || trg >= g.size())
    throw Error("paths: vertex not in graph");
  std::vector<Path> result;
  Path current{src};
  std::vector<bool> on_path(g.size(), false);
  on_path[src] = true;
  std::function<void(VertexId)> walk = [&](VertexId v) {
    if (v == trg) {
      result.push_back(current);
      return;
    }
    for (EdgeId e : g.out_edges(v)) {
      VertexId next = g.edge(e).dst;
      if (on_path[next])
        continue;
      on_path[next] = true;
      current.push_back(next);
      walk(next);
      current.pop_back();
      on_path[next] = false;
    }
  };
  walk(src);
  return result;
}

std::vector<VertexId> topological_order(const ModelGraph &g) {
  std::vector<std::size_t> indegree(g.size(), 0);
  for (const auto &e : g.edges())
    ++indegree[e.dst];
  std::priority_queue<VertexId, std::vector<VertexId>, std::greater<>> ready;
  for (VertexId v = 0; v < g.size(); ++v)
    if (indegree[v] == 0)
      ready.push(v);
  std::vector<VertexId> order;
  order.reserve(g.size());
  while (!ready.empty()) {
    VertexId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (EdgeId e : g.out_edges(v))
      if (--indegree[g.edge(e).dst] == 0)
        ready.push(g.edge(e).dst);
  }
  if (order.size() != g.size()) {
    for (VertexId v = 0; v < g.size(); ++v)
      if (indegree[v] > 0)
        throw CycleError("cycle detected through vertex '" + g.vertex(v).name + "'");
  }
  return order;
}

} // namespace sdse
