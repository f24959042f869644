/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sdse {

/// Base class of every error raised by the toolflow.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or schema-violating input document.
class ParseError : public Error {
public:
  using Error::Error;
};

class CycleError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

enum class OpKind { Conv, Pool, Activation, Add, Concat, Upsample, GlobalPool, Split };

std::string_view to_string(OpKind kind);
std::optional<OpKind> parse_kind(std::string_view name);

using VertexId = std::size_t;

/// Tensor dims in channel-first order: {C, H, W} for 2D or {C, D, H, W} for 3D.
struct Shape {
  std::vector<int64_t> dims;

  int64_t channels() const { return dims.empty() ? 0 : dims.front(); }
  std::size_t spatial_rank() const { return dims.empty() ? 0 : dims.size() - 1; }
  int64_t spatial(std::size_t i) const { return dims.at(i + 1); }
  int64_t volume() const;
  /// Words in one spatial row across all channels (W * C).
  int64_t row_words() const { return dims.back() * channels(); }
  /// Words in one spatial plane across all channels (H * W * C); equals volume() in 2D.
  int64_t plane_words() const;

  bool operator==(const Shape &) const = default;
};

std::string to_string(const Shape &shape);

/// Kind-specific attributes. Spatial vectors are sized to the vertex's spatial rank
/// after parsing (scalars in the document are broadcast).
struct Attrs {
  std::vector<int> kernel;
  std::vector<int> stride;
  std::vector<std::pair<int, int>> pads;
  int64_t filters = 0;
  int groups = 1;
  std::vector<int> scale;
  std::string function;  // Activation: relu, sigmoid, swish, ...
  std::string mode;      // Pool: max/avg; Add: add/mul
};

struct Vertex {
  VertexId id = 0;
  std::string name;
  OpKind kind = OpKind::Activation;
  Attrs attrs;
  /// One entry per input slot, dense from 0.
  std::vector<Shape> input_shapes;
  Shape output_shape;
  /// True for Split vertices inserted by the parser to give every edge a single consumer.
  bool synthetic = false;

  int64_t input_words() const;
  int64_t output_words() const { return output_shape.volume(); }
};

struct Edge {
  VertexId src = 0;
  VertexId dst = 0;
  int dst_slot = 0;
  int64_t words = 0;
  int word_length = 8;
};

using EdgeId = std::size_t;
using Path = std::vector<VertexId>;

/// Immutable CNN compute DAG. Vertex ids are dense indices assigned in natural
/// name order, so every id-based tie-break is independent of document order.
class ModelGraph {
public:
  const std::string &name() const { return name_; }
  const std::vector<Vertex> &vertices() const { return vertices_; }
  const std::vector<Edge> &edges() const { return edges_; }
  const Vertex &vertex(VertexId id) const { return vertices_.at(id); }
  const Edge &edge(EdgeId id) const { return edges_.at(id); }
  std::size_t size() const { return vertices_.size(); }

  VertexId input() const { return input_; }
  const Shape &input_shape() const { return input_shape_; }
  int word_length() const { return word_length_; }

  std::optional<VertexId> find(std::string_view name) const;
  VertexId at(std::string_view name) const;

  /// Incoming edges of v ordered by slot.
  const std::vector<EdgeId> &in_edges(VertexId v) const { return in_.at(v); }
  const std::vector<EdgeId> &out_edges(VertexId v) const { return out_.at(v); }
  std::vector<VertexId> outputs() const;

  /// Vertices present in the source document (excludes parser-inserted splits).
  std::size_t layer_count() const;
  std::size_t count_kind(OpKind kind) const;

  friend ModelGraph parse_model(std::string_view text);

private:
  std::string name_;
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<EdgeId>> in_;
  std::vector<std::vector<EdgeId>> out_;
  VertexId input_ = 0;
  Shape input_shape_;
  int word_length_ = 8;
};

/// Parses and validates a graph document (JSON), inserting Split vertices and
/// propagating shapes.
ModelGraph parse_model(std::string_view text);
ModelGraph load_model(const std::string &path);

/// Direct predecessors of v.
std::set<VertexId> ancestors(const ModelGraph &g, VertexId v);

/// Every simple directed path from src to trg. Exponential in the worst case.
std::vector<Path> paths(const ModelGraph &g, VertexId src, VertexId trg);

/// Kahn order with ties broken by lowest vertex id.
std::vector<VertexId> topological_order(const ModelGraph &g);

/// Natural ordering of names ("Conv_2" < "Conv_10").
bool natural_less(std::string_view a, std::string_view b);

} // namespace sdse
