/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>
#include <queue>
#include <tuple>

namespace sdse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// A group of words moved together. Word j (1-based) of the token left its
// producer at t_start + j * (t_end - t_start) / words.
struct Token {
  int64_t words = 0;
  double t_start = 0;
  double t_end = 0;
  int frame = 0;
};

struct Channel {
  int64_t depth = 0;
  std::deque<Token> q;
  int64_t occ = 0;
  int64_t max_occ = 0;
  int producer = -1;
  int consumer = -1;
  EdgeId edge = kNoEdge;
  bool waiting = false;
  int64_t pushed = 0;
  int64_t popped = 0;

  bool can_accept(int64_t n) const { return occ == 0 || occ + n <= depth; }
};

constexpr int64_t kTokenRamp = 32;

enum class NodeKind { Vertex, Source, Writer, Reader };

struct VertexNode {
  VertexId id = 0;
  VertexPerf perf;
  bool split = false;
  double slow = 1.0;
  std::vector<int> in_ch;
  std::vector<int64_t> in_words;
  std::vector<int64_t> quota;
  std::vector<int> out_ch;
  int64_t sigma_in = 0;
  int64_t sigma_out = 0;
  int64_t hold = 0;

  // consumption
  int fi = 0;
  std::vector<int64_t> cs;
  int64_t ctotal = 0;
  bool filled = false;
  std::vector<double> slot_fill;
  double frame_ready = 0;
  double next_consume = 0;
  std::vector<double> t_fill;

  // emission
  int fo = 0;
  bool emitting = false;
  double last_emit = 0;
  int64_t emitted = 0;
  std::vector<double> end_emit;

  bool blocked = false;
  double block_since = 0;
  double backpressure = 0;
  double stall = 0;
  double stall_mark = 0;
};

struct SourceNode {
  int out = -1;
  int64_t words = 0;
  double rate = 1.0;
  int frame = 0;
  int64_t done = 0;
  double last = 0;
};

struct DramEntry {
  Token token;
  double ready;
};

struct Interval {
  double start, end;
};

struct DmaStream {
  int port = 0;
  double demand = 0;
  double share = 0;
  std::vector<Interval> busy;
};

struct LinkNode {
  int in = -1;           // write FIFO (writer) or -1
  int out = -1;          // read FIFO (reader) or -1
  int peer = -1;         // node index of the other half
  std::size_t link = 0;  // index into evicted config / dram queues
  int stream = -1;
  bool busy = false;
  double busy_until = 0;
  Token in_flight;
};

class Simulation {
public:
  explicit Simulation(const SimConfig &cfg) : cfg_(cfg), g_(*cfg.graph) { build(); }

  SimReport run();

private:
  const SimConfig &cfg_;
  const ModelGraph &g_;
  Members in_;
  int64_t tokw_ = 1;

  std::vector<Channel> ch_;
  std::vector<std::pair<NodeKind, std::size_t>> nodes_;
  std::vector<VertexNode> vx_;
  std::vector<std::size_t> splits_;
  std::vector<SourceNode> src_;
  std::vector<LinkNode> links_;
  std::vector<std::deque<DramEntry>> dram_;
  std::vector<DmaStream> streams_;
  std::vector<double> port_capacity_;
  std::vector<double> port_reserved_;

  using Event = std::tuple<double, int>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::vector<double> next_wake_;
  double now_ = 0;
  std::vector<WaveEvent> wave_;

  void build();
  int add_node(NodeKind kind, std::size_t idx);
  int add_channel(int64_t depth, EdgeId edge);

  void schedule(int node, double t) {
    if (t < next_wake_[node]) {
      next_wake_[node] = t;
      queue_.emplace(t, node);
    }
  }

  // Tokens start at one word each frame and grow to tokw_, so the words that
  // decide fill times travel in small tokens.
  int64_t token_size(int64_t total, int64_t done) const {
    return std::min(total - done, std::clamp<int64_t>(done / kTokenRamp, 1, tokw_));
  }

  void push(int c, const Token &t);
  Token pop(int c);
  void set_waiting(int c, bool value);
  void set_blocked(VertexNode &v, bool value);
  void touch(VertexNode &v);
  void touch_splits();
  bool held_by_join(int c) const;
  void wave(VertexId v, std::string event) {
    if (cfg_.record_waveform)
      wave_.push_back({now_, g_.vertex(v).name, std::move(event)});
  }

  double frame_ratio(std::size_t link, int frame) const;

  void handle(int node);
  void handle_vertex(VertexNode &v, int node);
  void handle_source(SourceNode &s, int node);
  void handle_writer(LinkNode &l, int node);
  void handle_reader(LinkNode &l, int node);
};

int Simulation::add_node(NodeKind kind, std::size_t idx) {
  nodes_.emplace_back(kind, idx);
  return static_cast<int>(nodes_.size()) - 1;
}

int Simulation::add_channel(int64_t depth, EdgeId edge) {
  Channel c;
  c.depth = depth;
  c.edge = edge;
  ch_.push_back(std::move(c));
  return static_cast<int>(ch_.size()) - 1;
}

double Simulation::frame_ratio(std::size_t link, int frame) const {
  const auto &ev = cfg_.evicted[link];
  const double base = ev.ratio_trace.empty() ? ev.c_bar : ev.ratio_trace[frame % ev.ratio_trace.size()];
  return base * cfg_.ratio_multiplier;
}

void Simulation::build() {
  if (!cfg_.graph)
    throw SimConfigError("simulation needs a graph");
  if (cfg_.frames < 1)
    throw SimConfigError("frames must be >= 1");
  if (cfg_.parallelism.size() != g_.size())
    throw SimConfigError("parallelism vector does not match the graph");
  if (!cfg_.fifo_depth.empty() && cfg_.fifo_depth.size() != g_.edges().size())
    throw SimConfigError("fifo depth vector does not match the graph");
  if (cfg_.default_fifo_depth < 1)
    throw SimConfigError("FIFO depths must be >= 1");

  std::vector<VertexId> members = cfg_.members;
  if (members.empty())
    for (const auto &v : g_.vertices())
      members.push_back(v.id);
  std::sort(members.begin(), members.end());
  in_ = members_mask(g_, members);

  std::vector<int> evicted_link(g_.edges().size(), -1);
  for (std::size_t i = 0; i < cfg_.evicted.size(); ++i) {
    EdgeId e = cfg_.evicted[i].edge;
    if (e >= g_.edges().size() || !in_[g_.edge(e).src] || !in_[g_.edge(e).dst])
      throw SimConfigError("evicted edge is not inside the simulated subgraph");
    if (evicted_link[e] >= 0)
      throw SimConfigError("edge evicted twice");
    if (!(cfg_.evicted[i].c_bar > 0) || cfg_.evicted[i].alpha < 1.0)
      throw SimConfigError("evicted edge needs c_bar > 0 and alpha >= 1");
    evicted_link[e] = static_cast<int>(i);
  }
  if (!cfg_.evicted.empty() && (!(cfg_.dma.bandwidth_words > 0) || cfg_.dma.ports < 1))
    throw SimConfigError("evicted edges need DMA bandwidth and at least one port");

  // Token granularity.
  int64_t total_words = 0;
  for (VertexId v : members) {
    total_words += g_.vertex(v).output_words();
    total_words += g_.vertex(v).input_words();
  }
  tokw_ = cfg_.token_words > 0 ? cfg_.token_words
                               : std::max<int64_t>(1, (total_words * cfg_.frames + cfg_.max_tokens - 1) /
                                                          std::max<int64_t>(1, cfg_.max_tokens));

  auto depth_of = [&](EdgeId e) {
    int64_t d = cfg_.fifo_depth.empty() ? 0 : cfg_.fifo_depth[e];
    return d > 0 ? d : cfg_.default_fifo_depth;
  };

  // Vertex nodes first so that their indices follow vertex ids.
  std::vector<int> node_of(g_.size(), -1);
  for (VertexId id : members) {
    const Vertex &v = g_.vertex(id);
    VertexNode n;
    n.id = id;
    n.perf = vertex_perf(v, cfg_.parallelism[id]);
    n.split = v.kind == OpKind::Split;
    n.sigma_in = v.input_words();
    n.sigma_out = v.output_words();
    if (n.split)
      splits_.push_back(vx_.size());
    vx_.push_back(std::move(n));
    node_of[id] = add_node(NodeKind::Vertex, vx_.size() - 1);
  }

  // DMA streams: reserved traffic first, then write/read pairs per evicted edge.
  const int ports = std::max(1, cfg_.dma.ports);
  port_capacity_.assign(ports, cfg_.dma.bandwidth_words / ports);
  port_reserved_.assign(ports, 0.0);
  std::vector<double> port_demand(ports, 0.0);
  int next_stream = 0;
  for (const auto &r : cfg_.reserved) {
    int p = next_stream++ % ports;
    port_demand[p] += r.demand;
    port_reserved_[p] += r.demand;
  }
  for (const auto &ev : cfg_.evicted) {
    const double rate = emission_rate(vertex_perf(g_.vertex(g_.edge(ev.edge).src),
                                                  cfg_.parallelism[g_.edge(ev.edge).src]));
    for (double demand : {rate * ev.c_bar, rate * ev.c_bar * ev.alpha}) {
      DmaStream s;
      s.port = next_stream++ % ports;
      s.demand = demand;
      port_demand[s.port] += demand;
      streams_.push_back(s);
    }
  }
  // Ports time-multiplex their streams but draw on one pooled budget.
  double total_demand = 0.0;
  for (double d : port_demand)
    total_demand += d;
  const double pool = cfg_.dma.bandwidth_words;
  for (auto &s : streams_)
    s.share = total_demand > 0 ? s.demand * pool / total_demand
                               : pool;
  if (pool > 0 && total_demand > pool)
    for (const auto &r : cfg_.reserved) {
      if (r.vertex == kNoVertex || node_of.at(r.vertex) < 0)
        continue;
      auto &slow = vx_[nodes_[node_of[r.vertex]].second].slow;
      slow = std::min(slow, pool / total_demand);
    }

  // Channels.
  for (auto &n : vx_) {
    const Vertex &v = g_.vertex(n.id);
    const int self = node_of[n.id];
    const std::size_t slots = std::max<std::size_t>(1, v.input_shapes.size());
    n.in_ch.assign(slots, -1);
    n.in_words.assign(slots, 0);
    for (std::size_t s = 0; s < slots; ++s)
      n.in_words[s] = v.input_shapes.at(s).volume();
    // External inputs come from ideal sources at the vertex's standard rate.
    std::vector<char> fed(slots, 0);
    for (EdgeId e : g_.in_edges(n.id))
      if (in_[g_.edge(e).src])
        fed[g_.edge(e).dst_slot] = 1;
    for (std::size_t s = 0; s < slots; ++s) {
      if (fed[s])
        continue;
      EdgeId edge = kNoEdge;
      for (EdgeId e : g_.in_edges(n.id))
        if (static_cast<std::size_t>(g_.edge(e).dst_slot) == s)
          edge = e;
      int c = add_channel(edge == kNoEdge ? cfg_.default_fifo_depth : depth_of(edge), edge);
      SourceNode src;
      src.out = c;
      src.words = n.in_words[s];
      src.rate = n.perf.r_in * static_cast<double>(n.in_words[s]) / static_cast<double>(n.sigma_in);
      src_.push_back(src);
      int sn = add_node(NodeKind::Source, src_.size() - 1);
      ch_[c].producer = sn;
      ch_[c].consumer = self;
      n.in_ch[s] = c;
    }
    n.quota.resize(slots);
    for (std::size_t s = 0; s < slots; ++s)
      n.quota[s] = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(
                                            n.perf.rho * static_cast<double>(n.in_words[s]) / n.sigma_in - 1e-9)));
    const int64_t fan_in = std::max<int64_t>(1, (n.sigma_in + n.sigma_out - 1) / n.sigma_out);
    n.hold = 2 * tokw_ * fan_in;
    n.cs.assign(slots, 0);
    n.slot_fill.assign(slots, 0.0);
  }
  for (EdgeId e = 0; e < g_.edges().size(); ++e) {
    const Edge &edge = g_.edge(e);
    if (!in_[edge.src] || !in_[edge.dst])
      continue;
    VertexNode &p = vx_[nodes_[node_of[edge.src]].second];
    VertexNode &q = vx_[nodes_[node_of[edge.dst]].second];
    if (evicted_link[e] < 0) {
      int c = add_channel(depth_of(e), e);
      ch_[c].producer = node_of[edge.src];
      ch_[c].consumer = node_of[edge.dst];
      p.out_ch.push_back(c);
      q.in_ch[edge.dst_slot] = c;
      continue;
    }
    const std::size_t li = static_cast<std::size_t>(evicted_link[e]);
    int wc = add_channel(cfg_.dma.burst_words, e);
    int rc = add_channel(cfg_.dma.burst_words, e);
    LinkNode w, r;
    w.in = wc;
    w.link = r.link = li;
    w.stream = static_cast<int>(2 * li);
    r.out = rc;
    r.stream = static_cast<int>(2 * li + 1);
    links_.push_back(w);
    int wn = add_node(NodeKind::Writer, links_.size() - 1);
    links_.push_back(r);
    int rn = add_node(NodeKind::Reader, links_.size() - 1);
    links_[nodes_[wn].second].peer = rn;
    links_[nodes_[rn].second].peer = wn;
    ch_[wc].producer = node_of[edge.src];
    ch_[wc].consumer = wn;
    ch_[rc].producer = rn;
    ch_[rc].consumer = node_of[edge.dst];
    p.out_ch.push_back(wc);
    q.in_ch[edge.dst_slot] = rc;
  }
  dram_.resize(cfg_.evicted.size());
  next_wake_.assign(nodes_.size(), kInf);
}

bool Simulation::held_by_join(int c) const {
  // Follow full channels through blocked vertices; the wait is circular when the
  // chain ends at a vertex starving on another input.
  for (std::size_t steps = 0; steps <= nodes_.size(); ++steps) {
    if (ch_[c].can_accept(tokw_))
      return false;
    const auto &[kind, idx] = nodes_[ch_[c].consumer];
    if (kind != NodeKind::Vertex)
      return false;
    const VertexNode &u = vx_[idx];
    if (!u.blocked) {
      for (int i : u.in_ch)
        if (i != c && ch_[i].waiting)
          return true;
      return false;
    }
    int next = -1;
    for (int o : u.out_ch)
      if (!ch_[o].can_accept(tokw_))
        next = o;
    if (next < 0)
      return false;
    c = next;
  }
  return false;
}

void Simulation::touch(VertexNode &v) {
  bool starving = false;
  bool held = false;
  for (int c : v.out_ch) {
    const auto &[kind, idx] = nodes_[ch_[c].consumer];
    starving = starving || (ch_[c].waiting && !(kind == NodeKind::Vertex && vx_[idx].blocked));
    held = held || held_by_join(c);
  }
  if (v.blocked && starving && held)
    v.stall += now_ - v.stall_mark;
  v.stall_mark = now_;
}

void Simulation::touch_splits() {
  for (std::size_t i : splits_)
    touch(vx_[i]);
}

void Simulation::set_waiting(int c, bool value) {
  Channel &ch = ch_[c];
  if (ch.waiting == value)
    return;
  touch_splits();
  ch.waiting = value;
}

void Simulation::set_blocked(VertexNode &v, bool value) {
  if (v.blocked == value)
    return;
  touch_splits();
  if (value) {
    v.block_since = now_;
    wave(v.id, "block");
  } else {
    v.backpressure += now_ - v.block_since;
  }
  v.blocked = value;
}

void Simulation::push(int c, const Token &t) {
  Channel &ch = ch_[c];
  ch.q.push_back(t);
  ch.occ += t.words;
  ch.pushed += t.words;
  ch.max_occ = std::max(ch.max_occ, ch.occ);
  set_waiting(c, false);
  schedule(ch.consumer, now_);
}

Token Simulation::pop(int c) {
  Channel &ch = ch_[c];
  Token t = ch.q.front();
  ch.q.pop_front();
  ch.occ -= t.words;
  ch.popped += t.words;
  schedule(ch.producer, now_);
  return t;
}

void Simulation::handle(int node) {
  auto [kind, idx] = nodes_[node];
  switch (kind) {
  case NodeKind::Vertex:
    handle_vertex(vx_[idx], node);
    break;
  case NodeKind::Source:
    handle_source(src_[idx], node);
    break;
  case NodeKind::Writer:
    handle_writer(links_[idx], node);
    break;
  case NodeKind::Reader:
    handle_reader(links_[idx], node);
    break;
  }
}

void Simulation::handle_vertex(VertexNode &v, int node) {
  const int frames = cfg_.frames;
  const double r_in = v.perf.r_in * v.slow;
  const double r_emit = emission_rate(v.perf) * v.slow;
  const std::size_t slots = v.in_ch.size();
  double next = kInf;

  bool progress = true;
  while (progress) {
    progress = false;

    // Consumption.
    while (v.fi < frames) {
      if (!v.filled) {
        // Fill: absorb words as they arrive until every slot reached its quota.
        for (std::size_t s = 0; s < slots; ++s) {
          Channel &c = ch_[v.in_ch[s]];
          while (v.cs[s] < v.quota[s] && !c.q.empty()) {
            Token t = pop(v.in_ch[s]);
            const int64_t before = v.cs[s];
            v.cs[s] += t.words;
            v.ctotal += t.words;
            progress = true;
            if (v.cs[s] >= v.quota[s]) {
              const double j = static_cast<double>(v.quota[s] - before);
              const double at = t.t_start + j * (t.t_end - t.t_start) / static_cast<double>(t.words);
              v.slot_fill[s] = std::max(at, v.frame_ready);
            }
          }
        }
        bool done = true;
        for (std::size_t s = 0; s < slots; ++s)
          done = done && v.cs[s] >= v.quota[s];
        if (!done)
          break;
        v.filled = true;
        const double fill = *std::max_element(v.slot_fill.begin(), v.slot_fill.end());
        v.t_fill.push_back(fill);
        v.next_consume = fill;
        if (v.fi == 0)
          wave(v.id, "fill");
        progress = true;
      } else {
        // Proportional interleave over the slots still owed words.
        std::size_t s = slots;
        for (std::size_t i = 0; i < slots; ++i) {
          if (v.cs[i] >= v.in_words[i])
            continue;
          if (s == slots || static_cast<double>(v.cs[i]) / v.in_words[i] <
                                static_cast<double>(v.cs[s]) / v.in_words[s])
            s = i;
        }
        if (s < slots) {
          Channel &c = ch_[v.in_ch[s]];
          if (c.q.empty())
            break;
          const int64_t n = c.q.front().words;
          const double emitted_eq = v.fo == v.fi && v.emitting
                                        ? static_cast<double>(v.emitted) * v.sigma_in / v.sigma_out
                                        : (v.fo > v.fi ? static_cast<double>(v.sigma_in) : 0.0);
          if (static_cast<double>(v.ctotal + n) > v.perf.rho + emitted_eq + static_cast<double>(v.hold))
            break;
          if (now_ < v.next_consume) {
            next = std::min(next, v.next_consume);
            break;
          }
          pop(v.in_ch[s]);
          v.cs[s] += n;
          v.ctotal += n;
          v.next_consume = std::max(v.next_consume, now_) + static_cast<double>(n) / r_in;
          progress = true;
        }
      }
      if (v.ctotal >= v.sigma_in) {
        v.fi++;
        std::fill(v.cs.begin(), v.cs.end(), 0);
        v.ctotal = 0;
        v.filled = false;
        v.frame_ready = now_;
        progress = true;
      }
    }

    // Self-timed emission.
    while (v.fo < frames) {
      if (!v.emitting) {
        if (static_cast<std::size_t>(v.fo) >= v.t_fill.size())
          break;
        const double base = std::max(v.t_fill[v.fo], v.fo > 0 ? v.end_emit[v.fo - 1] : 0.0);
        v.emitting = true;
        v.last_emit = base;
        v.emitted = 0;
      }
      const int64_t n = token_size(v.sigma_out, v.emitted);
      const double due = v.last_emit + static_cast<double>(n) / r_emit;
      if (now_ < due) {
        next = std::min(next, due);
        break;
      }
      if (v.emitted + n == v.sigma_out && v.fi <= v.fo)
        break;
      bool space = true;
      for (int c : v.out_ch)
        space = space && ch_[c].can_accept(n);
      if (!space) {
        set_blocked(v, true);
        break;
      }
      set_blocked(v, false);
      Token t{n, std::max(v.last_emit, now_ - static_cast<double>(n) / r_emit), now_, v.fo};
      for (int c : v.out_ch)
        push(c, t);
      v.last_emit = now_;
      v.emitted += n;
      progress = true;
      if (v.emitted == v.sigma_out) {
        v.end_emit.push_back(now_);
        v.fo++;
        v.emitting = false;
      }
    }
  }

  // Which inputs is the vertex starving on?
  std::vector<char> want(slots, 0);
  if (v.fi < frames) {
    if (!v.filled) {
      for (std::size_t s = 0; s < slots; ++s)
        want[s] = v.cs[s] < v.quota[s] && ch_[v.in_ch[s]].q.empty();
    } else {
      std::size_t s = slots;
      for (std::size_t i = 0; i < slots; ++i)
        if (v.cs[i] < v.in_words[i] && (s == slots || static_cast<double>(v.cs[i]) / v.in_words[i] <
                                                         static_cast<double>(v.cs[s]) / v.in_words[s]))
          s = i;
      if (s < slots)
        want[s] = ch_[v.in_ch[s]].q.empty();
    }
  }
  for (std::size_t s = 0; s < slots; ++s)
    set_waiting(v.in_ch[s], want[s] != 0);

  if (next < kInf)
    schedule(node, next);
}

void Simulation::handle_source(SourceNode &s, int node) {
  while (s.frame < cfg_.frames) {
    const int64_t n = token_size(s.words, s.done);
    const double due = s.last + static_cast<double>(n) / s.rate;
    if (now_ < due) {
      schedule(node, due);
      return;
    }
    if (!ch_[s.out].can_accept(n))
      return;
    push(s.out, Token{n, std::max(s.last, now_ - static_cast<double>(n) / s.rate), now_, s.frame});
    s.last = now_;
    s.done += n;
    if (s.done == s.words) {
      s.done = 0;
      s.frame++;
    }
  }
}

void Simulation::handle_writer(LinkNode &l, int node) {
  DmaStream &st = streams_[l.stream];
  if (l.busy && now_ < l.busy_until) {
    schedule(node, l.busy_until); // woken early by the other side
    return;
  }
  if (l.busy && now_ >= l.busy_until) {
    l.busy = false;
    const double ready = now_ + cfg_.dma.latency_cycles;
    dram_[l.link].push_back({l.in_flight, ready});
    schedule(l.peer, ready);
  }
  if (!l.busy && !ch_[l.in].q.empty()) {
    l.in_flight = pop(l.in);
    const double cost = static_cast<double>(l.in_flight.words) * frame_ratio(l.link, l.in_flight.frame);
    l.busy = true;
    l.busy_until = now_ + cost / st.share;
    st.busy.push_back({now_, l.busy_until});
    schedule(node, l.busy_until);
  }
  set_waiting(l.in, !l.busy && ch_[l.in].q.empty());
}

void Simulation::handle_reader(LinkNode &l, int node) {
  DmaStream &st = streams_[l.stream];
  const double alpha = cfg_.evicted[l.link].alpha;
  if (l.busy && now_ < l.busy_until) {
    schedule(node, l.busy_until); // woken early by the other side
    return;
  }
  if (l.busy && now_ >= l.busy_until) {
    l.busy = false;
    push(l.out, l.in_flight);
  }
  auto &q = dram_[l.link];
  if (l.busy || q.empty())
    return;
  if (q.front().ready > now_) {
    schedule(node, q.front().ready);
    return;
  }
  if (!ch_[l.out].can_accept(q.front().token.words))
    return;
  Token t = q.front().token;
  q.pop_front();
  const double cost = static_cast<double>(t.words) * frame_ratio(l.link, t.frame) * alpha;
  l.busy = true;
  l.busy_until = now_ + cost / st.share;
  st.busy.push_back({now_, l.busy_until});
  l.in_flight = Token{t.words, now_, l.busy_until, t.frame};
  schedule(node, l.busy_until);
}

SimReport Simulation::run() {
  for (int n = 0; n < static_cast<int>(nodes_.size()); ++n)
    schedule(n, 0.0);
  while (!queue_.empty()) {
    auto [t, node] = queue_.top();
    queue_.pop();
    if (t != next_wake_[node])
      continue;
    next_wake_[node] = kInf;
    now_ = t;
    handle(node);
  }

  SimReport r;
  r.frames = cfg_.frames;
  r.token_words = tokw_;
  const std::size_t nv = g_.size(), ne = g_.edges().size();
  r.fill_time.assign(nv, -1.0);
  r.interval.assign(nv, 0.0);
  r.stall_cycles.assign(nv, 0.0);
  r.backpressure_cycles.assign(nv, 0.0);
  r.max_occupancy.assign(ne, 0);
  r.words_pushed.assign(ne, 0);
  r.words_popped.assign(ne, 0);

  std::vector<std::string> stuck;
  for (auto &v : vx_) {
    if (v.fo < cfg_.frames)
      stuck.push_back(g_.vertex(v.id).name + "(in " + std::to_string(v.fi) + ":" + std::to_string(v.ctotal) + "/" +
                      std::to_string(v.sigma_in) + ", out " + std::to_string(v.fo) + ":" + std::to_string(v.emitted) +
                      "/" + std::to_string(v.sigma_out) + ")");
  }
  r.deadlock = !stuck.empty();
  if (r.deadlock) {
    r.deadlock_cycle = now_;
    r.deadlock_info = "no progress possible; unfinished:";
    for (const auto &s : stuck)
      r.deadlock_info += " " + s;
    wave_.push_back({now_, "-", "deadlock"});
  }
  for (auto &v : vx_) {
    touch(v);
    if (v.blocked)
      v.backpressure += now_ - v.block_since;
    r.stall_cycles[v.id] = v.stall;
    r.backpressure_cycles[v.id] = v.backpressure;
    if (!v.t_fill.empty())
      r.fill_time[v.id] = v.t_fill.front();
    const std::size_t f = v.end_emit.size();
    if (f >= 2)
      r.interval[v.id] = v.end_emit[f - 1] - v.end_emit[f - 2];
    r.measured_ii = std::max(r.measured_ii, r.interval[v.id]);
    r.measured_depth = std::max(r.measured_depth, r.fill_time[v.id]);
    if (!v.end_emit.empty())
      r.total_cycles = std::max(r.total_cycles, v.end_emit.back());
    r.macs_per_frame += macs(g_.vertex(v.id));
  }
  if (r.deadlock)
    r.total_cycles = std::max(r.total_cycles, now_);
  for (const auto &c : ch_) {
    if (c.edge == kNoEdge)
      continue;
    r.max_occupancy[c.edge] += c.max_occ;
    const bool at_producer = nodes_[c.producer].first != NodeKind::Reader &&
                             nodes_[c.producer].first != NodeKind::Source;
    const bool at_consumer = nodes_[c.consumer].first == NodeKind::Vertex;
    if (at_producer)
      r.words_pushed[c.edge] += c.pushed;
    if (at_consumer)
      r.words_popped[c.edge] += c.popped;
  }

  // Port utilisation timeline.
  const int buckets = std::max(1, cfg_.timeline_buckets);
  const std::size_t ports = port_capacity_.size();
  if (!streams_.empty() || !cfg_.reserved.empty()) {
    r.bucket_cycles = std::max(r.total_cycles, 1.0) / buckets;
    r.port_utilization.assign(ports, std::vector<double>(buckets, 0.0));
    for (std::size_t p = 0; p < ports; ++p)
      for (int b = 0; b < buckets; ++b)
        r.port_utilization[p][b] =
            port_capacity_[p] > 0 ? std::min(port_reserved_[p], port_capacity_[p]) / port_capacity_[p] : 0.0;
    for (const auto &s : streams_) {
      for (const auto &iv : s.busy) {
        const double end = std::min(iv.end, r.total_cycles);
        for (double t = iv.start; t < end;) {
          int b = std::min(buckets - 1, static_cast<int>(t / r.bucket_cycles));
          double edge = std::min(end, (b + 1) * r.bucket_cycles);
          if (edge <= t)
            break;
          r.port_utilization[s.port][b] += (edge - t) * s.share / (port_capacity_[s.port] * r.bucket_cycles);
          t = edge;
        }
      }
    }
  }
  r.waveform = std::move(wave_);
  return r;
}

} // namespace

double SimReport::total_stalls() const {
  double total = 0;
  for (double s : stall_cycles)
    total += s;
  return total;
}

SimReport simulate(const SimConfig &cfg) {
  Simulation sim(cfg);
  return sim.run();
}

double measure_pipeline_depth(const SimReport &report, VertexId v) {
  if (v >= report.fill_time.size() || report.fill_time[v] < 0)
    throw Error("vertex produced no output in the simulation");
  return report.fill_time[v];
}

std::vector<SweepPoint> sweep_ratio_variability(const SimConfig &cfg, const std::vector<double> &multipliers,
                                                double freq_mhz, int jobs) {
  auto point = [&](double m) {
    SimConfig c = cfg;
    c.ratio_multiplier = m;
    c.frames = std::max(cfg.frames, 3);
    c.record_waveform = false;
    SimReport r = simulate(c);
    SweepPoint p;
    p.multiplier = m;
    p.ii_cycles = r.measured_ii;
    p.macs_per_second =
        r.deadlock || r.measured_ii <= 0 ? 0.0 : static_cast<double>(r.macs_per_frame) * freq_mhz * 1e6 / r.measured_ii;
    return p;
  };
  std::vector<SweepPoint> out(multipliers.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t i = 0; i < multipliers.size(); i += width) {
    std::vector<std::future<SweepPoint>> batch;
    for (std::size_t j = i; j < std::min(multipliers.size(), i + width); ++j)
      batch.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, point, multipliers[j]));
    for (std::size_t j = 0; j < batch.size(); ++j)
      out[i + j] = batch[j].get();
  }
  return out;
}

void write_waveform_csv(const SimReport &report, const std::string &path) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write waveform '" + path + "'");
  out << "cycle,vertex,event\n";
  for (const auto &w : report.waveform)
    out << w.cycle << ',' << w.vertex << ',' << w.event << '\n';
}

} // namespace sdse
