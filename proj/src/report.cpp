/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sdse/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace sdse {

using nlohmann::json;

namespace {

std::string edge_label(const ModelGraph &g, EdgeId e) {
  return g.vertex(g.edge(e).src).name + "->" + g.vertex(g.edge(e).dst).name;
}

VertexId vertex_named(const ModelGraph &g, const json &name) {
  if (!name.is_string())
    throw ParseError("plan: vertex name must be a string");
  auto v = g.find(name.get<std::string>());
  if (!v)
    throw ParseError("plan: unknown vertex '" + name.get<std::string>() + "'");
  return *v;
}

double percent(int64_t used, int64_t cap) { return cap > 0 ? 100.0 * static_cast<double>(used) / cap : 0.0; }

json score_json(double s) { return std::isinf(s) ? json("inf") : json(s); }

} // namespace

json plan_to_json(const ModelGraph &g, const DesignPlan &plan) {
  json doc;
  doc["model"] = plan.model;
  doc["device"] = plan.device;
  doc["batch"] = plan.batch;
  json subs = json::array();
  for (const auto &s : plan.subgraphs) {
    json members = json::array();
    for (VertexId v : s.members)
      members.push_back(g.vertex(v).name);
    subs.push_back(members);
  }
  doc["subgraphs"] = subs;
  json vertices = json::object();
  for (VertexId v = 0; v < g.size(); ++v) {
    const DesignVector &d = plan.design[v];
    vertices[g.vertex(v).name] = {{"p", d.p}, {"m_frag", d.m_frag}, {"s_i", d.s_i},
                                  {"s_o", d.s_o}, {"a_i", d.a_i},   {"a_o", d.a_o}};
  }
  doc["vertices"] = vertices;
  json evicted = json::array();
  for (EdgeId e = 0; e < g.edges().size(); ++e)
    if (plan.evicted[e])
      evicted.push_back({{"src", g.vertex(g.edge(e).src).name},
                         {"dst", g.vertex(g.edge(e).dst).name},
                         {"dst_slot", g.edge(e).dst_slot}});
  doc["evicted"] = evicted;
  doc["performance"] = performance_to_json(plan.performance);
  return doc;
}

DesignPlan plan_from_json(const ModelGraph &g, const DeviceSpec &device, const json &doc, const DseConfig &cfg) {
  try {
    const int64_t batch = doc.at("batch").get<int64_t>();
    if (batch < 1)
      throw ParseError("plan: batch must be >= 1");
    std::vector<std::vector<VertexId>> parts;
    for (const auto &s : doc.at("subgraphs")) {
      parts.emplace_back();
      for (const auto &name : s)
        parts.back().push_back(vertex_named(g, name));
    }
    std::vector<DesignVector> design(g.size());
    for (const auto &[name, d] : doc.at("vertices").items()) {
      const VertexId v = vertex_named(g, json(name));
      design[v].p = d.at("p").get<int64_t>();
      design[v].m_frag = d.value("m_frag", 0.0);
    }
    std::vector<char> evicted(g.edges().size(), 0);
    for (const auto &e : doc.at("evicted")) {
      const VertexId src = vertex_named(g, e.at("src"));
      const VertexId dst = vertex_named(g, e.at("dst"));
      const int slot = e.value("dst_slot", 0);
      bool found = false;
      for (EdgeId id : g.out_edges(src))
        if (g.edge(id).dst == dst && g.edge(id).dst_slot == slot) {
          evicted[id] = 1;
          found = true;
        }
      if (!found)
        throw ParseError("plan: no edge " + g.vertex(src).name + "->" + g.vertex(dst).name);
    }
    return evaluate_plan(g, device, parts, design, evicted, batch, cfg);
  } catch (const json::exception &e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

DesignPlan load_plan(const ModelGraph &g, const DeviceSpec &device, const std::string &path, const DseConfig &cfg) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open plan file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw ParseError("plan '" + path + "': " + e.what());
  }
  return plan_from_json(g, device, doc, cfg);
}

json performance_to_json(const PerformanceReport &p) {
  return {{"t_s", p.t},
          {"theta_fps", p.theta},
          {"subgraphs", p.n},
          {"batch", p.b},
          {"compute_s", p.compute_s},
          {"reconfig_s", p.reconfig_s},
          {"reconfig_share", p.reconfig_share},
          {"subgraph_compute_s", p.subgraph_compute_s}};
}

json report_to_json(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan) {
  json doc;
  doc["model"] = plan.model;
  doc["device"] = plan.device;
  doc["batch"] = plan.batch;
  doc["performance"] = performance_to_json(plan.performance);
  int64_t macs_total = 0;
  for (const auto &v : g.vertices())
    macs_total += macs(v);
  doc["gops"] = plan.performance.t > 0
                    ? 2.0 * static_cast<double>(macs_total) * static_cast<double>(plan.batch) / plan.performance.t / 1e9
                    : 0.0;
  json subs = json::array();
  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i) {
    const SubgraphPlan &s = plan.subgraphs[i];
    const ResourceVector r = s.resources();
    json ev = json::array();
    for (EdgeId e : s.evicted)
      ev.push_back(edge_label(g, e));
    json frag = json::object();
    for (VertexId v : s.members)
      if (plan.design[v].m_frag > 0)
        frag[g.vertex(v).name] = plan.design[v].m_frag;
    subs.push_back({{"index", i},
                    {"first", g.vertex(s.members.front()).name},
                    {"last", g.vertex(s.members.back()).name},
                    {"vertices", s.members.size()},
                    {"ii_cycles", s.ii},
                    {"depth_cycles", s.depth},
                    {"resources",
                     {{"dsp", r.dsp}, {"lut", r.lut}, {"ff", r.ff}, {"bram18k", r.bram18k}, {"uram", r.uram}}},
                    {"utilization_pct",
                     {{"dsp", percent(r.dsp, device.dsp)},
                      {"lut", percent(r.lut, device.lut)},
                      {"ff", percent(r.ff, device.ff)},
                      {"bram18k", percent(r.bram18k, device.bram18k)},
                      {"uram", percent(r.uram, device.uram)}}},
                    {"bandwidth_gbps", s.bandwidth_gbps},
                    {"bandwidth_pct", device.bandwidth_gbps > 0 ? 100.0 * s.bandwidth_gbps / device.bandwidth_gbps : 0.0},
                    {"evicted", ev},
                    {"fragmented", frag},
                    {"feasible", s.feasible}});
  }
  doc["subgraph_reports"] = subs;
  return doc;
}

std::string format_report(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan) {
  std::ostringstream os;
  const PerformanceReport &p = plan.performance;
  os << "model " << plan.model << " on " << plan.device << ", batch " << plan.batch << "\n";
  os << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < plan.subgraphs.size(); ++i) {
    const SubgraphPlan &s = plan.subgraphs[i];
    const ResourceVector r = s.resources();
    os << "\nsubgraph " << i << ": " << g.vertex(s.members.front()).name << " .. " << g.vertex(s.members.back()).name
       << " (" << s.members.size() << " vertices)\n";
    os << "  DSP     " << std::setw(9) << r.dsp << " / " << device.dsp << "  " << percent(r.dsp, device.dsp) << "%\n";
    os << "  LUT     " << std::setw(9) << r.lut << " / " << device.lut << "  " << percent(r.lut, device.lut) << "%\n";
    os << "  FF      " << std::setw(9) << r.ff << " / " << device.ff << "  " << percent(r.ff, device.ff) << "%\n";
    os << "  BRAM18K " << std::setw(9) << r.bram18k << " / " << device.bram18k << "  "
       << percent(r.bram18k, device.bram18k) << "%\n";
    os << "  URAM    " << std::setw(9) << r.uram << " / " << device.uram << "  " << percent(r.uram, device.uram)
       << "%\n";
    os << "  bandwidth " << s.bandwidth_gbps << " / " << device.bandwidth_gbps << " Gb/s\n";
    os << "  II " << std::setprecision(0) << s.ii << " cycles, depth " << s.depth << " cycles\n"
       << std::setprecision(2);
    for (EdgeId e : s.evicted)
      os << "  evicted " << edge_label(g, e) << "\n";
    for (VertexId v : s.members)
      if (plan.design[v].m_frag > 0)
        os << "  fragmented " << g.vertex(v).name << " m=" << std::setprecision(4) << plan.design[v].m_frag
           << std::setprecision(2) << "\n";
  }
  os << "\nsubgraphs " << p.n << ", latency " << std::setprecision(4) << p.t * 1e3 << " ms, throughput "
     << std::setprecision(2) << p.theta << " fps, reconfiguration " << p.reconfig_share * 100.0 << "%\n";
  return os.str();
}

std::string audit_jsonl(const std::vector<AuditRecord> &audit) {
  std::string out;
  for (const auto &a : audit) {
    json ledger = json::object();
    for (const auto &[k, v] : a.ledger_after)
      ledger[k] = v;
    json line = {{"pass", a.pass},     {"subgraph", a.subgraph},        {"target", a.target},
                 {"action", a.action}, {"score", score_json(a.score)}, {"ledger_after", ledger}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<AuditRecord> parse_audit_jsonl(const std::string &text) {
  std::vector<AuditRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    try {
      const json j = json::parse(line);
      AuditRecord a;
      a.pass = j.at("pass").get<std::string>();
      a.subgraph = j.at("subgraph").get<int>();
      a.target = j.at("target").get<std::string>();
      a.action = j.at("action").get<std::string>();
      const json &s = j.at("score");
      a.score = s.is_string() ? std::numeric_limits<double>::infinity() : s.get<double>();
      for (const auto &[k, v] : j.at("ledger_after").items())
        a.ledger_after.emplace_back(k, v.get<double>());
      out.push_back(std::move(a));
    } catch (const json::exception &e) {
      throw ParseError(std::string("audit: ") + e.what());
    }
  }
  return out;
}

std::string batch_sweep_csv(const std::vector<BatchPoint> &points) {
  std::ostringstream os;
  os << std::setprecision(10) << "batch,theta_fps,t_s,reconfig_share,subgraphs\n";
  for (const auto &p : points)
    os << p.batch << "," << p.performance.theta << "," << p.performance.t << "," << p.performance.reconfig_share << ","
       << p.performance.n << "\n";
  return os.str();
}

std::string ratio_sweep_csv(const std::vector<SweepPoint> &points) {
  std::ostringstream os;
  os << std::setprecision(10) << "multiplier,macs_per_second,ii_cycles\n";
  for (const auto &p : points)
    os << p.multiplier << "," << p.macs_per_second << "," << p.ii_cycles << "\n";
  return os.str();
}

std::string gnuplot_script(const std::string &csv_path, int x, int y, const std::string &xlabel,
                           const std::string &ylabel, const std::string &title) {
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set key off\n"
     << "set grid\n"
     << "set title '" << title << "'\n"
     << "set xlabel '" << xlabel << "'\n"
     << "set ylabel '" << ylabel << "'\n"
     << "plot '" << csv_path << "' every ::1 using " << x << ":" << y << " with linespoints\n"
     << "pause mouse close\n";
  return os.str();
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write '" + path + "'");
  out << text;
  if (!out)
    throw Error("failed writing '" + path + "'");
}

} // namespace sdse
