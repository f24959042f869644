/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sdse/report.hpp"

namespace fs = std::filesystem;
using namespace sdse;

namespace {

constexpr int kExitInfeasible = 1;
constexpr int kExitInput = 2;

struct Common {
  std::string model;
  std::string device;
  int64_t batch = 1;
  std::string codec = "none";
  uint64_t seed = 1;
  int jobs = 1;
  std::string cost_table;
  std::string boundary_kinds;
  int max_merge_rounds = 100;
  std::string plan;
  std::string out = ".";
  std::string gnuplot;
};

void add_inputs(CLI::App *app, Common &c, bool need_device = true) {
  app->add_option("--model", c.model, "model graph (JSON)")->required();
  auto *dev = app->add_option("--device", c.device, "device description (JSON)");
  if (need_device)
    dev->required();
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--cost-table", c.cost_table, "per-operator cost table (JSON)");
}

void add_dse_options(CLI::App *app, Common &c) {
  app->add_option("--batch", c.batch, "batch size")->check(CLI::PositiveNumber);
  app->add_option("--codec", c.codec, "off-chip codec: none, rle, huffman")
      ->check(CLI::IsMember({"none", "rle", "huffman"}));
  app->add_option("--seed", c.seed, "seed of the synthetic calibration data");
  app->add_option("--boundary-kinds", c.boundary_kinds, "comma-separated kinds allowed to start a subgraph");
  app->add_option("--max-merge-rounds", c.max_merge_rounds, "merge iteration cap")->check(CLI::NonNegativeNumber);
}

ModelGraph model_of(const Common &c) { return load_model(c.model); }
DeviceSpec device_of(const Common &c) { return DeviceSpec::load(c.device); }

DseConfig config_of(const Common &c, const ModelGraph &g) {
  DseConfig cfg;
  cfg.jobs = c.jobs;
  cfg.max_merge_rounds = c.max_merge_rounds;
  cfg.codec = parse_scheme(c.codec);
  const Calibration cal = calibrate(cfg.codec, g.word_length(), c.seed);
  // A codec that expands the data is bypassed; the stream goes out raw.
  if (cal.activation_ratio > 1.0 || cal.weight_ratio > 1.0)
    std::cerr << "note: " << c.codec << " expands " << g.word_length() << "-bit data (activations "
              << cal.activation_ratio << ", weights " << cal.weight_ratio << "); expanding streams are sent raw\n";
  cfg.activation_ratio = std::min(1.0, cal.activation_ratio);
  cfg.weight_ratio = std::min(1.0, cal.weight_ratio);
  if (!c.cost_table.empty())
    cfg.costs = CostTable::load(c.cost_table);
  if (!c.boundary_kinds.empty()) {
    std::set<OpKind> kinds;
    std::stringstream ss(c.boundary_kinds);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto k = parse_kind(name);
      if (!k)
        throw ParseError("unknown operator kind '" + name + "'");
      kinds.insert(*k);
    }
    cfg.boundary_kinds = kinds;
  }
  return cfg;
}

DesignPlan plan_of(const Common &c, const ModelGraph &g, const DeviceSpec &d, const DseConfig &cfg) {
  if (!c.plan.empty())
    return load_plan(g, d, c.plan, cfg);
  return run_dse(g, d, c.batch, cfg);
}

fs::path out_dir(const Common &c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

int cmd_dse(const Common &c) {
  const ModelGraph g = model_of(c);
  const DeviceSpec d = device_of(c);
  const DseConfig cfg = config_of(c, g);
  const DesignPlan plan = run_dse(g, d, c.batch, cfg);
  const fs::path dir = out_dir(c);
  write_text((dir / "plan.json").string(), plan_to_json(g, plan).dump(1) + "\n");
  write_text((dir / "report.json").string(), report_to_json(g, d, plan).dump(1) + "\n");
  write_text((dir / "audit.jsonl").string(), audit_jsonl(plan.audit));
  const std::string table = format_report(g, d, plan);
  write_text((dir / "report.txt").string(), table);
  std::cout << table;
  const auto violations = check_constraints(g, d, plan, cfg);
  for (const auto &v : violations)
    std::cerr << "violation: subgraph " << v.subgraph << " " << v.resource << ": " << v.message << "\n";
  return violations.empty() ? 0 : kExitInfeasible;
}

int cmd_estimate(const Common &c) {
  const ModelGraph g = model_of(c);
  if (c.plan.empty()) {
    const PerfMap perf = perf_map(g, std::vector<int64_t>(g.size(), 1));
    const auto delay = vertex_delays(g, perf);
    std::cout << std::left << std::setw(24) << "vertex" << std::right << std::setw(14) << "lambda" << std::setw(12)
              << "rho" << std::setw(12) << "r_st" << std::setw(14) << "delay\n";
    for (VertexId v : topological_order(g))
      std::cout << std::left << std::setw(24) << g.vertex(v).name << std::right << std::setw(14) << perf[v].lambda
                << std::setw(12) << perf[v].rho << std::setw(12) << std::setprecision(5)
                << initiation_rate(g, v, perf) << std::setw(14) << std::setprecision(8) << delay[v] << "\n";
    std::cout << "II " << initiation_interval(g, perf) << " cycles, depth " << graph_pipeline_depth(g, perf)
              << " cycles (p = 1)\n";
    return 0;
  }
  if (c.device.empty())
    throw ParseError("--device is required with --plan");
  const DeviceSpec d = device_of(c);
  const DseConfig cfg = config_of(c, g);
  const DesignPlan plan = load_plan(g, d, c.plan, cfg);
  std::cout << format_report(g, d, plan);
  return 0;
}

struct SimOptions {
  int subgraph = -1;
  int frames = 2;
  int64_t token_words = 0;
  std::string waveform;
  double ratio_multiplier = 1.0;
};

SimConfig sim_config(const ModelGraph &g, const DeviceSpec &d, const DesignPlan &plan, std::size_t i,
                     const DseConfig &cfg, const SimOptions &o) {
  SimConfig sc = subgraph_sim_config(g, d, plan, i, cfg);
  sc.frames = o.frames;
  sc.token_words = o.token_words;
  sc.ratio_multiplier = o.ratio_multiplier;
  return sc;
}

std::vector<std::size_t> selected(const DesignPlan &plan, int subgraph) {
  if (subgraph >= static_cast<int>(plan.subgraphs.size()))
    throw ParseError("subgraph index " + std::to_string(subgraph) + " out of range");
  if (subgraph >= 0)
    return {static_cast<std::size_t>(subgraph)};
  std::vector<std::size_t> all(plan.subgraphs.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = i;
  return all;
}

int cmd_simulate(const Common &c, const SimOptions &o) {
  const ModelGraph g = model_of(c);
  const DeviceSpec d = device_of(c);
  const DseConfig cfg = config_of(c, g);
  const DesignPlan plan = plan_of(c, g, d, cfg);
  int status = 0;
  for (std::size_t i : selected(plan, o.subgraph)) {
    SimConfig sc = sim_config(g, d, plan, i, cfg, o);
    sc.record_waveform = !o.waveform.empty();
    const SimReport r = simulate(sc);
    std::cout << "subgraph " << i << ": cycles " << r.total_cycles << ", II " << r.measured_ii << ", depth "
              << r.measured_depth << ", stalls " << r.total_stalls() << ", token " << r.token_words << " words\n";
    if (r.deadlock) {
      std::cout << "  deadlock at cycle " << r.deadlock_cycle << ": " << r.deadlock_info << "\n";
      status = kExitInfeasible;
    }
    if (!o.waveform.empty()) {
      std::string path = o.waveform;
      if (o.subgraph < 0)
        path += "." + std::to_string(i);
      write_waveform_csv(r, path);
    }
  }
  return status;
}

double deviation(double model, double sim) { return model != 0 ? 100.0 * (sim - model) / model : 0.0; }

int cmd_validate(const Common &c, const SimOptions &o) {
  const ModelGraph g = model_of(c);
  const DeviceSpec d = device_of(c);
  const DseConfig cfg = config_of(c, g);
  const DesignPlan plan = plan_of(c, g, d, cfg);
  std::ostringstream csv;
  csv << std::setprecision(10) << "subgraph,depth_model,depth_sim,depth_dev_pct,ii_model,ii_sim,ii_dev_pct,stalls\n";
  std::cout << std::setw(8) << "subgraph" << std::setw(16) << "depth model" << std::setw(16) << "depth sim"
            << std::setw(10) << "dev %" << std::setw(16) << "II model" << std::setw(16) << "II sim" << std::setw(10)
            << "dev %" << "\n";
  int status = 0;
  for (std::size_t i : selected(plan, o.subgraph)) {
    SimOptions so = o;
    so.frames = std::max(2, o.frames);
    const SimReport r = simulate(sim_config(g, d, plan, i, cfg, so));
    const SubgraphPlan &s = plan.subgraphs[i];
    if (r.deadlock) {
      std::cout << "subgraph " << i << " deadlocked at cycle " << r.deadlock_cycle << ": " << r.deadlock_info << "\n";
      status = kExitInfeasible;
      continue;
    }
    const double dd = deviation(s.depth, r.measured_depth), di = deviation(s.ii, r.measured_ii);
    std::cout << std::fixed << std::setprecision(1) << std::setw(8) << i << std::setw(16) << s.depth << std::setw(16)
              << r.measured_depth << std::setw(10) << std::setprecision(2) << dd << std::setw(16)
              << std::setprecision(1) << s.ii << std::setw(16) << r.measured_ii << std::setw(10)
              << std::setprecision(2) << di << "\n"
              << std::defaultfloat;
    csv << i << "," << s.depth << "," << r.measured_depth << "," << dd << "," << s.ii << "," << r.measured_ii << ","
        << di << "," << r.total_stalls() << "\n";
  }
  write_text((out_dir(c) / "validate.csv").string(), csv.str());
  return status;
}

template <typename T> std::vector<T> parse_list(const std::string &text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v;
    if (!(is >> v))
      throw ParseError("bad list element '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int cmd_sweep(const Common &c, const SimOptions &o, const std::string &axis, const std::string &values) {
  const ModelGraph g = model_of(c);
  const DeviceSpec d = device_of(c);
  const DseConfig cfg = config_of(c, g);
  std::string csv;
  int x = 1, y = 2;
  std::string xlabel, ylabel;
  if (axis == "batch") {
    std::vector<BatchPoint> points;
    for (int64_t b : parse_list<int64_t>(values.empty() ? "1,4,16,64" : values)) {
      if (b < 1)
        throw ParseError("batch sizes must be >= 1");
      points.push_back({b, run_dse(g, d, b, cfg).performance});
    }
    csv = batch_sweep_csv(points);
    y = 4;
    xlabel = "batch size";
    ylabel = "reconfiguration share";
  } else {
    const DesignPlan plan = plan_of(c, g, d, cfg);
    std::size_t idx = 0;
    if (o.subgraph >= 0) {
      idx = selected(plan, o.subgraph).front();
    } else {
      for (std::size_t i = plan.subgraphs.size(); i-- > 0;)
        if (!plan.subgraphs[i].evicted.empty())
          idx = i;
    }
    std::vector<double> mults;
    if (values.empty())
      for (int k = 0; k <= 10; ++k)
        mults.push_back(1.0 + 0.1 * k);
    else
      mults = parse_list<double>(values);
    SimConfig sc = sim_config(g, d, plan, idx, cfg, o);
    sc.frames = std::max(2, o.frames);
    csv = ratio_sweep_csv(sweep_ratio_variability(sc, mults, d.freq_mhz, c.jobs));
    xlabel = "compression ratio multiplier";
    ylabel = "MAC/s";
  }
  const fs::path path = out_dir(c) / ("sweep_" + axis + ".csv");
  write_text(path.string(), csv);
  std::cout << csv;
  if (!c.gnuplot.empty())
    write_text(c.gnuplot, gnuplot_script(path.string(), x, y, xlabel, ylabel, g.name() + " " + axis + " sweep"));
  return 0;
}

int cmd_codec_stats(const std::string &input, const std::string &kind, std::size_t count, int word_length,
                    double zero_fraction, uint64_t seed) {
  WordStream s;
  if (!input.empty())
    s = read_raw_tensor(input);
  else if (kind == "weights")
    s = synthetic_weights(count, word_length, seed);
  else
    s = synthetic_activations(count, word_length, zero_fraction, seed);
  const Histogram h = histogram(s.words);
  double entropy = 0.0;
  for (const auto &[sym, n] : h) {
    const double p = static_cast<double>(n) / static_cast<double>(s.words.size());
    entropy -= p * std::log2(p);
  }
  const CodecTable table = huffman_build(h, s.word_length);
  const double mean_len =
      s.words.empty() ? 0.0 : static_cast<double>(table.encoded_bits(s.words)) / static_cast<double>(s.words.size());
  std::cout << "words " << s.words.size() << ", word length " << s.word_length << ", distinct " << h.size() << "\n"
            << "entropy " << entropy << " bits/word, huffman mean code length " << mean_len << "\n"
            << "ratio rle " << compression_ratio(s, CodecScheme::RLE) << ", huffman "
            << compression_ratio(s, CodecScheme::Huffman, &table) << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Design space exploration for streaming CNN accelerators"};
  app.require_subcommand(1);
  Common c;
  SimOptions so;
  std::string axis = "batch", values;
  std::string input, kind = "activations";
  std::size_t count = 65536;
  int word_length = 8;
  double zero_fraction = 0.5;

  auto sim_flags = [&](CLI::App *cmd) {
    cmd->add_option("--subgraph", so.subgraph, "subgraph index (default: all)");
    cmd->add_option("--frames", so.frames, "frames to simulate")->check(CLI::PositiveNumber);
    cmd->add_option("--token-words", so.token_words, "words per token (0 = automatic)");
    cmd->add_option("--ratio-multiplier", so.ratio_multiplier, "scale of the actual compression ratio");
  };

  auto *dse = app.add_subcommand("dse", "run the exploration and write plan.json, report.json, audit.jsonl");
  add_inputs(dse, c);
  add_dse_options(dse, c);
  dse->add_option("--out", c.out, "output directory");

  auto *est = app.add_subcommand("estimate", "analytical II and pipeline depth");
  add_inputs(est, c, false);
  add_dse_options(est, c);
  est->add_option("--plan", c.plan, "plan.json to evaluate");

  auto *sim = app.add_subcommand("simulate", "simulate the subgraphs of a plan");
  add_inputs(sim, c);
  add_dse_options(sim, c);
  sim->add_option("--plan", c.plan, "plan.json (default: run the exploration)");
  sim_flags(sim);
  sim->add_option("--dump-waveform", so.waveform, "write cycle,vertex,event CSV");

  auto *val = app.add_subcommand("validate", "compare the analytical model with the simulator");
  add_inputs(val, c);
  add_dse_options(val, c);
  val->add_option("--plan", c.plan, "plan.json (default: run the exploration)");
  val->add_option("--out", c.out, "output directory for validate.csv");
  sim_flags(val);

  auto *sw = app.add_subcommand("sweep", "batch or compression-ratio sweep as CSV");
  add_inputs(sw, c);
  add_dse_options(sw, c);
  sw->add_option("--axis", axis, "batch or ratio")->check(CLI::IsMember({"batch", "ratio"}));
  sw->add_option("--values", values, "comma-separated batch sizes or multipliers");
  sw->add_option("--plan", c.plan, "plan.json for the ratio axis");
  sw->add_option("--out", c.out, "output directory");
  sw->add_option("--gnuplot", c.gnuplot, "also write a gnuplot script");
  sim_flags(sw);

  auto *cs = app.add_subcommand("codec-stats", "entropy and compression ratios of a word stream");
  cs->add_option("--input", input, "raw tensor file (default: synthetic data)");
  cs->add_option("--kind", kind, "synthetic data kind")->check(CLI::IsMember({"activations", "weights"}));
  cs->add_option("--count", count, "synthetic word count")->check(CLI::PositiveNumber);
  cs->add_option("--word-length", word_length, "bits per word")->check(CLI::Range(1, 32));
  cs->add_option("--zero-fraction", zero_fraction, "zero fraction of synthetic activations")->check(CLI::Range(0.0, 1.0));
  cs->add_option("--seed", c.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    for (const auto &path : {c.model, c.device, c.plan, input})
      if (!path.empty() && !fs::exists(path))
        throw ParseError("no such file: " + path);
    if (dse->parsed())
      return cmd_dse(c);
    if (est->parsed())
      return cmd_estimate(c);
    if (sim->parsed())
      return cmd_simulate(c, so);
    if (val->parsed())
      return cmd_validate(c, so);
    if (sw->parsed())
      return cmd_sweep(c, so, axis, values);
    return cmd_codec_stats(input, kind, count, word_length, zero_fraction, c.seed);
  } catch (const InfeasibleError &e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
