/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sdse/dse.hpp"

namespace sdse {

/// Design choices by vertex and edge name. Metrics are not stored; they are
/// recomputed when the plan is loaded.
nlohmann::json plan_to_json(const ModelGraph &g, const DesignPlan &plan);

/// Rebuilds a plan with evaluate_plan. Throws ParseError on unknown names or malformed documents.
DesignPlan plan_from_json(const ModelGraph &g, const DeviceSpec &device, const nlohmann::json &doc,
                          const DseConfig &cfg = {});
DesignPlan load_plan(const ModelGraph &g, const DeviceSpec &device, const std::string &path,
                     const DseConfig &cfg = {});

nlohmann::json performance_to_json(const PerformanceReport &p);

/// Per-subgraph utilisation, bandwidth and timing plus the totals.
nlohmann::json report_to_json(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan);

/// Human-readable design report.
std::string format_report(const ModelGraph &g, const DeviceSpec &device, const DesignPlan &plan);

/// One JSON object per line. An unbounded score (no added bandwidth) is written as "inf".
std::string audit_jsonl(const std::vector<AuditRecord> &audit);
std::vector<AuditRecord> parse_audit_jsonl(const std::string &text);

struct BatchPoint {
  int64_t batch = 1;
  PerformanceReport performance;
};

std::string batch_sweep_csv(const std::vector<BatchPoint> &points);
std::string ratio_sweep_csv(const std::vector<SweepPoint> &points);

/// Gnuplot script that plots column `y` against column `x` of a CSV file with a header row.
std::string gnuplot_script(const std::string &csv_path, int x, int y, const std::string &xlabel,
                           const std::string &ylabel, const std::string &title);

void write_text(const std::string &path, const std::string &text);

} // namespace sdse
