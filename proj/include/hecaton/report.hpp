#pragma once

// Report emission: flat rows with latency/energy breakdowns, SRAM peaks, and
// feasibility flags, serialized deterministically to CSV (one row per line)
// and JSON (nested breakdowns).  Within each (sweep value, package, workload)
// group the latency and energy columns are additionally normalized to the 2D
// method's row, which therefore reads exactly 1.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace hecaton::report {

struct ReportRow {
  // Identity.
  std::string experiment;
  std::string sweep = "none";
  std::string sweep_value = "-";
  std::string package_name = "standard";
  std::string workload;
  std::string method;
  int grid_rows = 0;
  int grid_cols = 0;
  std::int64_t n_dies = 0;

  // Plan.
  std::int64_t b_mini = 0;
  std::int64_t num_minibatches = 0;
  int fusion_groups = 0;
  bool feasible = true;             // layout valid and both buffers fit
  bool weight_overflow = false;
  bool activation_overflow = false;

  // Latency breakdown, seconds.
  double total_s = 0.0;
  double on_total_s = 0.0;
  double compute_s = 0.0;
  double nop_link_s = 0.0;
  double nop_transmission_s = 0.0;
  double dram_exposed_s = 0.0;
  double dram_busy_s = 0.0;
  double link_share = 0.0;  // nop_link / (nop_link + nop_transmission)

  // Energy breakdown, joules.
  double energy_total_J = 0.0;
  double energy_compute_J = 0.0;
  double energy_nop_J = 0.0;
  double energy_dram_J = 0.0;

  // Volumes and SRAM.
  double flops = 0.0;
  double nop_bytes = 0.0;
  double dram_bytes = 0.0;
  double weight_peak_bytes = 0.0;
  double activation_peak_bytes = 0.0;
  std::int64_t weight_capacity_bytes = 0;
  std::int64_t activation_capacity_bytes = 0;

  // Normalized columns (filled by normalize_rows / the specific experiment).
  double latency_vs_hecaton = 0.0;
  double energy_vs_hecaton = 0.0;
  double latency_vs_first = 0.0;  // weak scaling: vs the same method's first row
};

inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// Fill the *_vs_hecaton ratios: rows are grouped by (sweep_value, package,
/// workload) and divided by the 2D method's totals in the same group.  Rows
/// in groups without that method keep ratio 0.
inline void normalize_rows(std::vector<ReportRow>& rows) {
  for (ReportRow& row : rows) {
    for (const ReportRow& base : rows) {
      if (base.method == "hecaton" && base.sweep_value == row.sweep_value &&
          base.package_name == row.package_name && base.workload == row.workload) {
        if (base.total_s > 0.0) row.latency_vs_hecaton = row.total_s / base.total_s;
        if (base.energy_total_J > 0.0)
          row.energy_vs_hecaton = row.energy_total_J / base.energy_total_J;
        break;
      }
    }
  }
}

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "experiment", "sweep", "sweep_value", "package", "workload", "method",
      "grid_rows", "grid_cols", "n_dies", "b_mini", "num_minibatches",
      "fusion_groups", "feasible", "weight_overflow", "activation_overflow",
      "total_s", "on_total_s", "compute_s", "nop_link_s", "nop_transmission_s",
      "dram_exposed_s", "dram_busy_s", "link_share", "energy_total_J",
      "energy_compute_J", "energy_nop_J", "energy_dram_J", "flops", "nop_bytes",
      "dram_bytes", "weight_peak_bytes", "activation_peak_bytes",
      "weight_capacity_bytes", "activation_capacity_bytes",
      "latency_vs_hecaton", "energy_vs_hecaton", "latency_vs_first"};
  return cols;
}

inline std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  out += '\n';
  for (const ReportRow& r : rows) {
    std::vector<std::string> cells = {
        r.experiment, r.sweep, r.sweep_value, r.package_name, r.workload, r.method,
        std::to_string(r.grid_rows), std::to_string(r.grid_cols),
        std::to_string(r.n_dies), std::to_string(r.b_mini),
        std::to_string(r.num_minibatches), std::to_string(r.fusion_groups),
        std::to_string(r.feasible ? 1 : 0), std::to_string(r.weight_overflow ? 1 : 0),
        std::to_string(r.activation_overflow ? 1 : 0), format_g(r.total_s),
        format_g(r.on_total_s), format_g(r.compute_s), format_g(r.nop_link_s),
        format_g(r.nop_transmission_s), format_g(r.dram_exposed_s),
        format_g(r.dram_busy_s), format_g(r.link_share), format_g(r.energy_total_J),
        format_g(r.energy_compute_J), format_g(r.energy_nop_J),
        format_g(r.energy_dram_J), format_g(r.flops), format_g(r.nop_bytes),
        format_g(r.dram_bytes), format_g(r.weight_peak_bytes),
        format_g(r.activation_peak_bytes), std::to_string(r.weight_capacity_bytes),
        std::to_string(r.activation_capacity_bytes), format_g(r.latency_vs_hecaton),
        format_g(r.energy_vs_hecaton), format_g(r.latency_vs_first)};
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json row_to_json(const ReportRow& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  j["sweep"] = r.sweep;
  j["sweep_value"] = r.sweep_value;
  j["package"] = r.package_name;
  j["workload"] = r.workload;
  j["method"] = r.method;
  j["grid"] = {{"rows", r.grid_rows}, {"cols", r.grid_cols}, {"n_dies", r.n_dies}};
  j["plan"] = {{"b_mini", r.b_mini},
               {"num_minibatches", r.num_minibatches},
               {"fusion_groups", r.fusion_groups},
               {"feasible", r.feasible},
               {"weight_overflow", r.weight_overflow},
               {"activation_overflow", r.activation_overflow}};
  j["latency_s"] = {{"total", r.total_s},
                    {"on_total", r.on_total_s},
                    {"compute", r.compute_s},
                    {"nop_link", r.nop_link_s},
                    {"nop_transmission", r.nop_transmission_s},
                    {"dram_exposed", r.dram_exposed_s},
                    {"dram_busy", r.dram_busy_s},
                    {"link_share", r.link_share}};
  j["energy_J"] = {{"total", r.energy_total_J},
                   {"compute", r.energy_compute_J},
                   {"nop", r.energy_nop_J},
                   {"dram", r.energy_dram_J}};
  j["volumes"] = {{"flops", r.flops},
                  {"nop_bytes", r.nop_bytes},
                  {"dram_bytes", r.dram_bytes}};
  j["sram"] = {{"weight_peak_bytes", r.weight_peak_bytes},
               {"activation_peak_bytes", r.activation_peak_bytes},
               {"weight_capacity_bytes", r.weight_capacity_bytes},
               {"activation_capacity_bytes", r.activation_capacity_bytes}};
  j["normalized"] = {{"latency_vs_hecaton", r.latency_vs_hecaton},
                     {"energy_vs_hecaton", r.energy_vs_hecaton},
                     {"latency_vs_first", r.latency_vs_first}};
  return j;
}

inline std::string to_json(const std::string& experiment_id,
                           const std::vector<ReportRow>& rows,
                           std::uint64_t seed = 0) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_id;
  j["seed"] = seed;
  j["rows"] = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) j["rows"].push_back(row_to_json(r));
  return j.dump(2) + "\n";
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hecaton::report
