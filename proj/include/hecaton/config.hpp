#pragma once

// Experiment configuration: a small INI-style reader with [hardware],
// [workload], and [experiment] sections, named presets for the shipped
// workload / package / DRAM-tier combinations, and the ExperimentSpec record
// the experiment runner consumes.
//
// Grammar (documented in README.md):
//   - `[section]` headers: hardware, workload (repeatable), experiment.
//   - `key = value` lines; `#` or `;` starts a comment; blank lines ignored.
//   - Unknown sections or keys, malformed numbers, and empty required lists
//     are reported as ConfigError with file:line diagnostics.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hecaton/costmodel.hpp"

namespace hecaton::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& file, int line, const std::string& message)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// One workload plus the die grid its training system uses.  Grid fields left
/// at zero inherit the [hardware] section's values.
struct WorkloadSpec {
  std::string name = "workload";
  WorkloadParams params;
  int grid_rows = 0;
  int grid_cols = 0;
  int dram_channels = 0;
};

/// Report order: the 2D method first so normalized columns lead each group.
inline std::vector<Method> default_methods() {
  return {Method::Hecaton, Method::FlatRing, Method::TorusRing, Method::Optimus};
}

struct ExperimentSpec {
  std::string id = "experiment";
  HardwareParams hardware;
  std::vector<WorkloadSpec> workloads;  // empty: all shipped presets
  std::vector<Method> methods = default_methods();
  std::vector<std::string> packages = {"standard"};
  std::string sweep = "none";  // none | scale-k | dram-bw | layout | link-alpha
  std::vector<std::string> sweep_values;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string format = "both";  // csv | json | both
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Llama-family workloads with successively doubled hidden sizes, each paired
/// with the die grid of its training system.  DRAM channels follow the
/// package perimeter: 2 * (rows + cols).
inline const std::vector<std::string>& workload_preset_names() {
  static const std::vector<std::string> names = {"llama-1.1b", "llama-7b",
                                                 "llama-70b", "llama-405b"};
  return names;
}

inline std::optional<WorkloadSpec> find_workload_preset(const std::string& name) {
  WorkloadSpec ws;
  ws.name = name;
  ws.params.batch = 1024;
  ws.params.seq = 1024;
  ws.params.expansion = 4;
  ws.params.elem_bytes = 2;
  if (name == "llama-1.1b") {
    ws.params.hidden = 2048;
    ws.params.layers = 22;
    ws.grid_rows = ws.grid_cols = 4;
  } else if (name == "llama-7b") {
    ws.params.hidden = 4096;
    ws.params.layers = 32;
    ws.grid_rows = ws.grid_cols = 8;
  } else if (name == "llama-70b") {
    ws.params.hidden = 8192;
    ws.params.layers = 80;
    ws.grid_rows = ws.grid_cols = 16;
  } else if (name == "llama-405b") {
    ws.params.hidden = 16384;
    ws.params.layers = 126;
    ws.grid_rows = ws.grid_cols = 32;
  } else {
    return std::nullopt;
  }
  ws.params.heads = ws.params.hidden / 128;  // 128-wide heads throughout
  ws.dram_channels = 2 * (ws.grid_rows + ws.grid_cols);
  return ws;
}

inline std::vector<WorkloadSpec> all_workload_presets() {
  std::vector<WorkloadSpec> out;
  for (const std::string& n : workload_preset_names()) out.push_back(*find_workload_preset(n));
  return out;
}

/// D2D link packages: standard organic substrate vs advanced (silicon bridge)
/// with 8x the bandwidth; both use the same 10 ns hop latency.
inline std::optional<LinkParams> find_package_preset(const std::string& name) {
  if (name == "standard") return LinkParams{10e-9, 32e9};
  if (name == "advanced") return LinkParams{10e-9, 256e9};
  return std::nullopt;
}

/// Per-channel DRAM bandwidth tiers, bytes/second.
inline std::optional<double> find_dram_tier_Bps(const std::string& name) {
  if (name == "ddr4-3200") return 25.6e9;
  if (name == "ddr5-6400") return 51.2e9;
  if (name == "hbm2") return 307.2e9;
  return std::nullopt;
}

inline std::optional<Method> parse_method(std::string name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_' && c != ' ')
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "hecaton") return Method::Hecaton;
  if (key == "flatring") return Method::FlatRing;
  if (key == "torusring") return Method::TorusRing;
  if (key == "optimus") return Method::Optimus;
  return std::nullopt;
}

/// Hardware for one report row: the base [hardware] block with the package
/// link applied and the workload's grid/channel counts overriding when set.
inline HardwareParams hardware_for(const ExperimentSpec& spec, const WorkloadSpec& ws,
                                   const std::string& package) {
  HardwareParams hw = spec.hardware;
  if (const auto link = find_package_preset(package)) hw.link = *link;
  if (ws.grid_rows > 0) hw.grid_rows = ws.grid_rows;
  if (ws.grid_cols > 0) hw.grid_cols = ws.grid_cols;
  if (ws.dram_channels > 0) hw.dram_channels = ws.dram_channels;
  return hw;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct LineContext {
  const std::string& file;
  int line;
  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError(file, line, message);
  }
};

inline std::int64_t parse_int(const LineContext& ctx, const std::string& key,
                              const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    ctx.fail("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

inline double parse_double(const LineContext& ctx, const std::string& key,
                           const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    ctx.fail("key '" + key + "': expected a number, got '" + value + "'");
  }
}

inline bool parse_bool(const LineContext& ctx, const std::string& key,
                       const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  ctx.fail("key '" + key + "': expected a boolean, got '" + value + "'");
}

inline void apply_hardware_key(const LineContext& ctx, HardwareParams& hw,
                               const std::string& key, const std::string& value) {
  if (key == "grid_rows") hw.grid_rows = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "grid_cols") hw.grid_cols = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "package") {
    const auto link = find_package_preset(value);
    if (!link) ctx.fail("unknown package preset '" + value + "' (standard, advanced)");
    hw.link = *link;
  } else if (key == "link_alpha_s") hw.link.alpha_s = parse_double(ctx, key, value);
  else if (key == "link_beta_Bps") hw.link.beta_Bps = parse_double(ctx, key, value);
  else if (key == "dram") {
    const auto bw = find_dram_tier_Bps(value);
    if (!bw) ctx.fail("unknown DRAM tier '" + value + "' (ddr4-3200, ddr5-6400, hbm2)");
    hw.dram_channel_Bps = *bw;
  } else if (key == "dram_channels") hw.dram_channels = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "dram_channel_Bps") hw.dram_channel_Bps = parse_double(ctx, key, value);
  else if (key == "weight_buffer_bytes") hw.weight_buffer_bytes = parse_int(ctx, key, value);
  else if (key == "activation_buffer_bytes") hw.activation_buffer_bytes = parse_int(ctx, key, value);
  else if (key == "per_die_flops") hw.per_die_flops = parse_double(ctx, key, value);
  else if (key == "array_rows") hw.array_rows = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "array_cols") hw.array_cols = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "model_utilization") hw.model_utilization = parse_bool(ctx, key, value);
  else if (key == "nop_pj_per_bit") hw.nop_pj_per_bit = parse_double(ctx, key, value);
  else if (key == "dram_pj_per_bit") hw.dram_pj_per_bit = parse_double(ctx, key, value);
  else if (key == "compute_pj_per_flop") hw.compute_pj_per_flop = parse_double(ctx, key, value);
  else ctx.fail("unknown [hardware] key '" + key + "'");
}

inline void apply_workload_key(const LineContext& ctx, WorkloadSpec& ws,
                               const std::string& key, const std::string& value) {
  if (key == "preset") {
    const auto preset = find_workload_preset(value);
    if (!preset) ctx.fail("unknown workload preset '" + value + "'");
    ws = *preset;
  } else if (key == "name") ws.name = value;
  else if (key == "batch") ws.params.batch = parse_int(ctx, key, value);
  else if (key == "seq") ws.params.seq = parse_int(ctx, key, value);
  else if (key == "hidden") ws.params.hidden = parse_int(ctx, key, value);
  else if (key == "layers") ws.params.layers = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "heads") ws.params.heads = parse_int(ctx, key, value);
  else if (key == "expansion") ws.params.expansion = parse_int(ctx, key, value);
  else if (key == "elem_bytes") ws.params.elem_bytes = parse_int(ctx, key, value);
  else if (key == "grid_rows") ws.grid_rows = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "grid_cols") ws.grid_cols = static_cast<int>(parse_int(ctx, key, value));
  else if (key == "dram_channels") ws.dram_channels = static_cast<int>(parse_int(ctx, key, value));
  else ctx.fail("unknown [workload] key '" + key + "'");
}

inline void apply_experiment_key(const LineContext& ctx, ExperimentSpec& spec,
                                 const std::string& key, const std::string& value) {
  if (key == "id") spec.id = value;
  else if (key == "methods") {
    spec.methods.clear();
    for (const std::string& item : split_list(value)) {
      const auto m = parse_method(item);
      if (!m) ctx.fail("unknown method '" + item + "'");
      spec.methods.push_back(*m);
    }
    if (spec.methods.empty()) ctx.fail("key 'methods': list must not be empty");
  } else if (key == "packages") {
    spec.packages.clear();
    for (const std::string& item : split_list(value)) {
      if (!find_package_preset(item)) ctx.fail("unknown package preset '" + item + "'");
      spec.packages.push_back(item);
    }
    if (spec.packages.empty()) ctx.fail("key 'packages': list must not be empty");
  } else if (key == "sweep") {
    static const std::vector<std::string> axes = {"none", "scale-k", "dram-bw",
                                                  "layout", "link-alpha"};
    if (std::find(axes.begin(), axes.end(), value) == axes.end())
      ctx.fail("unknown sweep axis '" + value + "'");
    spec.sweep = value;
  } else if (key == "values") spec.sweep_values = split_list(value);
  else if (key == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(ctx, key, value));
  else if (key == "out") spec.out_dir = value;
  else if (key == "format") {
    if (value != "csv" && value != "json" && value != "both")
      ctx.fail("key 'format': got '" + value + "', expected csv, json, or both");
    spec.format = value;
  } else ctx.fail("unknown [experiment] key '" + key + "'");
}

}  // namespace detail

inline ExperimentSpec parse_experiment_text(const std::string& text,
                                            const std::string& filename = "<config>") {
  ExperimentSpec spec;
  enum class Section { None, Hardware, Workload, Experiment };
  Section section = Section::None;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const detail::LineContext ctx{filename, lineno};
    std::string line = raw;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (name == "hardware") section = Section::Hardware;
      else if (name == "workload") {
        section = Section::Workload;
        spec.workloads.emplace_back();
      } else if (name == "experiment") section = Section::Experiment;
      else ctx.fail("unknown section '[" + name + "]'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) ctx.fail("empty key");
    switch (section) {
      case Section::None:
        ctx.fail("key '" + key + "' outside any section");
      case Section::Hardware:
        detail::apply_hardware_key(ctx, spec.hardware, key, value);
        break;
      case Section::Workload:
        detail::apply_workload_key(ctx, spec.workloads.back(), key, value);
        break;
      case Section::Experiment:
        detail::apply_experiment_key(ctx, spec, key, value);
        break;
    }
  }
  if (spec.workloads.empty()) spec.workloads = all_workload_presets();
  return spec;
}

inline ExperimentSpec parse_experiment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_text(buffer.str(), path);
}

}  // namespace hecaton::config
