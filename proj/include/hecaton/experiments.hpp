#pragma once

// Experiment runners.  Each takes an ExperimentSpec and returns report rows:
//
//   - comparison:   methods x workloads x packages, full iteration costs.
//   - scale-k:      weak-scaling series (h, grid sides, DRAM channels all
//                   scaled together), per-method, normalized to k = 1.
//   - dram-bw:      DRAM bandwidth tiers swept per method/workload.
//   - link-alpha:   hop-latency sweep reporting the link share of NoP time.
//   - layout:       die-grid arrangements of a fixed die count (2D method).
//
// Also hosts the functional verification suite (distributed engine vs dense
// reference, with optional fault injection) and the communication cost-table
// printer used by the CLI.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hecaton/config.hpp"
#include "hecaton/engine.hpp"
#include "hecaton/oracle.hpp"
#include "hecaton/report.hpp"
#include "hecaton/scheduler.hpp"

namespace hecaton::experiments {

// ---------------------------------------------------------------------------
// Cost-model experiments
// ---------------------------------------------------------------------------

/// One report row from a full iteration cost.  Layout errors are reported as
/// infeasible rows rather than aborting the sweep.
inline report::ReportRow make_row(const std::string& experiment_id,
                                  const std::string& sweep,
                                  const std::string& sweep_value,
                                  const std::string& package,
                                  const config::WorkloadSpec& ws, Method mth,
                                  const HardwareParams& hw) {
  report::ReportRow r;
  r.experiment = experiment_id;
  r.sweep = sweep;
  r.sweep_value = sweep_value;
  r.package_name = package;
  r.workload = ws.name;
  r.method = method_name(mth);
  r.grid_rows = hw.grid_rows;
  r.grid_cols = hw.grid_cols;
  r.n_dies = hw.num_dies();
  r.weight_capacity_bytes = hw.weight_buffer_bytes;
  r.activation_capacity_bytes = hw.activation_buffer_bytes;

  scheduler::IterationCost cost;
  try {
    cost = scheduler::iteration_cost(mth, ws.params, hw);
  } catch (const LayoutError&) {
    r.feasible = false;
    return r;
  }
  r.b_mini = cost.minibatch.b_mini;
  r.num_minibatches = cost.minibatch.num_minibatches;
  r.fusion_groups = cost.num_fusion_groups;
  r.weight_overflow = cost.sram.weight_bytes > static_cast<double>(hw.weight_buffer_bytes);
  r.activation_overflow =
      cost.sram.activation_bytes > static_cast<double>(hw.activation_buffer_bytes);
  r.feasible = cost.weight_fits && cost.activation_fits && !r.weight_overflow &&
               !r.activation_overflow;
  r.total_s = cost.total_s;
  r.on_total_s = cost.on_total_s;
  r.compute_s = cost.compute_s;
  r.nop_link_s = cost.nop_link_s;
  r.nop_transmission_s = cost.nop_transmission_s;
  r.dram_exposed_s = cost.dram_exposed_s;
  r.dram_busy_s = cost.dram_busy_s;
  const double nop_total = cost.nop_link_s + cost.nop_transmission_s;
  r.link_share = nop_total > 0.0 ? cost.nop_link_s / nop_total : 0.0;
  r.energy_total_J = cost.energy_J.total();
  r.energy_compute_J = cost.energy_J.compute_J;
  r.energy_nop_J = cost.energy_J.nop_J;
  r.energy_dram_J = cost.energy_J.dram_J;
  r.flops = cost.flops;
  r.nop_bytes = cost.nop_bytes;
  r.dram_bytes = cost.dram_bytes;
  r.weight_peak_bytes = cost.sram.weight_bytes;
  r.activation_peak_bytes = cost.sram.activation_bytes;
  return r;
}

/// Full-cost comparison across methods, workloads, and link packages.
inline std::vector<report::ReportRow> run_comparison(const config::ExperimentSpec& spec) {
  std::vector<report::ReportRow> rows;
  for (const std::string& package : spec.packages) {
    for (const config::WorkloadSpec& ws : spec.workloads) {
      const HardwareParams hw = config::hardware_for(spec, ws, package);
      for (Method mth : spec.methods)
        rows.push_back(make_row(spec.id, "none", "-", package, ws, mth, hw));
    }
  }
  report::normalize_rows(rows);
  return rows;
}

/// Weak scaling: h -> k*h, grid sides -> k*sides, DRAM channels -> k*channels.
/// Reports the reduced latency model (compute + NoP transmission + activation
/// DRAM) and normalizes each method to its own k = 1 row.
inline std::vector<report::ReportRow> run_weak_scaling(const config::ExperimentSpec& spec) {
  std::vector<int> ks;
  for (const std::string& v : spec.sweep_values) ks.push_back(std::atoi(v.c_str()));
  if (ks.empty()) ks = {1, 2, 4, 8};

  const config::WorkloadSpec& ws = spec.workloads.front();
  const std::string& package = spec.packages.front();
  const HardwareParams base_hw = config::hardware_for(spec, ws, package);

  std::vector<report::ReportRow> rows;
  for (Method mth : spec.methods) {
    const std::vector<WeakScalingRow> series =
        weak_scaling_series(mth, ws.params, base_hw, ks);
    double first_total = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
      const WeakScalingRow& s = series[i];
      report::ReportRow r;
      r.experiment = spec.id;
      r.sweep = "scale-k";
      r.sweep_value = std::to_string(s.k);
      r.package_name = package;
      r.workload = ws.name;
      r.method = method_name(mth);
      r.grid_rows = base_hw.grid_rows * s.k;
      r.grid_cols = base_hw.grid_cols * s.k;
      r.n_dies = s.n_dies;
      r.b_mini = s.b_mini;
      r.compute_s = s.compute_s;
      r.nop_transmission_s = s.transmission_s;
      r.dram_busy_s = s.dram_s;
      r.on_total_s = s.compute_s + s.transmission_s;
      r.total_s = s.compute_s + s.transmission_s + s.dram_s;
      r.weight_peak_bytes = s.weight_peak_bytes;
      r.activation_peak_bytes = s.activation_peak_bytes;
      r.weight_capacity_bytes = base_hw.weight_buffer_bytes;
      r.activation_capacity_bytes = base_hw.activation_buffer_bytes;
      r.weight_overflow = s.weight_peak_bytes > static_cast<double>(base_hw.weight_buffer_bytes);
      r.activation_overflow =
          s.activation_peak_bytes > static_cast<double>(base_hw.activation_buffer_bytes);
      r.feasible = !r.weight_overflow && !r.activation_overflow;
      if (i == 0) first_total = r.total_s;
      r.latency_vs_first = first_total > 0.0 ? r.total_s / first_total : 0.0;
      rows.push_back(r);
    }
  }
  report::normalize_rows(rows);
  return rows;
}

/// DRAM bandwidth sweep.  Values are tier names (ddr4-3200, ddr5-6400, hbm2)
/// or explicit per-channel bytes/second.
inline std::vector<report::ReportRow> run_dram_sweep(const config::ExperimentSpec& spec) {
  std::vector<std::string> values = spec.sweep_values;
  if (values.empty()) values = {"ddr4-3200", "ddr5-6400", "hbm2"};
  const std::string& package = spec.packages.front();

  std::vector<report::ReportRow> rows;
  for (const std::string& value : values) {
    for (const config::WorkloadSpec& ws : spec.workloads) {
      HardwareParams hw = config::hardware_for(spec, ws, package);
      if (const auto tier = config::find_dram_tier_Bps(value)) {
        hw.dram_channel_Bps = *tier;
      } else {
        hw.dram_channel_Bps = std::atof(value.c_str());
      }
      for (Method mth : spec.methods)
        rows.push_back(make_row(spec.id, "dram-bw", value, package, ws, mth, hw));
    }
  }
  report::normalize_rows(rows);
  return rows;
}

/// Hop-latency sweep; each row's link_share column reports the share of NoP
/// time spent on per-hop latency rather than payload transmission.
inline std::vector<report::ReportRow> run_link_share(const config::ExperimentSpec& spec) {
  std::vector<std::string> values = spec.sweep_values;
  if (values.empty()) values = {"10e-9"};

  std::vector<report::ReportRow> rows;
  for (const std::string& value : values) {
    for (const std::string& package : spec.packages) {
      for (const config::WorkloadSpec& ws : spec.workloads) {
        HardwareParams hw = config::hardware_for(spec, ws, package);
        hw.link.alpha_s = std::atof(value.c_str());
        for (Method mth : spec.methods)
          rows.push_back(make_row(spec.id, "link-alpha", value, package, ws, mth, hw));
      }
    }
  }
  report::normalize_rows(rows);
  return rows;
}

/// Die-arrangement study at a fixed die count.  Values are "RxC" layouts; the
/// DRAM channel count is held fixed across layouts so only the interconnect
/// arrangement varies.
inline std::vector<report::ReportRow> run_layout_study(const config::ExperimentSpec& spec) {
  std::vector<std::string> values = spec.sweep_values;
  if (values.empty()) values = {"1x16", "2x8", "4x4", "8x2", "16x1"};
  const std::string& package = spec.packages.front();
  const config::WorkloadSpec& ws = spec.workloads.front();

  std::vector<report::ReportRow> rows;
  for (const std::string& value : values) {
    const std::size_t x = value.find('x');
    const int rows_n = std::atoi(value.substr(0, x).c_str());
    const int cols_n = x == std::string::npos ? 0 : std::atoi(value.substr(x + 1).c_str());
    HardwareParams hw = config::hardware_for(spec, ws, package);
    hw.grid_rows = rows_n;
    hw.grid_cols = cols_n;
    for (Method mth : spec.methods)
      rows.push_back(make_row(spec.id, "layout", value, package, ws, mth, hw));
  }
  report::normalize_rows(rows);
  return rows;
}

inline std::vector<report::ReportRow> run_experiment(const config::ExperimentSpec& spec) {
  if (spec.sweep == "scale-k") return run_weak_scaling(spec);
  if (spec.sweep == "dram-bw") return run_dram_sweep(spec);
  if (spec.sweep == "layout") return run_layout_study(spec);
  if (spec.sweep == "link-alpha") return run_link_share(spec);
  return run_comparison(spec);
}

// ---------------------------------------------------------------------------
// Functional verification
// ---------------------------------------------------------------------------

struct VerifyOptions {
  std::vector<std::pair<int, int>> grids = {{1, 1}, {2, 2}, {2, 4}, {4, 4}};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string fault_label;  // non-empty: skip this reduce-scatter in FFN fwd
  bool finite_difference = true;
};

struct VerifySummary {
  int checks = 0;
  int failures = 0;
  std::vector<std::string> failure_reports;
  bool ok() const { return failures == 0; }
  std::string first_failure() const {
    return failure_reports.empty() ? std::string() : failure_reports.front();
  }
};

namespace detail {

inline double rel_err(const Matrix& got, const Matrix& want) {
  const double denom = std::max(1.0, want.norm());
  return (got - want).norm() / denom;
}

struct VerifyRecorder {
  VerifySummary& summary;
  std::ostream* log;
  std::string context;
  void operator()(bool pass, const std::string& name, const std::string& detail) {
    ++summary.checks;
    const std::string line = name + " [" + context + "] " + detail;
    if (!pass) {
      ++summary.failures;
      summary.failure_reports.push_back(line);
    }
    if (log) *log << (pass ? "  ok   " : "  FAIL ") << line << "\n";
  }
};

}  // namespace detail

/// Runs the distributed engine against the dense reference on every grid and
/// seed: linear, FFN, and attention forward/backward at 1e-10 relative
/// tolerance, central finite-difference checks of engine gradients at 1e-5,
/// and a zero-NoP check on the single-die grid.  A non-empty fault label
/// (exact collective label, e.g. "fwd_ffn/down/scatter_out") skips that
/// reduce-scatter inside the FFN forward, which must surface as a reported
/// mismatch naming the label.
inline VerifySummary verify_engine(const VerifyOptions& opt = {},
                                   std::ostream* log = nullptr) {
  using namespace hecaton::engine;
  VerifySummary summary;

  const std::int64_t h = 32, f = 64, heads = 8, samples = 2, s = 6;
  const std::int64_t bs = samples * s;
  const double scale = default_softmax_scale(h, heads);

  for (const auto& [r, c] : opt.grids) {
    for (const std::uint64_t seed : opt.seeds) {
      char ctxbuf[64];
      std::snprintf(ctxbuf, sizeof(ctxbuf), "grid=%dx%d seed=%llu", r, c,
                    static_cast<unsigned long long>(seed));
      detail::VerifyRecorder check{summary, log, ctxbuf};
      std::srand(static_cast<unsigned>(1000 * seed + 10 * r + c));
      const DieGrid grid(r, c);

      char buf[160];

      // Linear layer.
      {
        const Matrix x = Matrix::Random(bs, h);
        const Matrix w = Matrix::Random(h, 24);
        const Matrix dy = Matrix::Random(bs, 24);
        EngineContext ctx(grid, 2);
        const DistActivation xd = shard_activation(x, LayoutKind::Normal, grid);
        const DistWeight wd = shard_weight(w, grid, Orientation::Transposed);
        const DistActivation y = forward_linear(ctx, xd, wd, "lin");
        double e = detail::rel_err(assemble_activation(y), x * w);
        std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        check(e < 1e-10, "linear forward", buf);

        const DistActivation dyd = shard_activation(dy, LayoutKind::Transposed, grid);
        const DistLinearGrads g = backward_linear(ctx, dyd, xd, wd, "lin");
        e = std::max(detail::rel_err(assemble_activation(g.dx), dy * w.transpose()),
                     detail::rel_err(assemble_like(wd, g.dw), x.transpose() * dy));
        std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        check(e < 1e-10, "linear backward", buf);
      }

      // FFN block (fault injection point).
      {
        const Matrix x = Matrix::Random(bs, h);
        const Matrix w1 = Matrix::Random(h, f);
        const Matrix w2 = Matrix::Random(f, h);
        const Matrix dy = Matrix::Random(bs, h);
        oracle::FfnSaved ref_saved;
        const Matrix y_ref = oracle::ffn_fwd(x, w1, w2, &ref_saved);
        const oracle::FfnGrads g_ref = oracle::ffn_bwd(dy, ref_saved, w1, w2);

        EngineContext ctx(grid, 2);
        ctx.fault_skip_reduce_scatter = opt.fault_label;
        const DistActivation xd = shard_activation(x, LayoutKind::Normal, grid);
        const DistWeight w1d = shard_weight(w1, grid, Orientation::Transposed);
        const DistWeight w2d = shard_weight(w2, grid, Orientation::Normal);
        DistFfnSaved saved;
        const DistActivation y = forward_ffn(ctx, xd, w1d, w2d, &saved);
        double e = detail::rel_err(assemble_activation(y), y_ref);
        if (opt.fault_label.empty()) {
          std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        } else {
          std::snprintf(buf, sizeof(buf), "rel=%.3e fault=%s", e, opt.fault_label.c_str());
        }
        check(e < 1e-10, "ffn forward", buf);

        ctx.fault_skip_reduce_scatter.clear();
        const DistActivation dyd = shard_activation(dy, LayoutKind::Normal, grid);
        const DistFfnGrads g = backward_ffn(ctx, dyd, saved, w1d, w2d);
        e = std::max({detail::rel_err(assemble_activation(g.dx), g_ref.dx),
                      detail::rel_err(assemble_like(w1d, g.dw1), g_ref.dw1),
                      detail::rel_err(assemble_like(w2d, g.dw2), g_ref.dw2)});
        std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        // Backward consumes the forward's saved tensors, so a fault upstream
        // propagates here as well; only assert on clean runs.
        if (opt.fault_label.empty()) check(e < 1e-10, "ffn backward", buf);
      }

      // Attention block.
      {
        const Matrix x = Matrix::Random(bs, h);
        oracle::AttenWeights w;
        w.wq = Matrix::Random(h, h);
        w.wk = Matrix::Random(h, h);
        w.wv = Matrix::Random(h, h);
        w.wo = Matrix::Random(h, h);
        const Matrix dy = Matrix::Random(bs, h);
        oracle::AttenSaved ref_saved;
        const Matrix y_ref = oracle::attention_fwd(x, w, heads, samples, scale, &ref_saved);
        const oracle::AttenGrads g_ref =
            oracle::attention_bwd(dy, ref_saved, w, heads, samples, scale);

        EngineContext ctx(grid, 2);
        DistAttenWeights wd;
        wd.wq = shard_weight(w.wq, grid, Orientation::Transposed);
        wd.wk = shard_weight(w.wk, grid, Orientation::Transposed);
        wd.wv = shard_weight(w.wv, grid, Orientation::Transposed);
        wd.wo = shard_weight(w.wo, grid, Orientation::Normal);
        const DistActivation xd = shard_activation(x, LayoutKind::Normal, grid);
        DistAttenSaved saved;
        const DistActivation y = forward_attention(ctx, xd, wd, heads, samples, scale, &saved);
        double e = detail::rel_err(assemble_activation(y), y_ref);
        std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        check(e < 1e-10, "attention forward", buf);

        const DistActivation dyd = shard_activation(dy, LayoutKind::Normal, grid);
        const DistAttenGrads g = backward_attention(ctx, dyd, saved, wd, heads, samples, scale);
        e = std::max({detail::rel_err(assemble_activation(g.dx), g_ref.dx),
                      detail::rel_err(assemble_like(wd.wq, g.dwq), g_ref.dw.wq),
                      detail::rel_err(assemble_like(wd.wk, g.dwk), g_ref.dw.wk),
                      detail::rel_err(assemble_like(wd.wv, g.dwv), g_ref.dw.wv),
                      detail::rel_err(assemble_like(wd.wo, g.dwo), g_ref.dw.wo)});
        std::snprintf(buf, sizeof(buf), "rel=%.3e", e);
        check(e < 1e-10, "attention backward", buf);

        // Single-die grids must move zero bytes over the package network.
        if (r == 1 && c == 1) {
          const std::int64_t bytes = ctx.critical_bytes_with_prefix("");
          std::snprintf(buf, sizeof(buf), "bytes=%lld", static_cast<long long>(bytes));
          check(bytes == 0, "single-die zero NoP traffic", buf);
        }
      }

      // Central finite differences against engine gradients (full block).
      if (opt.finite_difference && seed == opt.seeds.front()) {
        oracle::BlockWeights w;
        w.atten.wq = Matrix::Random(h, h);
        w.atten.wk = Matrix::Random(h, h);
        w.atten.wv = Matrix::Random(h, h);
        w.atten.wo = Matrix::Random(h, h);
        w.w1 = Matrix::Random(h, f);
        w.w2 = Matrix::Random(f, h);
        Matrix x = Matrix::Random(bs, h);
        const Matrix target = Matrix::Random(bs, h);

        const auto engine_loss = [&](const oracle::BlockWeights& wts, const Matrix& xin) {
          EngineContext ctx(grid, 2);
          const DistBlockWeights wd = shard_block_weights(wts, grid);
          const DistActivation xd = shard_activation(xin, LayoutKind::Normal, grid);
          const DistActivation y = forward_block(ctx, xd, wd, heads, samples, scale, nullptr);
          return dist_loss_value(y, shard_activation(target, y.kind, grid));
        };

        EngineContext ctx(grid, 2);
        const DistBlockWeights wd = shard_block_weights(w, grid);
        const DistActivation xd = shard_activation(x, LayoutKind::Normal, grid);
        DistBlockSaved saved;
        const DistActivation y = forward_block(ctx, xd, wd, heads, samples, scale, &saved);
        const DistActivation dyd = dist_loss_grad(y, shard_activation(target, y.kind, grid));
        const DistBlockGrads g = backward_block(ctx, dyd, saved, wd, heads, samples, scale);

        const double step = 1e-4;
        struct Probe {
          const char* name;
          Matrix* param;
          const std::vector<Matrix>* grad_tiles;
          const DistWeight* map_like;
          int i, j;
        };
        const std::vector<Probe> probes = {
            {"wq", &w.atten.wq, &g.dwq, &wd.atten.wq, 0, 1},
            {"wo", &w.atten.wo, &g.dwo, &wd.atten.wo, 2, 0},
            {"w1", &w.w1, &g.dw1, &wd.w1, 1, 3},
            {"w2", &w.w2, &g.dw2, &wd.w2, 0, 2},
        };
        const auto loss_now = [&] { return engine_loss(w, x); };
        for (const Probe& p : probes) {
          const double fd = oracle::central_difference(loss_now, *p.param, p.i, p.j, step);
          const double grad = assemble_like(*p.map_like, *p.grad_tiles)(p.i, p.j);
          const double err = std::abs(fd - grad) / std::max(1.0, std::abs(grad));
          std::snprintf(buf, sizeof(buf), "%s(%d,%d) fd=%.6e grad=%.6e rel=%.3e",
                        p.name, p.i, p.j, fd, grad, err);
          check(err < 1e-5, "finite difference dW", buf);
        }
        {
          const double fd = oracle::central_difference(loss_now, x, 1, 1, step);
          const double grad = assemble_activation(g.dx)(1, 1);
          const double err = std::abs(fd - grad) / std::max(1.0, std::abs(grad));
          std::snprintf(buf, sizeof(buf), "x(1,1) fd=%.6e grad=%.6e rel=%.3e", fd, grad, err);
          check(err < 1e-5, "finite difference dX", buf);
        }
      }
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Communication cost table
// ---------------------------------------------------------------------------

/// Prints the per-phase NoP cost coefficients: the closed-form expressions,
/// then their numeric values at each requested die count.
inline void print_cost_table(std::ostream& os, const std::vector<std::int64_t>& n_values) {
  struct Cell {
    const char* link;
    const char* transmission;
  };
  const char* phase_names[4] = {"fwd_atten", "fwd_ffn", "bwd_atten", "bwd_ffn"};
  const Cell cells[4][4] = {
      // flat_ring                torus_ring                     optimus                                 hecaton
      {{"2(N-1)a", "2(N-1)/N g"},
       {"4(N-rt)a", "(N-1)/N g"},
       {"4(N-rt)a", "f(2g+4x)"},
       {"8(rt-1)a", "6(rt-1)/N g"}},
      {{"2(N-1)a", "2(N-1)/N g"},
       {"4(N-rt)a", "(N-1)/N g"},
       {"4(N-rt)a", "f(5g+8x)"},
       {"8(rt-1)a", "10(rt-1)/N g"}},
      {{"3(N-1)a", "3(N-1)/N g"},
       {"6(N-rt)a", "3(N-1)/2N g"},
       {"12(N-rt)a", "f(4g+8x)"},
       {"12(rt-1)a", "8(rt-1)/N g"}},
      {{"3(N-1)a", "3(N-1)/N g"},
       {"6(N-rt)a", "3(N-1)/2N g"},
       {"12(N-rt)a", "f(10g+16x)"},
       {"12(rt-1)a", "15(rt-1)/N g"}},
  };

  os << "Per-phase NoP cost coefficients.\n"
     << "  a: hop latency; g = b*s*h*eb/beta; x = h^2*eb/beta;\n"
     << "  rt = sqrt(N); f = log2(N)/(2*sqrt(N)).\n\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-28s %-28s %-28s %-28s\n", "phase",
                "flat_ring", "torus_ring", "optimus", "hecaton");
  os << "Closed forms (link | transmission):\n" << buf;
  for (int p = 0; p < 4; ++p) {
    std::string row;
    std::snprintf(buf, sizeof(buf), "%-10s ", phase_names[p]);
    row += buf;
    for (int m = 0; m < 4; ++m) {
      std::string cell = std::string(cells[p][m].link) + " | " + cells[p][m].transmission;
      std::snprintf(buf, sizeof(buf), "%-28s ", cell.c_str());
      row += buf;
    }
    os << row << "\n";
  }

  const Method method_order[4] = {Method::FlatRing, Method::TorusRing, Method::Optimus,
                                  Method::Hecaton};
  for (const std::int64_t n : n_values) {
    os << "\nN = " << n << " (alpha-hops, gamma-units, xi-units):\n";
    std::snprintf(buf, sizeof(buf), "%-10s %-22s %-22s %-22s %-22s\n", "phase",
                  "flat_ring", "torus_ring", "optimus", "hecaton");
    os << buf;
    for (int p = 0; p < 4; ++p) {
      std::string row;
      std::snprintf(buf, sizeof(buf), "%-10s ", phase_names[p]);
      row += buf;
      for (const Method m : method_order) {
        std::string cell;
        try {
          const NopCoeffs c = nop_coeffs(m, kAllPhases[static_cast<std::size_t>(p)], n);
          std::snprintf(buf, sizeof(buf), "%g, %.6g, %.6g", c.alpha, c.gamma, c.xi);
          cell = buf;
        } catch (const LayoutError&) {
          cell = "unsupported layout";
        }
        std::snprintf(buf, sizeof(buf), "%-22s ", cell.c_str());
        row += buf;
      }
      os << row << "\n";
    }
  }
}

}  // namespace hecaton::experiments
