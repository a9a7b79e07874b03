#pragma once

// Execution scheduler.  Plans one training iteration as a weight-stationary,
// group-major walk:
//
//   - Mini-batch planning: the largest per-minibatch sample count whose saved
//     activations fit the per-die activation buffer.
//   - Fusion planning: greedy packing of consecutive weight units (attention,
//     FFN up, FFN down — three per layer) into groups that fit the per-die
//     weight buffer.  A fused group's weights are loaded once per pass.
//   - Pipeline: every (group, minibatch, unit) step becomes one item of a
//     two-resource pipeline.  The off-package resource (DRAM) prefetches an
//     item's weights/activations before its on-package slot (compute + NoP)
//     may start, and both resources serve items in program order.  The
//     makespan uses the closed form
//         max over j of [ sum_{i<=j} off_i + sum_{i>=j} on_i ],
//     a deliberately different formulation from the event-driven simulator it
//     is checked against.
//
// DRAM traffic per iteration: weights stream three times (forward read,
// transposed backward read, gradient write-back); saved activations are
// written once in the forward pass and read once in the backward pass; a
// group boundary additionally costs a forward re-read of the boundary
// activation and a backward write+read of the boundary gradient per
// mini-batch, because the producing group has already moved on.  The loss and
// input edges of the stack are not modeled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hecaton/costmodel.hpp"

namespace hecaton::scheduler {

// ---------------------------------------------------------------------------
// Mini-batch planning
// ---------------------------------------------------------------------------

struct MinibatchPlan {
  std::int64_t b_mini = 1;
  std::int64_t num_minibatches = 1;
  bool fits = true;  // false: even one sample overflows the activation buffer
};

inline MinibatchPlan plan_minibatches(Method mth, const WorkloadParams& w,
                                      const HardwareParams& hw) {
  const double per_sample =
      sram_peaks(mth, w, hw.grid_rows, hw.grid_cols, 1).activation_bytes;
  MinibatchPlan plan;
  const double fit = std::floor(static_cast<double>(hw.activation_buffer_bytes) / per_sample);
  plan.fits = fit >= 1.0;
  plan.b_mini = std::max<std::int64_t>(
      1, std::min(w.batch, static_cast<std::int64_t>(fit)));
  plan.num_minibatches = (w.batch + plan.b_mini - 1) / plan.b_mini;
  return plan;
}

// ---------------------------------------------------------------------------
// Weight-fusion planning
// ---------------------------------------------------------------------------

struct WeightUnit {
  int layer = 0;
  UnitKind kind = UnitKind::Atten;
  std::int64_t dense_bytes = 0;    // whole-grid weight bytes of the unit
  std::int64_t per_die_bytes = 0;  // resident bytes per die while active
};

struct FusionGroup {
  int first = 0;  // inclusive unit indices into FusionPlan::units
  int last = 0;
  std::int64_t dense_bytes = 0;
  std::int64_t per_die_bytes = 0;
};

struct FusionPlan {
  std::vector<WeightUnit> units;  // 3 per layer, forward order
  std::vector<FusionGroup> groups;
  std::vector<int> group_of;  // unit index -> group index
  bool fits = true;           // false: some single unit overflows the buffer
};

/// Dense weight bytes of one unit: attention holds the three projections plus
/// the output matrix (4h^2), each FFN linear holds e*h^2.
inline std::int64_t unit_dense_bytes(UnitKind kind, const WorkloadParams& w) {
  const std::int64_t h2 = w.hidden * w.hidden;
  return (kind == UnitKind::Atten ? 4 : w.expansion) * h2 * w.elem_bytes;
}

/// Greedy fusion: walk the 3*layers units in forward order and extend the
/// current group while it still fits the per-die weight buffer.  Groups may
/// span layer boundaries.  The per-die residency of a unit is its 1/N shard;
/// the broadcast-replicating method additionally keeps (sqrt(N)/2)x segments
/// from the other dies of its row or column resident.
inline FusionPlan plan_fusion(Method mth, const WorkloadParams& w,
                              const HardwareParams& hw) {
  const std::int64_t n = hw.num_dies();
  double residency_factor = 1.0;
  if (mth == Method::Optimus)
    residency_factor = 1.0 + std::sqrt(static_cast<double>(n)) / 2.0;

  FusionPlan plan;
  for (int l = 0; l < w.layers; ++l) {
    for (UnitKind kind : {UnitKind::Atten, UnitKind::FfnUp, UnitKind::FfnDown}) {
      WeightUnit u;
      u.layer = l;
      u.kind = kind;
      u.dense_bytes = unit_dense_bytes(kind, w);
      u.per_die_bytes = static_cast<std::int64_t>(
          std::ceil(residency_factor * static_cast<double>(u.dense_bytes) / n));
      plan.units.push_back(u);
    }
  }

  plan.group_of.resize(plan.units.size(), 0);
  FusionGroup cur;
  bool open = false;
  const auto close = [&]() {
    if (open) plan.groups.push_back(cur);
    open = false;
  };
  for (int i = 0; i < static_cast<int>(plan.units.size()); ++i) {
    const WeightUnit& u = plan.units[static_cast<std::size_t>(i)];
    if (u.per_die_bytes > hw.weight_buffer_bytes) plan.fits = false;
    if (open && cur.per_die_bytes + u.per_die_bytes <= hw.weight_buffer_bytes) {
      cur.last = i;
      cur.dense_bytes += u.dense_bytes;
      cur.per_die_bytes += u.per_die_bytes;
    } else {
      close();
      cur = FusionGroup{i, i, u.dense_bytes, u.per_die_bytes};
      open = true;
    }
    plan.group_of[static_cast<std::size_t>(i)] =
        static_cast<int>(plan.groups.size());  // index it will get when closed
  }
  close();
  return plan;
}

// ---------------------------------------------------------------------------
// Two-resource pipeline
// ---------------------------------------------------------------------------

struct PipelineItem {
  double on_s = 0.0;   // on-package slot: compute + NoP
  double off_s = 0.0;  // off-package slot: DRAM, prefetched before on_s
};

/// Closed-form makespan of the prefetching two-resource pipeline: both
/// resources serve items in order and item k's on-slot waits for its own
/// off-slot.  The bottleneck is the item that splits the schedule into a
/// fully serial DRAM prefix and a fully serial compute suffix.
inline double flow_shop_makespan(const std::vector<PipelineItem>& items) {
  double total_on = 0.0;
  for (const PipelineItem& it : items) total_on += it.on_s;
  double best = 0.0;
  double prefix_off = 0.0;
  double suffix_on = total_on;
  for (const PipelineItem& it : items) {
    prefix_off += it.off_s;
    best = std::max(best, prefix_off + suffix_on);
    suffix_on -= it.on_s;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Per-unit on-package costs
// ---------------------------------------------------------------------------

/// NoP cost attributed to one weight unit of one phase pass.  The 2D method
/// has an exact per-unit decomposition on its rows x cols grid; the 1D ring
/// methods fire their FFN collective after the down linear going forward and
/// after the up linear going backward; the broadcast method splits its FFN
/// phase evenly between the two linears.
inline NopCost unit_nop_cost(Method mth, UnitKind kind, bool forward,
                             const WorkloadParams& w, const HardwareParams& hw,
                             std::int64_t samples) {
  const Coefficients coef = comm_coefficients(samples, w, hw.link);
  if (mth == Method::Hecaton) {
    return hecaton_rect_cost_units(hecaton_axis_units(kind, forward, w.expansion),
                                   hw.grid_rows, hw.grid_cols, coef, hw.link);
  }
  const bool ffn = kind != UnitKind::Atten;
  const Phase p = ffn ? (forward ? Phase::FwdFFN : Phase::BwdFFN)
                      : (forward ? Phase::FwdAtten : Phase::BwdAtten);
  const NopCost full = nop_cost(mth, p, hw.num_dies(), coef, hw.link);
  if (!ffn) return full;
  double share = 0.0;
  if (mth == Method::Optimus) {
    share = 0.5;
  } else {
    const UnitKind owner = forward ? UnitKind::FfnDown : UnitKind::FfnUp;
    share = kind == owner ? 1.0 : 0.0;
  }
  return {full.link_s * share, full.transmission_s * share};
}

/// Compute seconds attributed to one unit: the attention unit owns its whole
/// phase, the two FFN linears split theirs evenly.
inline double unit_compute_s(Method mth, UnitKind kind, bool forward,
                             const WorkloadParams& w, const HardwareParams& hw,
                             std::int64_t samples, std::int64_t b_mini) {
  const bool ffn = kind != UnitKind::Atten;
  const Phase p = ffn ? (forward ? Phase::FwdFFN : Phase::BwdFFN)
                      : (forward ? Phase::FwdAtten : Phase::BwdAtten);
  const double t = compute_latency_s(mth, p, w, hw, samples, b_mini);
  return ffn ? 0.5 * t : t;
}

/// Package-wide NoP wire bytes of one phase for one mini-batch.
inline double phase_nop_bytes(Method mth, Phase p, const WorkloadParams& w,
                              const HardwareParams& hw, std::int64_t samples) {
  if (mth == Method::Hecaton) {
    const AxisUnits u = hecaton_phase_axis_units(p, w.expansion);
    const double act = static_cast<double>(samples) * w.seq * w.hidden * w.elem_bytes;
    return (u.col * (hw.grid_rows - 1) + u.row * (hw.grid_cols - 1)) * act;
  }
  return nop_phase_bytes(mth, p, hw.num_dies(), w, samples);
}

// ---------------------------------------------------------------------------
// Iteration assembly
// ---------------------------------------------------------------------------

/// Activation widths in units of (samples * seq * hidden * elem_bytes).
inline std::int64_t unit_input_width(UnitKind kind, const WorkloadParams& w) {
  return kind == UnitKind::FfnDown ? w.expansion : 1;
}
inline std::int64_t unit_output_width(UnitKind kind, const WorkloadParams& w) {
  return kind == UnitKind::FfnUp ? w.expansion : 1;
}

/// Saved-activation widths stashed by (forward) / fetched by (backward) each
/// unit, in the same units.  Forward: attention saves its input, q/k/v, and
/// both block outputs' precursors (5), the up linear saves the widened
/// pre-activation (e), the down linear's output is saved as the next block's
/// input (1).  Backward mirrors the set at the consuming unit.
inline std::int64_t unit_stash_write_width(UnitKind kind, const WorkloadParams& w) {
  switch (kind) {
    case UnitKind::Atten: return 5;
    case UnitKind::FfnUp: return w.expansion;
    case UnitKind::FfnDown: return 1;
  }
  return 0;
}
inline std::int64_t unit_stash_read_width(UnitKind kind, const WorkloadParams& w) {
  switch (kind) {
    case UnitKind::Atten: return 5;
    case UnitKind::FfnUp: return 1;
    case UnitKind::FfnDown: return w.expansion;
  }
  return 0;
}

struct IterationItems {
  std::vector<PipelineItem> items;
  double compute_s = 0.0;
  double nop_link_s = 0.0;
  double nop_transmission_s = 0.0;
  double flops = 0.0;
  double nop_bytes = 0.0;
  double dram_bytes = 0.0;
};

/// Assemble the full iteration as pipeline items in program order:
/// forward pass group-major (each group loads weights once, then runs every
/// mini-batch through its units), then the backward pass with groups, units,
/// and mini-batches reversed.  Write-backs produced by an item drain in the
/// following item's off-slot; a terminal flush item drains the last ones.
inline IterationItems build_iteration_items(Method mth, const WorkloadParams& w,
                                            const HardwareParams& hw,
                                            const MinibatchPlan& mb,
                                            const FusionPlan& fusion) {
  IterationItems out;
  const double beta_d = hw.dram_total_Bps();
  const double act_unit = static_cast<double>(w.seq) * w.hidden * w.elem_bytes;

  std::vector<std::int64_t> batches;
  for (std::int64_t done = 0; done < w.batch; done += mb.b_mini)
    batches.push_back(std::min(mb.b_mini, w.batch - done));

  double pending_write_bytes = 0.0;  // produced by the previous item

  const auto push_item = [&](double prefetch_bytes, UnitKind kind, bool forward,
                             std::int64_t samples) {
    PipelineItem item;
    item.off_s = (pending_write_bytes + prefetch_bytes) / beta_d;
    out.dram_bytes += pending_write_bytes + prefetch_bytes;
    pending_write_bytes = 0.0;

    const double comp = unit_compute_s(mth, kind, forward, w, hw, samples, mb.b_mini);
    const NopCost nop = unit_nop_cost(mth, kind, forward, w, hw, samples);
    item.on_s = comp + nop.total();
    out.compute_s += comp;
    out.nop_link_s += nop.link_s;
    out.nop_transmission_s += nop.transmission_s;
    out.items.push_back(item);
  };

  const int ngroups = static_cast<int>(fusion.groups.size());

  // Forward pass.
  for (int g = 0; g < ngroups; ++g) {
    const FusionGroup& grp = fusion.groups[static_cast<std::size_t>(g)];
    for (std::size_t m = 0; m < batches.size(); ++m) {
      const std::int64_t bm = batches[m];
      for (int ui = grp.first; ui <= grp.last; ++ui) {
        const WeightUnit& u = fusion.units[static_cast<std::size_t>(ui)];
        double prefetch = 0.0;
        if (ui == grp.first && m == 0) prefetch += static_cast<double>(grp.dense_bytes);
        if (ui == grp.first)  // boundary (or model input) re-read
          prefetch += static_cast<double>(unit_input_width(u.kind, w) * bm) * act_unit;
        push_item(prefetch, u.kind, true, bm);
        pending_write_bytes +=
            static_cast<double>(unit_stash_write_width(u.kind, w) * bm) * act_unit;
      }
    }
  }

  // Backward pass: groups, mini-batches, and units reversed.
  for (int g = ngroups - 1; g >= 0; --g) {
    const FusionGroup& grp = fusion.groups[static_cast<std::size_t>(g)];
    for (std::size_t mi = 0; mi < batches.size(); ++mi) {
      const std::size_t m = batches.size() - 1 - mi;
      const std::int64_t bm = batches[m];
      for (int ui = grp.last; ui >= grp.first; --ui) {
        const WeightUnit& u = fusion.units[static_cast<std::size_t>(ui)];
        double prefetch = 0.0;
        if (ui == grp.last && mi == 0)  // transposed weight reload
          prefetch += static_cast<double>(grp.dense_bytes);
        if (ui == grp.last && g != ngroups - 1)  // boundary gradient re-read
          prefetch += static_cast<double>(unit_output_width(u.kind, w) * bm) * act_unit;
        prefetch += static_cast<double>(unit_stash_read_width(u.kind, w) * bm) * act_unit;
        push_item(prefetch, u.kind, false, bm);
        if (ui == grp.first && g != 0)  // boundary gradient hand-off
          pending_write_bytes +=
              static_cast<double>(unit_input_width(u.kind, w) * bm) * act_unit;
      }
    }
    pending_write_bytes += static_cast<double>(grp.dense_bytes);  // gradient write-back
  }

  // Terminal flush: drain the last write-backs.
  if (pending_write_bytes > 0.0) {
    out.items.push_back({0.0, pending_write_bytes / beta_d});
    out.dram_bytes += pending_write_bytes;
    pending_write_bytes = 0.0;
  }

  // Whole-iteration FLOP and NoP-byte tallies.
  for (std::int64_t bm : batches) {
    for (Phase p : kAllPhases) {
      out.flops += w.layers * phase_flops(p, w, bm);
      out.nop_bytes += w.layers * phase_nop_bytes(mth, p, w, hw, bm);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iteration cost
// ---------------------------------------------------------------------------

struct IterationCost {
  Method method = Method::Hecaton;
  MinibatchPlan minibatch;
  int num_fusion_groups = 0;
  bool weight_fits = true;
  bool activation_fits = true;
  double compute_s = 0.0;
  double nop_link_s = 0.0;
  double nop_transmission_s = 0.0;
  double on_total_s = 0.0;       // compute + NoP, serialized
  double dram_busy_s = 0.0;      // total off-package occupancy
  double dram_exposed_s = 0.0;   // makespan - on_total
  double total_s = 0.0;          // pipeline makespan
  double flops = 0.0;
  double nop_bytes = 0.0;
  double dram_bytes = 0.0;
  EnergyBreakdown energy_J;
  SramPeaks sram;  // analytic per-die peaks of one fused block (reporting)
};

/// Full per-iteration cost of one method on one workload/hardware point.
/// The square-layout constraints of the 1D and broadcast methods are
/// enforced; the 2D method accepts any rows x cols grid.
inline IterationCost iteration_cost(Method mth, const WorkloadParams& w,
                                    const HardwareParams& hw) {
  if (mth != Method::Hecaton) check_layout(mth, hw.num_dies());
  IterationCost out;
  out.method = mth;
  out.minibatch = plan_minibatches(mth, w, hw);
  const FusionPlan fusion = plan_fusion(mth, w, hw);
  out.num_fusion_groups = static_cast<int>(fusion.groups.size());
  out.weight_fits = fusion.fits;
  out.activation_fits = out.minibatch.fits;

  const IterationItems it = build_iteration_items(mth, w, hw, out.minibatch, fusion);
  out.compute_s = it.compute_s;
  out.nop_link_s = it.nop_link_s;
  out.nop_transmission_s = it.nop_transmission_s;
  out.on_total_s = it.compute_s + it.nop_link_s + it.nop_transmission_s;
  for (const PipelineItem& item : it.items) out.dram_busy_s += item.off_s;
  out.total_s = flow_shop_makespan(it.items);
  out.dram_exposed_s = out.total_s - out.on_total_s;
  out.flops = it.flops;
  out.nop_bytes = it.nop_bytes;
  out.dram_bytes = it.dram_bytes;
  out.energy_J = energy(it.flops, it.nop_bytes, it.dram_bytes, hw);
  out.sram = sram_peaks(mth, w, hw.grid_rows, hw.grid_cols, out.minibatch.b_mini);
  return out;
}

}  // namespace hecaton::scheduler
