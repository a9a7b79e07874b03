#pragma once

// Closed-form analytic cost model: per-phase NoP link latency and
// transmission time for four distributed training methods, compute latency,
// DRAM access time, per-die SRAM peaks, energy, and a weak-scaling sweep.
//
// Conventions
//   - A "layer" is one Transformer block: an attention block followed by an
//     FFN block (up projection, GeLU, down projection) with residual adds.
//   - gamma = b_mini*s*h*elem_bytes/beta is the time to push one activation
//     tensor through one link; xi = h^2*elem_bytes/beta the same for a
//     weight-shaped tensor.
//   - Square-grid formulas are expressed in N and sqrt(N); the Hecaton method
//     additionally exposes a general rows x cols form in which every
//     all-gather of activations or gradients runs on column rings and every
//     reduce-scatter (plus the transposed re-gathers of saved activations in
//     the backward pass) runs on row rings.  On square grids the two forms
//     coincide.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hecaton/topology.hpp"

namespace hecaton {

enum class Method { FlatRing, TorusRing, Optimus, Hecaton };
enum class Phase { FwdAtten, FwdFFN, BwdAtten, BwdFFN };

constexpr std::array<Method, 4> kAllMethods{Method::FlatRing, Method::TorusRing,
                                            Method::Optimus, Method::Hecaton};
constexpr std::array<Phase, 4> kAllPhases{Phase::FwdAtten, Phase::FwdFFN,
                                          Phase::BwdAtten, Phase::BwdFFN};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::FlatRing: return "flat_ring";
    case Method::TorusRing: return "torus_ring";
    case Method::Optimus: return "optimus";
    case Method::Hecaton: return "hecaton";
  }
  return "?";
}

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::FwdAtten: return "fwd_atten";
    case Phase::FwdFFN: return "fwd_ffn";
    case Phase::BwdAtten: return "bwd_atten";
    case Phase::BwdFFN: return "bwd_ffn";
  }
  return "?";
}

inline bool is_forward(Phase p) { return p == Phase::FwdAtten || p == Phase::FwdFFN; }
inline bool is_ffn(Phase p) { return p == Phase::FwdFFN || p == Phase::BwdFFN; }

/// A method was asked to run on a die layout it does not support.
struct LayoutError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct WorkloadParams {
  std::int64_t batch = 1024;      // samples per training iteration (b)
  std::int64_t seq = 1024;        // tokens per sample (s)
  std::int64_t hidden = 2048;     // model width (h)
  std::int64_t layers = 22;       // Transformer blocks
  std::int64_t heads = 16;        // attention heads
  std::int64_t expansion = 4;     // FFN intermediate width / h
  std::int64_t elem_bytes = 2;    // modeled element width on wires and in buffers
  double softmax_scale = 0.0;     // 0 = default 1/sqrt(head_dim)
};

struct HardwareParams {
  int grid_rows = 4;
  int grid_cols = 4;
  LinkParams link;                               // D2D alpha/beta
  int dram_channels = 16;                        // c
  double dram_channel_Bps = 51.2e9;              // beta_D, per channel
  std::int64_t weight_buffer_bytes = 8LL << 20;  // B_W per die
  std::int64_t activation_buffer_bytes = 8LL << 20;  // B_A per die
  double per_die_flops = 819.2e9;  // 512 MAC lanes x 2 FLOP x 0.8 GHz
  int array_rows = 32;             // MAC array alignment granule (output rows)
  int array_cols = 32;             // MAC array alignment granule (output cols)
  bool model_utilization = true;   // false = ideal utilization 1.0
  double nop_pj_per_bit = 0.5;     // D2D transfer energy
  double dram_pj_per_bit = 19.0;   // DRAM access energy
  double compute_pj_per_flop = 1.0;
  int num_dies() const { return grid_rows * grid_cols; }
  double dram_total_Bps() const { return dram_channels * dram_channel_Bps; }
};

/// Per-link transfer-time units for one mini-batch.
struct Coefficients {
  double gamma_s = 0.0;  // activation tensor: b_mini*s*h*elem_bytes / beta
  double xi_s = 0.0;     // weight-shaped tensor: h^2*elem_bytes / beta
};

inline Coefficients comm_coefficients(std::int64_t b_mini, const WorkloadParams& w,
                                      const LinkParams& link) {
  Coefficients c;
  const double eb = static_cast<double>(w.elem_bytes);
  c.gamma_s = static_cast<double>(b_mini) * w.seq * w.hidden * eb / link.beta_Bps;
  c.xi_s = static_cast<double>(w.hidden) * w.hidden * eb / link.beta_Bps;
  return c;
}

/// Symbolic per-phase NoP cost: link latency = alpha_coeff * alpha,
/// transmission = gamma_coeff * gamma + xi_coeff * xi.
struct NopCoeffs {
  double alpha = 0.0;
  double gamma = 0.0;
  double xi = 0.0;
};

struct NopCost {
  double link_s = 0.0;
  double transmission_s = 0.0;
  double total() const { return link_s + transmission_s; }
};

inline bool is_perfect_square(std::int64_t n) {
  if (n < 1) return false;
  const auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return r * r == n;
}

inline bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline void check_layout(Method m, std::int64_t n_dies) {
  if (n_dies < 1) throw LayoutError("die count must be >= 1");
  switch (m) {
    case Method::FlatRing:
      if (n_dies % 2 != 0)
        throw LayoutError("flat_ring requires an even number of dies");
      break;
    case Method::TorusRing:
      if (!is_perfect_square(n_dies))
        throw LayoutError("torus_ring requires a square number of dies");
      break;
    case Method::Optimus:
      if (!is_perfect_square(n_dies) || !is_power_of_two(n_dies))
        throw LayoutError("optimus requires a square power-of-two number of dies");
      break;
    case Method::Hecaton:
      if (!is_perfect_square(n_dies))
        throw LayoutError(
            "hecaton closed form requires a square die count; use the rows x cols form");
      break;
  }
}

/// Closed-form per-phase NoP coefficients for a square arrangement of n_dies.
inline NopCoeffs nop_coeffs(Method m, Phase p, std::int64_t n_dies) {
  check_layout(m, n_dies);
  const double N = static_cast<double>(n_dies);
  const double rt = std::sqrt(N);  // exact for perfect squares
  const bool fwd = is_forward(p);
  NopCoeffs c;
  switch (m) {
    case Method::FlatRing:
      c.alpha = (fwd ? 2.0 : 3.0) * (N - 1.0);
      c.gamma = (fwd ? 2.0 : 3.0) * (N - 1.0) / N;
      break;
    case Method::TorusRing:
      c.alpha = (fwd ? 4.0 : 6.0) * (N - rt);
      c.gamma = fwd ? (N - 1.0) / N : 3.0 * (N - 1.0) / (2.0 * N);
      break;
    case Method::Optimus: {
      c.alpha = (fwd ? 4.0 : 12.0) * (N - rt);
      const double f = std::log2(N) / (2.0 * rt);
      switch (p) {
        case Phase::FwdAtten: c.gamma = 2.0 * f; c.xi = 4.0 * f; break;
        case Phase::FwdFFN:   c.gamma = 5.0 * f; c.xi = 8.0 * f; break;
        case Phase::BwdAtten: c.gamma = 4.0 * f; c.xi = 8.0 * f; break;
        case Phase::BwdFFN:   c.gamma = 10.0 * f; c.xi = 16.0 * f; break;
      }
      break;
    }
    case Method::Hecaton: {
      c.alpha = (fwd ? 8.0 : 12.0) * (rt - 1.0);
      double units = 0.0;
      switch (p) {
        case Phase::FwdAtten: units = 6.0; break;
        case Phase::FwdFFN:   units = 10.0; break;
        case Phase::BwdAtten: units = 8.0; break;
        case Phase::BwdFFN:   units = 15.0; break;
      }
      c.gamma = units * (rt - 1.0) / N;
      break;
    }
  }
  return c;
}

inline NopCost evaluate(const NopCoeffs& c, const Coefficients& coef,
                        const LinkParams& link) {
  NopCost out;
  out.link_s = c.alpha * link.alpha_s;
  out.transmission_s = c.gamma * coef.gamma_s + c.xi * coef.xi_s;
  return out;
}

/// Square-grid per-phase NoP cost (link latency, transmission time).
inline NopCost nop_cost(Method m, Phase p, std::int64_t n_dies, const Coefficients& coef,
                        const LinkParams& link) {
  return evaluate(nop_coeffs(m, p, n_dies), coef, link);
}

// ---------------------------------------------------------------------------
// Hecaton on a general rows x cols grid.
//
// Per-phase ring passes and activation-volume units (in gamma) by axis, with
// e = FFN expansion.  Column rings have `rows` members, row rings `cols`.
//   unit        fwd gamma (col,row)   fwd passes   bwd gamma (col,row)  bwd passes
//   attention   (2, 4)                (2, 2)       (4, 4)               (2, 4)
//   ffn up      (1, e)                (1, 1)       (e, 2)               (1, 2)
//   ffn down    (e, 1)                (1, 1)       (1, 2e)              (1, 2)
// Squares reproduce the closed form exactly: fwd FFN = (1+e)+(e+1) = 10 units
// at e=4, attention fwd = 6, backward 8 and 15.
// ---------------------------------------------------------------------------

/// Sub-layer cost granule used by the fusion scheduler.
enum class UnitKind { Atten, FfnUp, FfnDown };

struct AxisUnits {
  double col = 0.0;  // gamma units moved on column rings (length = rows)
  double row = 0.0;  // gamma units moved on row rings (length = cols)
  int col_passes = 0;
  int row_passes = 0;
};

inline AxisUnits hecaton_axis_units(UnitKind u, bool forward, std::int64_t expansion) {
  const double e = static_cast<double>(expansion);
  switch (u) {
    case UnitKind::Atten:
      return forward ? AxisUnits{2.0, 4.0, 2, 2} : AxisUnits{4.0, 4.0, 2, 4};
    case UnitKind::FfnUp:
      return forward ? AxisUnits{1.0, e, 1, 1} : AxisUnits{e, 2.0, 1, 2};
    case UnitKind::FfnDown:
      return forward ? AxisUnits{e, 1.0, 1, 1} : AxisUnits{1.0, 2.0 * e, 1, 2};
  }
  return {};
}

inline AxisUnits hecaton_phase_axis_units(Phase p, std::int64_t expansion) {
  const bool fwd = is_forward(p);
  if (!is_ffn(p)) return hecaton_axis_units(UnitKind::Atten, fwd, expansion);
  AxisUnits up = hecaton_axis_units(UnitKind::FfnUp, fwd, expansion);
  AxisUnits dn = hecaton_axis_units(UnitKind::FfnDown, fwd, expansion);
  return {up.col + dn.col, up.row + dn.row, up.col_passes + dn.col_passes,
          up.row_passes + dn.row_passes};
}

inline NopCost hecaton_rect_cost_units(const AxisUnits& u, int rows, int cols,
                                       const Coefficients& coef, const LinkParams& link) {
  if (rows < 1 || cols < 1) throw LayoutError("grid dimensions must be >= 1");
  const double n = static_cast<double>(rows) * cols;
  NopCost out;
  out.transmission_s =
      (u.col * (rows - 1) + u.row * (cols - 1)) / n * coef.gamma_s;
  out.link_s = u.col_passes * ring_pass_link_latency(rows, link) +
               u.row_passes * ring_pass_link_latency(cols, link);
  return out;
}

/// Hecaton per-phase NoP cost on a general rows x cols grid.
inline NopCost hecaton_rect_cost(Phase p, int rows, int cols, std::int64_t expansion,
                                 const Coefficients& coef, const LinkParams& link) {
  return hecaton_rect_cost_units(hecaton_phase_axis_units(p, expansion), rows, cols,
                                 coef, link);
}

// ---------------------------------------------------------------------------
// Compute
// ---------------------------------------------------------------------------

/// Dense FLOPs of one phase of one Transformer block over `samples` samples.
/// Attention forward: QKV + output projections (8bsh^2) plus score/apply
/// matmuls (4bs^2h).  FFN forward: 4e*bsh^2.  Backward doubles the forward
/// count (gradient w.r.t. inputs and weights).
inline double phase_flops(Phase p, const WorkloadParams& w, std::int64_t samples) {
  const double b = static_cast<double>(samples);
  const double s = static_cast<double>(w.seq);
  const double h = static_cast<double>(w.hidden);
  const double e = static_cast<double>(w.expansion);
  const double fwd_atten = 8.0 * b * s * h * h + 4.0 * b * s * s * h;
  const double fwd_ffn = 4.0 * e * b * s * h * h;
  switch (p) {
    case Phase::FwdAtten: return fwd_atten;
    case Phase::FwdFFN: return fwd_ffn;
    case Phase::BwdAtten: return 2.0 * fwd_atten;
    case Phase::BwdFFN: return 2.0 * fwd_ffn;
  }
  return 0.0;
}

/// Fraction of a MAC-array granule actually filled by a tile dimension.
inline double alignment_efficiency(std::int64_t dim, int granule) {
  if (dim <= 0 || granule <= 1) return 1.0;
  const std::int64_t tiles = (dim + granule - 1) / granule;
  return static_cast<double>(dim) / (static_cast<double>(granule) * tiles);
}

/// Output-tile shape of the dominant per-die GEMM of a phase.  1D methods
/// split output channels N ways (per attention matrix: h/N); 2D methods
/// split both batch-token and channel axes.
struct TileShape {
  std::int64_t m = 1;
  std::int64_t n = 1;
};

inline TileShape characteristic_tile(Method mth, Phase p, const WorkloadParams& w,
                                     int rows, int cols, std::int64_t b_mini) {
  const std::int64_t bs = b_mini * w.seq;
  const std::int64_t n_dies = static_cast<std::int64_t>(rows) * cols;
  const std::int64_t width = is_ffn(p) ? w.expansion * w.hidden : w.hidden;
  TileShape t;
  switch (mth) {
    case Method::FlatRing:
    case Method::TorusRing:
      t.m = bs;
      t.n = std::max<std::int64_t>(1, width / n_dies);
      break;
    case Method::Optimus: {
      const auto rt = static_cast<std::int64_t>(
          std::llround(std::sqrt(static_cast<double>(n_dies))));
      t.m = std::max<std::int64_t>(1, bs / std::max<std::int64_t>(1, rt));
      t.n = std::max<std::int64_t>(1, width / std::max<std::int64_t>(1, rt));
      break;
    }
    case Method::Hecaton:
      t.m = bs;
      t.n = std::max<std::int64_t>(1, width / rows);
      break;
  }
  return t;
}

inline double utilization(Method mth, Phase p, const WorkloadParams& w,
                          const HardwareParams& hw, std::int64_t b_mini) {
  if (!hw.model_utilization) return 1.0;
  const TileShape t = characteristic_tile(mth, p, w, hw.grid_rows, hw.grid_cols, b_mini);
  return alignment_efficiency(t.m, hw.array_rows) *
         alignment_efficiency(t.n, hw.array_cols);
}

/// Phase compute latency across the whole grid (work split over all dies).
inline double compute_latency_s(Method mth, Phase p, const WorkloadParams& w,
                                const HardwareParams& hw, std::int64_t samples,
                                std::int64_t b_mini) {
  const double util = utilization(mth, p, w, hw, b_mini);
  return phase_flops(p, w, samples) /
         (hw.num_dies() * hw.per_die_flops * util);
}

// ---------------------------------------------------------------------------
// DRAM
// ---------------------------------------------------------------------------

inline double dram_latency_s(double bytes, const HardwareParams& hw) {
  return bytes / hw.dram_total_Bps();
}

/// Weight bytes of one Transformer block: QKV (3h^2) + output (h^2) + FFN up
/// and down (e*h^2 each).
inline double layer_weight_bytes(const WorkloadParams& w) {
  const double h = static_cast<double>(w.hidden);
  return (4.0 + 2.0 * w.expansion) * h * h * w.elem_bytes;
}

/// Activation bytes saved per Transformer block for the backward pass, per
/// sample: block input X, the QKV projections, the attention output A, the
/// FFN input, and the widened intermediate Z.
inline double saved_activation_bytes_per_sample(const WorkloadParams& w) {
  const double sh = static_cast<double>(w.seq) * w.hidden;
  return (6.0 + w.expansion) * sh * w.elem_bytes;
}

// ---------------------------------------------------------------------------
// SRAM peaks (per die)
// ---------------------------------------------------------------------------

struct SramPeaks {
  double weight_bytes = 0.0;
  double activation_bytes = 0.0;
};

/// Peak per-die buffer usage of one fused Transformer block.
///   Hecaton: weights shard 1/N; activation peak is the widest all-gathered
///     tensor, e*b_mini*s*h/min(rows,cols).
///   Flat/Torus ring (1D): weights shard 1/N, but full-width activations
///     (input and output, plus the die's slice of Z) must be resident.
///   Optimus: activation tiles 2/sqrt(N); the weight buffer additionally
///     holds broadcast segments from the other dies of the row/column,
///     growing the resident set by a factor (1 + sqrt(N)/2).
/// A single die has no sharding: weights of the whole block plus input and
/// the widest intermediate.
inline SramPeaks sram_peaks(Method mth, const WorkloadParams& w, int rows, int cols,
                            std::int64_t b_mini) {
  const double n = static_cast<double>(rows) * cols;
  const double pair_w = layer_weight_bytes(w);
  const double act = static_cast<double>(b_mini) * w.seq * w.hidden * w.elem_bytes;
  const double e = static_cast<double>(w.expansion);
  SramPeaks out;
  if (rows * cols == 1) {
    out.weight_bytes = pair_w;
    out.activation_bytes = (1.0 + e) * act;
    return out;
  }
  switch (mth) {
    case Method::Hecaton:
      out.weight_bytes = pair_w / n;
      out.activation_bytes = e * act / std::min(rows, cols);
      break;
    case Method::FlatRing:
    case Method::TorusRing:
      out.weight_bytes = pair_w / n;
      out.activation_bytes = (2.0 + e / n) * act;
      break;
    case Method::Optimus: {
      const double rt = std::sqrt(n);
      out.weight_bytes = (1.0 + rt / 2.0) * pair_w / n;
      out.activation_bytes = 2.0 * act / rt;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

struct EnergyBreakdown {
  double compute_J = 0.0;
  double nop_J = 0.0;
  double dram_J = 0.0;
  double total() const { return compute_J + nop_J + dram_J; }
};

inline EnergyBreakdown energy(double flops, double nop_bytes, double dram_bytes,
                              const HardwareParams& hw) {
  EnergyBreakdown e;
  e.compute_J = flops * hw.compute_pj_per_flop * 1e-12;
  e.nop_J = nop_bytes * 8.0 * hw.nop_pj_per_bit * 1e-12;
  e.dram_J = dram_bytes * 8.0 * hw.dram_pj_per_bit * 1e-12;
  return e;
}

/// Total bytes all dies put on the package interconnect during one phase:
/// N times the per-die transmission volume behind the closed-form time.
inline double nop_phase_bytes(Method mth, Phase p, std::int64_t n_dies,
                              const WorkloadParams& w, std::int64_t b_mini) {
  const NopCoeffs c = nop_coeffs(mth, p, n_dies);
  const double act = static_cast<double>(b_mini) * w.seq * w.hidden * w.elem_bytes;
  const double wt = static_cast<double>(w.hidden) * w.hidden * w.elem_bytes;
  return static_cast<double>(n_dies) * (c.gamma * act + c.xi * wt);
}

// ---------------------------------------------------------------------------
// Weak scaling
// ---------------------------------------------------------------------------

struct WeakScalingRow {
  int k = 1;
  std::int64_t hidden = 0;
  std::int64_t n_dies = 0;
  std::int64_t b_mini = 0;
  double compute_s = 0.0;        // per-iteration compute time
  double transmission_s = 0.0;   // per-iteration NoP transmission (no link term)
  double dram_s = 0.0;           // per-iteration activation-stash DRAM time
  double weight_peak_bytes = 0.0;
  double activation_peak_bytes = 0.0;
};

inline std::int64_t feasible_minibatch(Method mth, const WorkloadParams& w,
                                       const HardwareParams& hw) {
  const double per_sample =
      sram_peaks(mth, w, hw.grid_rows, hw.grid_cols, 1).activation_bytes;
  const auto fit = static_cast<std::int64_t>(
      std::floor(hw.activation_buffer_bytes / per_sample));
  return std::max<std::int64_t>(1, std::min(w.batch, fit));
}

/// Sums cost(samples) over the mini-batches of one iteration, with a ragged
/// final mini-batch when b_mini does not divide the batch.
template <typename F>
double sum_over_minibatches(std::int64_t batch, std::int64_t b_mini, F&& cost_of) {
  const std::int64_t full = batch / b_mini;
  const std::int64_t rest = batch % b_mini;
  double total = full > 0 ? full * cost_of(b_mini) : 0.0;
  if (rest > 0) total += cost_of(rest);
  return total;
}

/// Scales hidden width by k, the die grid by k per side (N by k^2), and DRAM
/// channels by k, then reports per-iteration compute, NoP transmission, and
/// activation DRAM time plus per-die SRAM peaks.
inline std::vector<WeakScalingRow> weak_scaling_series(Method mth,
                                                       const WorkloadParams& base_w,
                                                       const HardwareParams& base_hw,
                                                       const std::vector<int>& ks) {
  std::vector<WeakScalingRow> rows;
  rows.reserve(ks.size());
  for (int k : ks) {
    WorkloadParams w = base_w;
    w.hidden = base_w.hidden * k;
    w.heads = base_w.heads;  // head count kept; head width grows with h
    HardwareParams hw = base_hw;
    hw.grid_rows = base_hw.grid_rows * k;
    hw.grid_cols = base_hw.grid_cols * k;
    hw.dram_channels = base_hw.dram_channels * k;

    WeakScalingRow row;
    row.k = k;
    row.hidden = w.hidden;
    row.n_dies = hw.num_dies();
    row.b_mini = feasible_minibatch(mth, w, hw);

    const auto phase_sum = [&](auto&& per_phase) {
      return sum_over_minibatches(w.batch, row.b_mini, [&](std::int64_t samples) {
        double t = 0.0;
        for (Phase p : kAllPhases) t += per_phase(p, samples);
        return t;
      });
    };
    row.compute_s = w.layers * phase_sum([&](Phase p, std::int64_t samples) {
      return compute_latency_s(mth, p, w, hw, samples, row.b_mini);
    });
    row.transmission_s = w.layers * phase_sum([&](Phase p, std::int64_t samples) {
      const Coefficients coef = comm_coefficients(samples, w, hw.link);
      return nop_cost(mth, p, hw.num_dies(), coef, hw.link).transmission_s;
    });
    // Saved-activation traffic: written once in forward, read once in
    // backward.  Weight streaming is amortized once per iteration and tracked
    // by the scheduler, not here.
    const double act_bytes =
        2.0 * saved_activation_bytes_per_sample(w) * w.batch * w.layers;
    row.dram_s = dram_latency_s(act_bytes, hw);
    const SramPeaks peaks = sram_peaks(mth, w, hw.grid_rows, hw.grid_cols, row.b_mini);
    row.weight_peak_bytes = peaks.weight_bytes;
    row.activation_peak_bytes = peaks.activation_bytes;
    rows.push_back(row);
  }
  return rows;
}

/// Population coefficient of variation (stddev / mean).
inline double coefficient_of_variation(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();
  return std::sqrt(var) / mean;
}

}  // namespace hecaton
