#pragma once

// Functional distributed execution engine for a transformer block on a
// rectangular die grid.  Every tensor lives as per-die tiles; every transfer
// goes through the ring collectives and is recorded in a labeled
// communication trace, so numerical results and traffic can both be checked
// against the dense reference and the analytic cost model.
//
// Activation layouts (grid R x C, dense activations are [tokens x width]):
//   Normal     — die (i,j) holds token block i of R, width block j of C.
//   Transposed — die (i,j) holds token block j of C, width block i of R.
//   ColSliced  — die (i,j) holds all tokens of one width chunk: slice i of R,
//               then sub-block j of C inside that slice (the layout the fused
//               q/k/v reduce-scatter produces).
//
// A linear layer flips Normal <-> Transposed: it all-gathers the operand's
// token blocks along one grid axis, multiplies by the local weight tile, and
// reduce-scatters partial sums along the other axis, so the residual add is
// always local and a two-linear block restores its input layout.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hecaton/collectives.hpp"
#include "hecaton/math.hpp"
#include "hecaton/oracle.hpp"
#include "hecaton/tiling.hpp"
#include "hecaton/topology.hpp"
#include "hecaton/trace.hpp"

namespace hecaton::engine {

// ---------------------------------------------------------------------------
// Distributed tensors
// ---------------------------------------------------------------------------

enum class LayoutKind { Normal, Transposed, ColSliced };

struct DistActivation {
  LayoutKind kind = LayoutKind::Normal;
  std::int64_t rows = 0;  // dense token rows
  std::int64_t cols = 0;  // dense width
  int grid_rows = 1;
  int grid_cols = 1;
  std::vector<Matrix> tiles;  // row-major by die id

  Matrix& tile(int i, int j) { return tiles[static_cast<std::size_t>(i) * grid_cols + j]; }
  const Matrix& tile(int i, int j) const {
    return tiles[static_cast<std::size_t>(i) * grid_cols + j];
  }
};

struct TileRect {
  IndexRange rows;
  IndexRange cols;
};

/// Dense row/column ranges of the tile held by die (i, j).
inline TileRect activation_rect(const DistActivation& a, int i, int j) {
  switch (a.kind) {
    case LayoutKind::Normal:
      return {block_range(a.rows, a.grid_rows, i), block_range(a.cols, a.grid_cols, j)};
    case LayoutKind::Transposed:
      return {block_range(a.rows, a.grid_cols, j), block_range(a.cols, a.grid_rows, i)};
    case LayoutKind::ColSliced: {
      const IndexRange slice = block_range(a.cols, a.grid_rows, i);
      const IndexRange sub = block_range(slice.size(), a.grid_cols, j);
      return {IndexRange{0, a.rows},
              IndexRange{slice.begin + sub.begin, slice.begin + sub.end}};
    }
  }
  throw std::logic_error("activation_rect: bad layout kind");
}

inline DistActivation shard_activation(const Matrix& dense, LayoutKind kind,
                                       const DieGrid& grid) {
  DistActivation a;
  a.kind = kind;
  a.rows = dense.rows();
  a.cols = dense.cols();
  a.grid_rows = grid.rows();
  a.grid_cols = grid.cols();
  a.tiles.resize(static_cast<std::size_t>(grid.num_dies()));
  for (int i = 0; i < grid.rows(); ++i) {
    for (int j = 0; j < grid.cols(); ++j) {
      const TileRect r = activation_rect(a, i, j);
      a.tile(i, j) = dense.block(r.rows.begin, r.cols.begin, r.rows.size(), r.cols.size());
    }
  }
  return a;
}

inline Matrix assemble_activation(const DistActivation& a) {
  Matrix dense = Matrix::Zero(a.rows, a.cols);
  for (int i = 0; i < a.grid_rows; ++i) {
    for (int j = 0; j < a.grid_cols; ++j) {
      const TileRect r = activation_rect(a, i, j);
      const Matrix& t = a.tile(i, j);
      if (t.rows() != r.rows.size() || t.cols() != r.cols.size())
        throw std::invalid_argument("assemble_activation: tile shape mismatch");
      dense.block(r.rows.begin, r.cols.begin, r.rows.size(), r.cols.size()) = t;
    }
  }
  return dense;
}

/// Weight sharded by a TileMap.  Orientation::Transposed pairs with a Normal
/// input (contraction split across grid columns, output across grid rows);
/// Orientation::Normal pairs with a Transposed input.
struct DistWeight {
  TileMap map;
  std::vector<Matrix> tiles;  // row-major by die id

  Matrix& tile(int i, int j) { return tiles[static_cast<std::size_t>(i) * map.grid_cols + j]; }
  const Matrix& tile(int i, int j) const {
    return tiles[static_cast<std::size_t>(i) * map.grid_cols + j];
  }
};

inline DistWeight shard_weight(const Matrix& dense, const DieGrid& grid, Orientation orient) {
  DistWeight w;
  w.map = make_map(dense.rows(), dense.cols(), grid, orient);
  w.tiles = shard(dense, w.map);
  return w;
}

inline Matrix assemble_weight(const DistWeight& w) { return assemble(w.tiles, w.map); }

/// Reassemble gradient tiles that follow an existing weight's map.
inline Matrix assemble_like(const DistWeight& w, const std::vector<Matrix>& tiles) {
  return assemble(tiles, w.map);
}

// ---------------------------------------------------------------------------
// Engine context: grid, trace sink, buffer high-water marks, fault injection
// ---------------------------------------------------------------------------

/// High-water marks of per-die buffer use.  Activations count the largest
/// single tensor a die materializes; weights count a layer's resident tiles.
/// Weight-gradient tiles are accounted to neither (they stream to DRAM).
struct BufferMeter {
  std::int64_t weight_peak_bytes = 0;
  std::int64_t activation_peak_bytes = 0;

  void note_weight(std::int64_t b) { weight_peak_bytes = std::max(weight_peak_bytes, b); }
  void note_activation(std::int64_t b) {
    activation_peak_bytes = std::max(activation_peak_bytes, b);
  }
};

struct EngineContext {
  DieGrid grid;
  std::int64_t elem_bytes = 2;  // bytes per element for traffic accounting
  std::vector<std::pair<std::string, CommTrace>> traces;
  BufferMeter meter;
  /// Fault injection: label of one reduce-scatter whose reduction is skipped
  /// (each die keeps its own partial chunk and nothing is transferred).
  std::string fault_skip_reduce_scatter;

  explicit EngineContext(const DieGrid& g, std::int64_t eb = 2) : grid(g), elem_bytes(eb) {}

  void record(const std::string& label, CommTrace t) {
    traces.emplace_back(label, std::move(t));
  }

  void note_act(const Matrix& m) { meter.note_activation(matrix_bytes(m, elem_bytes)); }

  /// Sum of per-round worst-step payloads over all traces whose label starts
  /// with `prefix` — the transmission volume a label family puts on the wire.
  std::int64_t critical_bytes_with_prefix(const std::string& prefix) const {
    std::int64_t sum = 0;
    for (const auto& [label, trace] : traces)
      if (label.rfind(prefix, 0) == 0) sum += trace.critical_bytes();
    return sum;
  }

  /// Link-latency cost (seconds) of every trace under a label prefix.
  double cost_seconds_with_prefix(const std::string& prefix, const LinkParams& link) const {
    double t = 0.0;
    for (const auto& [label, trace] : traces)
      if (label.rfind(prefix, 0) == 0) t += trace.cost_seconds(link);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Axis-wide collective wrappers (all rings of one axis run concurrently)
// ---------------------------------------------------------------------------

inline Matrix vstack(const std::vector<Matrix>& blocks) {
  std::int64_t rows = 0;
  const std::int64_t cols = blocks.empty() ? 0 : blocks.front().cols();
  for (const Matrix& b : blocks) rows += b.rows();
  Matrix out(rows, cols);
  std::int64_t at = 0;
  for (const Matrix& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

inline Matrix hstack(const std::vector<Matrix>& blocks) {
  std::int64_t cols = 0;
  const std::int64_t rows = blocks.empty() ? 0 : blocks.front().rows();
  for (const Matrix& b : blocks) cols += b.cols();
  Matrix out(rows, cols);
  std::int64_t at = 0;
  for (const Matrix& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

struct AxisGather {
  /// blocks[r][k] = canonical member k's block on ring r (row index for the
  /// Row axis, column index for the Column axis); every ring member sees the
  /// same list after the gather.
  std::vector<std::vector<Matrix>> blocks;
  CommTrace trace;
};

/// All-gather one block per die along every ring of `axis` at once.
/// `block_of(i, j)` supplies die (i,j)'s contribution.
template <typename BlockOf>
AxisGather axis_all_gather(const EngineContext& ctx, RingAxis axis, BlockOf&& block_of) {
  const DieGrid& g = ctx.grid;
  const int nrings = axis == RingAxis::Row ? g.rows() : g.cols();
  const int len = axis == RingAxis::Row ? g.cols() : g.rows();
  AxisGather out;
  out.blocks.resize(static_cast<std::size_t>(nrings));
  for (int r = 0; r < nrings; ++r) {
    std::vector<Matrix> blocks(static_cast<std::size_t>(len));
    for (int k = 0; k < len; ++k)
      blocks[static_cast<std::size_t>(k)] =
          axis == RingAxis::Row ? block_of(r, k) : block_of(k, r);
    GatherResult res = all_gather(g.ring_for(axis, r), std::move(blocks), ctx.elem_bytes);
    out.blocks[static_cast<std::size_t>(r)] = std::move(res.blocks);
    out.trace.merge(res.trace);
  }
  return out;
}

struct AxisScatter {
  std::vector<Matrix> per_die;  // row-major by die id: the reduced chunk kept
  CommTrace trace;
};

/// Reduce-scatter along every ring of `axis` at once.  `chunk_of(i, j, c)` is
/// die (i,j)'s partial of chunk c; die (i,j) keeps the reduced chunk matching
/// its own position on the ring.  If `label` matches the context's fault tag
/// the reduction is skipped: each die keeps its own unreduced partial and no
/// traffic is recorded.
template <typename ChunkOf>
AxisScatter axis_reduce_scatter(EngineContext& ctx, RingAxis axis, const std::string& label,
                                ChunkOf&& chunk_of) {
  const DieGrid& g = ctx.grid;
  const int nrings = axis == RingAxis::Row ? g.rows() : g.cols();
  const int len = axis == RingAxis::Row ? g.cols() : g.rows();
  AxisScatter out;
  out.per_die.resize(static_cast<std::size_t>(g.num_dies()));
  const bool faulty =
      !ctx.fault_skip_reduce_scatter.empty() && ctx.fault_skip_reduce_scatter == label;
  for (int r = 0; r < nrings; ++r) {
    if (faulty) {
      for (int k = 0; k < len; ++k) {
        const int die = axis == RingAxis::Row ? g.die_id(r, k) : g.die_id(k, r);
        out.per_die[static_cast<std::size_t>(die)] =
            axis == RingAxis::Row ? chunk_of(r, k, k) : chunk_of(k, r, k);
      }
      continue;
    }
    std::vector<std::vector<Matrix>> contrib(static_cast<std::size_t>(len));
    for (int k = 0; k < len; ++k) {
      auto& member = contrib[static_cast<std::size_t>(k)];
      member.resize(static_cast<std::size_t>(len));
      for (int c = 0; c < len; ++c)
        member[static_cast<std::size_t>(c)] =
            axis == RingAxis::Row ? chunk_of(r, k, c) : chunk_of(k, r, c);
    }
    ReduceScatterResult res =
        reduce_scatter(g.ring_for(axis, r), std::move(contrib), ctx.elem_bytes);
    for (int k = 0; k < len; ++k) {
      const int die = axis == RingAxis::Row ? g.die_id(r, k) : g.die_id(k, r);
      out.per_die[static_cast<std::size_t>(die)] =
          std::move(res.chunks[static_cast<std::size_t>(k)]);
    }
    out.trace.merge(res.trace);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear layer (flips Normal <-> Transposed)
// ---------------------------------------------------------------------------

inline void check_linear_args(const DistActivation& x, const DistWeight& w,
                              const DieGrid& grid) {
  if (x.kind == LayoutKind::ColSliced)
    throw std::invalid_argument("linear: input must be Normal or Transposed");
  if (x.grid_rows != grid.rows() || x.grid_cols != grid.cols() ||
      w.map.grid_rows != grid.rows() || w.map.grid_cols != grid.cols())
    throw std::invalid_argument("linear: tensor grid does not match engine grid");
  if (x.cols != w.map.mat_rows)
    throw std::invalid_argument("linear: contraction width mismatch");
  const Orientation need =
      x.kind == LayoutKind::Normal ? Orientation::Transposed : Orientation::Normal;
  if (w.map.orient != need)
    throw std::invalid_argument(
        "linear: weight orientation must oppose the input layout");
}

/// y = x * w (+ nothing): all-gather the operand's token blocks along one
/// axis, multiply by the local weight tile, reduce-scatter token chunks of
/// the partial products along the other axis.  Output layout is flipped.
inline DistActivation forward_linear(EngineContext& ctx, const DistActivation& x,
                                     const DistWeight& w, const std::string& label) {
  check_linear_args(x, w, ctx.grid);
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t bs = x.rows;
  const bool normal_in = x.kind == LayoutKind::Normal;

  // Gather full-token operands along columns (Normal) or rows (Transposed).
  const RingAxis gather_axis = normal_in ? RingAxis::Column : RingAxis::Row;
  AxisGather gx = axis_all_gather(ctx, gather_axis, [&](int i, int j) { return x.tile(i, j); });
  const int n_operands = normal_in ? C : R;
  std::vector<Matrix> operand(static_cast<std::size_t>(n_operands));
  for (int r = 0; r < n_operands; ++r) {
    operand[static_cast<std::size_t>(r)] = vstack(gx.blocks[static_cast<std::size_t>(r)]);
    ctx.note_act(operand[static_cast<std::size_t>(r)]);
  }
  ctx.record(label + "/gather_x", std::move(gx.trace));

  // Local partial products.
  std::vector<Matrix> partial(static_cast<std::size_t>(ctx.grid.num_dies()));
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const Matrix& op = operand[static_cast<std::size_t>(normal_in ? j : i)];
      partial[static_cast<std::size_t>(ctx.grid.die_id(i, j))] = op * w.tile(i, j);
      ctx.note_act(partial[static_cast<std::size_t>(ctx.grid.die_id(i, j))]);
    }
  }

  // Reduce-scatter token chunks along the other axis.
  const RingAxis reduce_axis = normal_in ? RingAxis::Row : RingAxis::Column;
  const int chunk_parts = normal_in ? C : R;
  AxisScatter rs = axis_reduce_scatter(
      ctx, reduce_axis, label + "/scatter_out", [&](int i, int j, int c) -> Matrix {
        const IndexRange tok = block_range(bs, chunk_parts, c);
        return partial[static_cast<std::size_t>(ctx.grid.die_id(i, j))].middleRows(
            tok.begin, tok.size());
      });
  ctx.record(label + "/scatter_out", std::move(rs.trace));

  DistActivation y;
  y.kind = normal_in ? LayoutKind::Transposed : LayoutKind::Normal;
  y.rows = bs;
  y.cols = w.map.mat_cols;
  y.grid_rows = R;
  y.grid_cols = C;
  y.tiles = std::move(rs.per_die);
  return y;
}

struct DistLinearGrads {
  DistActivation dx;            // same layout as the forward input
  std::vector<Matrix> dw;       // per-die tiles following the weight's map
};

/// Backward of forward_linear given the saved input `x`:
/// all-gather dy's token blocks (other axis), all-gather x's token blocks
/// (same axis as forward), form the local weight-gradient tile, and
/// reduce-scatter dx partials back to x's layout.
inline DistLinearGrads backward_linear(EngineContext& ctx, const DistActivation& dy,
                                       const DistActivation& x, const DistWeight& w,
                                       const std::string& label) {
  check_linear_args(x, w, ctx.grid);
  const bool normal_in = x.kind == LayoutKind::Normal;
  const LayoutKind dy_kind = normal_in ? LayoutKind::Transposed : LayoutKind::Normal;
  if (dy.kind != dy_kind || dy.rows != x.rows || dy.cols != w.map.mat_cols)
    throw std::invalid_argument("backward_linear: dy layout/shape mismatch");
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t bs = x.rows;

  // Gather full-token dy (axis opposite to the forward operand gather).
  const RingAxis dy_axis = normal_in ? RingAxis::Row : RingAxis::Column;
  AxisGather gdy = axis_all_gather(ctx, dy_axis, [&](int i, int j) { return dy.tile(i, j); });
  const int n_dy = normal_in ? R : C;
  std::vector<Matrix> dyfull(static_cast<std::size_t>(n_dy));
  for (int r = 0; r < n_dy; ++r) {
    dyfull[static_cast<std::size_t>(r)] = vstack(gdy.blocks[static_cast<std::size_t>(r)]);
    ctx.note_act(dyfull[static_cast<std::size_t>(r)]);
  }
  ctx.record(label + "/gather_dy", std::move(gdy.trace));

  // Gather full-token x for the weight gradient (same axis as forward).
  const RingAxis x_axis = normal_in ? RingAxis::Column : RingAxis::Row;
  AxisGather gx = axis_all_gather(ctx, x_axis, [&](int i, int j) { return x.tile(i, j); });
  const int n_x = normal_in ? C : R;
  std::vector<Matrix> xfull(static_cast<std::size_t>(n_x));
  for (int r = 0; r < n_x; ++r) {
    xfull[static_cast<std::size_t>(r)] = vstack(gx.blocks[static_cast<std::size_t>(r)]);
    ctx.note_act(xfull[static_cast<std::size_t>(r)]);
  }
  ctx.record(label + "/gather_x_t", std::move(gx.trace));

  // Local weight gradient and dx partials.
  DistLinearGrads out;
  out.dw.resize(static_cast<std::size_t>(ctx.grid.num_dies()));
  std::vector<Matrix> partial(static_cast<std::size_t>(ctx.grid.num_dies()));
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      const Matrix& dyi = dyfull[static_cast<std::size_t>(normal_in ? i : j)];
      const Matrix& xi = xfull[static_cast<std::size_t>(normal_in ? j : i)];
      out.dw[d] = xi.transpose() * dyi;
      partial[d] = dyi * w.tile(i, j).transpose();
      ctx.note_act(partial[d]);
    }
  }

  // Reduce-scatter dx token chunks back to x's layout.
  const RingAxis dx_axis = normal_in ? RingAxis::Column : RingAxis::Row;
  const int chunk_parts = normal_in ? R : C;
  AxisScatter rs = axis_reduce_scatter(
      ctx, dx_axis, label + "/scatter_dx", [&](int i, int j, int c) -> Matrix {
        const IndexRange tok = block_range(bs, chunk_parts, c);
        return partial[static_cast<std::size_t>(ctx.grid.die_id(i, j))].middleRows(
            tok.begin, tok.size());
      });
  ctx.record(label + "/scatter_dx", std::move(rs.trace));

  out.dx.kind = x.kind;
  out.dx.rows = bs;
  out.dx.cols = x.cols;
  out.dx.grid_rows = R;
  out.dx.grid_cols = C;
  out.dx.tiles = std::move(rs.per_die);
  return out;
}

// ---------------------------------------------------------------------------
// FFN block:  y = gelu(x * w1) * w2 + x
// ---------------------------------------------------------------------------

struct DistFfnSaved {
  DistActivation x;     // Normal block input
  DistActivation zhat;  // Transposed pre-activation
};

inline DistActivation forward_ffn(EngineContext& ctx, const DistActivation& x,
                                  const DistWeight& w1, const DistWeight& w2,
                                  DistFfnSaved* saved = nullptr) {
  if (x.kind != LayoutKind::Normal)
    throw std::invalid_argument("forward_ffn: input must be Normal");
  DistActivation zhat = forward_linear(ctx, x, w1, "fwd_ffn/up");
  DistActivation z = zhat;
  for (Matrix& t : z.tiles) t = gelu(t);
  DistActivation y = forward_linear(ctx, z, w2, "fwd_ffn/down");
  for (std::size_t d = 0; d < y.tiles.size(); ++d) y.tiles[d] += x.tiles[d];  // residual
  if (saved) {
    saved->x = x;
    saved->zhat = std::move(zhat);
  }
  return y;
}

struct DistFfnGrads {
  DistActivation dx;
  std::vector<Matrix> dw1, dw2;
};

inline DistFfnGrads backward_ffn(EngineContext& ctx, const DistActivation& dy,
                                 const DistFfnSaved& saved, const DistWeight& w1,
                                 const DistWeight& w2) {
  DistActivation z = saved.zhat;
  for (Matrix& t : z.tiles) t = gelu(t);
  DistLinearGrads down = backward_linear(ctx, dy, z, w2, "bwd_ffn/down");
  DistActivation dzhat = std::move(down.dx);
  for (std::size_t d = 0; d < dzhat.tiles.size(); ++d)
    dzhat.tiles[d] = dzhat.tiles[d].cwiseProduct(gelu_grad(saved.zhat.tiles[d]));
  DistLinearGrads up = backward_linear(ctx, dzhat, saved.x, w1, "bwd_ffn/up");
  DistFfnGrads out;
  out.dx = std::move(up.dx);
  for (std::size_t d = 0; d < out.dx.tiles.size(); ++d) out.dx.tiles[d] += dy.tiles[d];
  out.dw1 = std::move(up.dw);
  out.dw2 = std::move(down.dw);
  return out;
}

// ---------------------------------------------------------------------------
// Attention block
// ---------------------------------------------------------------------------

struct DistAttenWeights {
  DistWeight wq, wk, wv;  // Transposed maps (pair with the Normal input)
  DistWeight wo;          // Normal map (pairs with the gathered head outputs)
};

struct DistAttenSaved {
  DistActivation x;        // Normal block input
  DistActivation q, k, v;  // ColSliced projections
  DistActivation a;        // ColSliced head outputs
};

/// A head occupies g = N/heads dies when heads < N; those dies must be
/// contiguous within one grid row so score reductions ride a row sub-ring.
inline std::int64_t head_span_dies(const DieGrid& grid, std::int64_t heads) {
  const std::int64_t n = grid.num_dies();
  if (heads % n == 0) return 1;
  if (n % heads != 0)
    throw std::invalid_argument("attention: heads and die count must divide one another");
  const std::int64_t g = n / heads;
  if (g > grid.cols() || grid.cols() % g != 0)
    throw std::invalid_argument(
        "attention: a head may only span dies within one grid row");
  return g;
}

inline void check_dist_attention(const EngineContext& ctx, const DistActivation& x,
                                 std::int64_t heads, std::int64_t samples) {
  if (x.kind != LayoutKind::Normal)
    throw std::invalid_argument("attention: input must be Normal");
  if (heads < 1 || samples < 1)
    throw std::invalid_argument("attention: bad heads/samples");
  if (x.cols % heads != 0)
    throw std::invalid_argument("attention: hidden width not divisible by heads");
  if (x.rows % samples != 0)
    throw std::invalid_argument("attention: token rows not divisible by samples");
  if (x.cols % ctx.grid.num_dies() != 0)
    throw std::invalid_argument("attention: hidden width not divisible by die count");
  head_span_dies(ctx.grid, heads);
}

namespace detail {

/// Local attention core over ColSliced q/k/v chunks.  When a head spans
/// g > 1 dies the raw scores (and, in backward, the probability gradients)
/// are all-reduced over the head's row sub-ring before the local math.
struct ScoreContext {
  std::int64_t heads = 1;
  std::int64_t samples = 1;
  double scale = 1.0;
  std::int64_t g = 1;  // dies per head
};

inline RingPath head_ring(const DieGrid& grid, int i, int j, std::int64_t g) {
  const int j0 = static_cast<int>((j / g) * g);
  std::vector<int> dies;
  dies.reserve(static_cast<std::size_t>(g));
  for (int t = 0; t < g; ++t) dies.push_back(grid.die_id(i, j0 + t));
  return grid.ring_over(dies);
}

/// Stacked per-sample score partials q_chunk * k_chunk^T for one die.
inline Matrix score_partial(const Matrix& qc, const Matrix& kc, std::int64_t samples) {
  const std::int64_t s = qc.rows() / samples;
  Matrix out(qc.rows(), s);
  for (std::int64_t b = 0; b < samples; ++b)
    out.middleRows(b * s, s) =
        qc.middleRows(b * s, s) * kc.middleRows(b * s, s).transpose();
  return out;
}

}  // namespace detail

inline DistActivation forward_attention_core(EngineContext& ctx, const DistActivation& q,
                                             const DistActivation& k,
                                             const DistActivation& v,
                                             const detail::ScoreContext& sc) {
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t s = q.rows / sc.samples;
  const std::int64_t d = q.cols / sc.heads;
  DistActivation a = q;  // same ColSliced geometry
  CommTrace score_trace;
  for (int i = 0; i < R; ++i) {
    if (sc.g == 1) {
      for (int j = 0; j < C; ++j) {
        const Matrix& qc = q.tile(i, j);
        const Matrix& kc = k.tile(i, j);
        const Matrix& vc = v.tile(i, j);
        Matrix& ac = a.tile(i, j);
        const std::int64_t local_heads = qc.cols() / d;
        for (std::int64_t b = 0; b < sc.samples; ++b) {
          for (std::int64_t t = 0; t < local_heads; ++t) {
            const auto qb = qc.block(b * s, t * d, s, d);
            const auto kb = kc.block(b * s, t * d, s, d);
            const auto vb = vc.block(b * s, t * d, s, d);
            const Matrix p = softmax_rows(qb * kb.transpose() * sc.scale);
            ctx.note_act(p);
            ac.block(b * s, t * d, s, d) = p * vb;
          }
        }
      }
      continue;
    }
    // One head per group of g dies: all-reduce the stacked score partials.
    for (int j0 = 0; j0 < C; j0 += static_cast<int>(sc.g)) {
      const RingPath ring = detail::head_ring(ctx.grid, i, j0, sc.g);
      std::vector<Matrix> partials(static_cast<std::size_t>(sc.g));
      for (int t = 0; t < sc.g; ++t)
        partials[static_cast<std::size_t>(t)] =
            detail::score_partial(q.tile(i, j0 + t), k.tile(i, j0 + t), sc.samples);
      AllReduceResult res = ring_all_reduce(ring, std::move(partials), ctx.elem_bytes);
      score_trace.merge(res.trace);
      Matrix p = softmax_rows(res.value * sc.scale);
      ctx.note_act(p);
      for (int t = 0; t < sc.g; ++t) {
        const Matrix& vc = v.tile(i, j0 + t);
        Matrix& ac = a.tile(i, j0 + t);
        for (std::int64_t b = 0; b < sc.samples; ++b)
          ac.middleRows(b * s, s).noalias() =
              p.middleRows(b * s, s) * vc.middleRows(b * s, s);
      }
    }
  }
  if (sc.g > 1) ctx.record("fwd_atten/scores_allreduce", std::move(score_trace));
  return a;
}

inline DistActivation forward_attention(EngineContext& ctx, const DistActivation& x,
                                        const DistAttenWeights& w, std::int64_t heads,
                                        std::int64_t samples, double scale,
                                        DistAttenSaved* saved = nullptr) {
  check_dist_attention(ctx, x, heads, samples);
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t h = x.cols;
  const std::int64_t bs = x.rows;
  if (scale == 0.0) scale = default_softmax_scale(h, heads);
  for (const DistWeight* wp : {&w.wq, &w.wk, &w.wv})
    if (wp->map.orient != Orientation::Transposed)
      throw std::invalid_argument("attention: q/k/v weights must be Transposed maps");
  if (w.wo.map.orient != Orientation::Normal)
    throw std::invalid_argument("attention: output weight must be a Normal map");

  // 1. Token all-gather down each column.
  AxisGather gx = axis_all_gather(ctx, RingAxis::Column, [&](int i, int j) { return x.tile(i, j); });
  std::vector<Matrix> xcol(static_cast<std::size_t>(C));
  for (int j = 0; j < C; ++j) {
    xcol[static_cast<std::size_t>(j)] = vstack(gx.blocks[static_cast<std::size_t>(j)]);
    ctx.note_act(xcol[static_cast<std::size_t>(j)]);
  }
  ctx.record("fwd_atten/gather_x", std::move(gx.trace));

  // 2. Local q/k/v partials, fused into one hidden-chunked reduce-scatter
  //    per row (a single ring pass carries all three projections).
  const std::size_t nd = static_cast<std::size_t>(ctx.grid.num_dies());
  std::vector<Matrix> pq(nd), pk(nd), pv(nd);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      const Matrix& op = xcol[static_cast<std::size_t>(j)];
      pq[d] = op * w.wq.tile(i, j);
      pk[d] = op * w.wk.tile(i, j);
      pv[d] = op * w.wv.tile(i, j);
      ctx.note_act(pq[d]);
    }
  }
  AxisScatter rsqkv = axis_reduce_scatter(
      ctx, RingAxis::Row, "fwd_atten/scatter_qkv", [&](int i, int j, int c) -> Matrix {
        const IndexRange slice = block_range(h, R, i);
        const IndexRange sub = block_range(slice.size(), C, c);
        const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
        Matrix fused(bs, 3 * sub.size());
        fused << pq[d].middleCols(sub.begin, sub.size()),
            pk[d].middleCols(sub.begin, sub.size()),
            pv[d].middleCols(sub.begin, sub.size());
        return fused;
      });
  ctx.record("fwd_atten/scatter_qkv", std::move(rsqkv.trace));

  DistActivation q, k, v;
  for (DistActivation* t : {&q, &k, &v}) {
    t->kind = LayoutKind::ColSliced;
    t->rows = bs;
    t->cols = h;
    t->grid_rows = R;
    t->grid_cols = C;
    t->tiles.resize(nd);
  }
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      const Matrix& fused = rsqkv.per_die[d];
      const std::int64_t wd = fused.cols() / 3;
      q.tile(i, j) = fused.leftCols(wd);
      k.tile(i, j) = fused.middleCols(wd, wd);
      v.tile(i, j) = fused.rightCols(wd);
    }
  }

  // 3. Local attention core (+ score all-reduce when a head spans g > 1 dies).
  detail::ScoreContext sc{heads, samples, scale, head_span_dies(ctx.grid, heads)};
  DistActivation a = forward_attention_core(ctx, q, k, v, sc);

  // 4. All-gather head outputs across each row (horizontal stacking).
  AxisGather ga = axis_all_gather(ctx, RingAxis::Row, [&](int i, int j) { return a.tile(i, j); });
  std::vector<Matrix> arow(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) {
    arow[static_cast<std::size_t>(i)] = hstack(ga.blocks[static_cast<std::size_t>(i)]);
    ctx.note_act(arow[static_cast<std::size_t>(i)]);
  }
  ctx.record("fwd_atten/gather_a", std::move(ga.trace));

  // 5. Output projection and token reduce-scatter down each column.
  std::vector<Matrix> po(nd);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      po[d] = arow[static_cast<std::size_t>(i)] * w.wo.tile(i, j);
      ctx.note_act(po[d]);
    }
  }
  AxisScatter rso = axis_reduce_scatter(
      ctx, RingAxis::Column, "fwd_atten/scatter_out", [&](int i, int j, int c) -> Matrix {
        const IndexRange tok = block_range(bs, R, c);
        return po[static_cast<std::size_t>(ctx.grid.die_id(i, j))].middleRows(tok.begin,
                                                                              tok.size());
      });
  ctx.record("fwd_atten/scatter_out", std::move(rso.trace));

  DistActivation y;
  y.kind = LayoutKind::Normal;
  y.rows = bs;
  y.cols = h;
  y.grid_rows = R;
  y.grid_cols = C;
  y.tiles = std::move(rso.per_die);
  for (std::size_t d = 0; d < y.tiles.size(); ++d) y.tiles[d] += x.tiles[d];  // residual
  if (saved) {
    saved->x = x;
    saved->q = std::move(q);
    saved->k = std::move(k);
    saved->v = std::move(v);
    saved->a = std::move(a);
  }
  return y;
}

struct DistAttenGrads {
  DistActivation dx;
  std::vector<Matrix> dwq, dwk, dwv, dwo;
};

/// Backward of the local attention core: returns dq/dk/dv chunk tiles.
/// With g > 1 the scores are re-reduced (recompute) and the probability
/// gradients need a second group all-reduce.
inline void backward_attention_core(EngineContext& ctx, const DistAttenSaved& saved,
                                    const DistActivation& da, const detail::ScoreContext& sc,
                                    DistActivation& dq, DistActivation& dk,
                                    DistActivation& dv) {
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t s = saved.q.rows / sc.samples;
  const std::int64_t d = saved.q.cols / sc.heads;
  dq = saved.q;
  dk = saved.q;
  dv = saved.q;
  CommTrace score_trace, dscore_trace;
  for (int i = 0; i < R; ++i) {
    if (sc.g == 1) {
      for (int j = 0; j < C; ++j) {
        const Matrix& qc = saved.q.tile(i, j);
        const Matrix& kc = saved.k.tile(i, j);
        const Matrix& vc = saved.v.tile(i, j);
        const Matrix& dac = da.tile(i, j);
        const std::int64_t local_heads = qc.cols() / d;
        for (std::int64_t b = 0; b < sc.samples; ++b) {
          for (std::int64_t t = 0; t < local_heads; ++t) {
            const auto qb = qc.block(b * s, t * d, s, d);
            const auto kb = kc.block(b * s, t * d, s, d);
            const auto vb = vc.block(b * s, t * d, s, d);
            const auto dab = dac.block(b * s, t * d, s, d);
            const Matrix p = softmax_rows(qb * kb.transpose() * sc.scale);
            const Matrix dp = dab * vb.transpose();
            dv.tile(i, j).block(b * s, t * d, s, d) = p.transpose() * dab;
            const Eigen::VectorXd rowsum = dp.cwiseProduct(p).rowwise().sum();
            Matrix shifted = dp;
            shifted.colwise() -= rowsum;
            const Matrix ds = p.cwiseProduct(shifted) * sc.scale;
            dq.tile(i, j).block(b * s, t * d, s, d) = ds * kb;
            dk.tile(i, j).block(b * s, t * d, s, d) = ds.transpose() * qb;
          }
        }
      }
      continue;
    }
    for (int j0 = 0; j0 < C; j0 += static_cast<int>(sc.g)) {
      const RingPath ring = detail::head_ring(ctx.grid, i, j0, sc.g);
      // Recompute the reduced scores, then reduce the probability gradients.
      std::vector<Matrix> sparts(static_cast<std::size_t>(sc.g));
      for (int t = 0; t < sc.g; ++t)
        sparts[static_cast<std::size_t>(t)] = detail::score_partial(
            saved.q.tile(i, j0 + t), saved.k.tile(i, j0 + t), sc.samples);
      AllReduceResult sres = ring_all_reduce(ring, std::move(sparts), ctx.elem_bytes);
      score_trace.merge(sres.trace);
      const Matrix p = softmax_rows(sres.value * sc.scale);
      std::vector<Matrix> dparts(static_cast<std::size_t>(sc.g));
      for (int t = 0; t < sc.g; ++t)
        dparts[static_cast<std::size_t>(t)] = detail::score_partial(
            da.tile(i, j0 + t), saved.v.tile(i, j0 + t), sc.samples);
      AllReduceResult dres = ring_all_reduce(ring, std::move(dparts), ctx.elem_bytes);
      dscore_trace.merge(dres.trace);
      const Matrix& dp = dres.value;
      // Per-sample softmax backward on the stacked score gradients.
      const Eigen::VectorXd rowsum = dp.cwiseProduct(p).rowwise().sum();
      Matrix shifted = dp;
      shifted.colwise() -= rowsum;
      const Matrix ds = p.cwiseProduct(shifted) * sc.scale;
      for (int t = 0; t < sc.g; ++t) {
        const Matrix& qc = saved.q.tile(i, j0 + t);
        const Matrix& kc = saved.k.tile(i, j0 + t);
        const Matrix& vc = saved.v.tile(i, j0 + t);
        const Matrix& dac = da.tile(i, j0 + t);
        for (std::int64_t b = 0; b < sc.samples; ++b) {
          const auto dsb = ds.middleRows(b * s, s);
          const auto pb = p.middleRows(b * s, s);
          dq.tile(i, j0 + t).middleRows(b * s, s).noalias() =
              dsb * kc.middleRows(b * s, s);
          dk.tile(i, j0 + t).middleRows(b * s, s).noalias() =
              dsb.transpose() * qc.middleRows(b * s, s);
          dv.tile(i, j0 + t).middleRows(b * s, s).noalias() =
              pb.transpose() * dac.middleRows(b * s, s);
        }
      }
    }
  }
  if (sc.g > 1) {
    ctx.record("bwd_atten/scores_allreduce", std::move(score_trace));
    ctx.record("bwd_atten/dscores_allreduce", std::move(dscore_trace));
  }
}

inline DistAttenGrads backward_attention(EngineContext& ctx, const DistActivation& dy,
                                         const DistAttenSaved& saved,
                                         const DistAttenWeights& w, std::int64_t heads,
                                         std::int64_t samples, double scale) {
  check_dist_attention(ctx, saved.x, heads, samples);
  const int R = ctx.grid.rows(), C = ctx.grid.cols();
  const std::int64_t h = saved.x.cols;
  const std::int64_t bs = saved.x.rows;
  if (scale == 0.0) scale = default_softmax_scale(h, heads);
  if (dy.kind != LayoutKind::Normal || dy.rows != bs || dy.cols != h)
    throw std::invalid_argument("backward_attention: dy layout/shape mismatch");
  const std::size_t nd = static_cast<std::size_t>(ctx.grid.num_dies());

  // 1. Token all-gather of dy down each column.
  AxisGather gdy = axis_all_gather(ctx, RingAxis::Column, [&](int i, int j) { return dy.tile(i, j); });
  std::vector<Matrix> dycol(static_cast<std::size_t>(C));
  for (int j = 0; j < C; ++j) {
    dycol[static_cast<std::size_t>(j)] = vstack(gdy.blocks[static_cast<std::size_t>(j)]);
    ctx.note_act(dycol[static_cast<std::size_t>(j)]);
  }
  ctx.record("bwd_atten/gather_dout", std::move(gdy.trace));

  // 2. All-gather the saved head outputs across each row (projection grad).
  AxisGather ga = axis_all_gather(ctx, RingAxis::Row, [&](int i, int j) { return saved.a.tile(i, j); });
  std::vector<Matrix> arow(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) {
    arow[static_cast<std::size_t>(i)] = hstack(ga.blocks[static_cast<std::size_t>(i)]);
    ctx.note_act(arow[static_cast<std::size_t>(i)]);
  }
  ctx.record("bwd_atten/gather_a_t", std::move(ga.trace));

  DistAttenGrads out;
  out.dwo.resize(nd);
  std::vector<Matrix> pda(nd);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      out.dwo[d] = arow[static_cast<std::size_t>(i)].transpose() *
                   dycol[static_cast<std::size_t>(j)];
      pda[d] = dycol[static_cast<std::size_t>(j)] * w.wo.tile(i, j).transpose();
      ctx.note_act(pda[d]);
    }
  }

  // 3. Hidden-chunked reduce-scatter of the head-output gradient per row.
  AxisScatter rsda = axis_reduce_scatter(
      ctx, RingAxis::Row, "bwd_atten/scatter_da", [&](int i, int j, int c) -> Matrix {
        const IndexRange slice = block_range(h, R, i);
        const IndexRange sub = block_range(slice.size(), C, c);
        return pda[static_cast<std::size_t>(ctx.grid.die_id(i, j))].middleCols(sub.begin,
                                                                               sub.size());
      });
  ctx.record("bwd_atten/scatter_da", std::move(rsda.trace));
  DistActivation da = saved.q;  // ColSliced geometry
  for (std::size_t d = 0; d < nd; ++d) da.tiles[d] = std::move(rsda.per_die[d]);

  // 4. Local core backward (+ group all-reduces when heads span dies).
  detail::ScoreContext sc{heads, samples, scale, head_span_dies(ctx.grid, heads)};
  DistActivation dq, dk, dv;
  backward_attention_core(ctx, saved, da, sc, dq, dk, dv);

  // 5. Fused all-gather of dq|dk|dv across each row, then de-interleave.
  AxisGather gqkv = axis_all_gather(ctx, RingAxis::Row, [&](int i, int j) -> Matrix {
    Matrix fused(bs, 3 * dq.tile(i, j).cols());
    fused << dq.tile(i, j), dk.tile(i, j), dv.tile(i, j);
    return fused;
  });
  std::vector<Matrix> dqrow(static_cast<std::size_t>(R)), dkrow(static_cast<std::size_t>(R)),
      dvrow(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) {
    std::vector<Matrix> qs, ks, vs;
    for (const Matrix& fused : gqkv.blocks[static_cast<std::size_t>(i)]) {
      const std::int64_t wd = fused.cols() / 3;
      qs.push_back(fused.leftCols(wd));
      ks.push_back(fused.middleCols(wd, wd));
      vs.push_back(fused.rightCols(wd));
    }
    dqrow[static_cast<std::size_t>(i)] = hstack(qs);
    dkrow[static_cast<std::size_t>(i)] = hstack(ks);
    dvrow[static_cast<std::size_t>(i)] = hstack(vs);
    ctx.note_act(dqrow[static_cast<std::size_t>(i)]);
  }
  ctx.record("bwd_atten/gather_dqkv", std::move(gqkv.trace));

  // 6. Token all-gather of x down each column (projection grads need it).
  AxisGather gx = axis_all_gather(ctx, RingAxis::Column, [&](int i, int j) { return saved.x.tile(i, j); });
  std::vector<Matrix> xcol(static_cast<std::size_t>(C));
  for (int j = 0; j < C; ++j) {
    xcol[static_cast<std::size_t>(j)] = vstack(gx.blocks[static_cast<std::size_t>(j)]);
    ctx.note_act(xcol[static_cast<std::size_t>(j)]);
  }
  ctx.record("bwd_atten/gather_x_t", std::move(gx.trace));

  // 7. Projection weight gradients and the fused dx partial.
  out.dwq.resize(nd);
  out.dwk.resize(nd);
  out.dwv.resize(nd);
  std::vector<Matrix> pdx(nd);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const std::size_t d = static_cast<std::size_t>(ctx.grid.die_id(i, j));
      const Matrix& xj = xcol[static_cast<std::size_t>(j)];
      const Matrix& dqi = dqrow[static_cast<std::size_t>(i)];
      const Matrix& dki = dkrow[static_cast<std::size_t>(i)];
      const Matrix& dvi = dvrow[static_cast<std::size_t>(i)];
      out.dwq[d] = xj.transpose() * dqi;
      out.dwk[d] = xj.transpose() * dki;
      out.dwv[d] = xj.transpose() * dvi;
      pdx[d] = dqi * w.wq.tile(i, j).transpose() + dki * w.wk.tile(i, j).transpose() +
               dvi * w.wv.tile(i, j).transpose();
      ctx.note_act(pdx[d]);
    }
  }

  // 8. Token reduce-scatter down each column, then the residual add.
  AxisScatter rsdx = axis_reduce_scatter(
      ctx, RingAxis::Column, "bwd_atten/scatter_dx", [&](int i, int j, int c) -> Matrix {
        const IndexRange tok = block_range(bs, R, c);
        return pdx[static_cast<std::size_t>(ctx.grid.die_id(i, j))].middleRows(tok.begin,
                                                                               tok.size());
      });
  ctx.record("bwd_atten/scatter_dx", std::move(rsdx.trace));

  out.dx.kind = LayoutKind::Normal;
  out.dx.rows = bs;
  out.dx.cols = h;
  out.dx.grid_rows = R;
  out.dx.grid_cols = C;
  out.dx.tiles = std::move(rsdx.per_die);
  for (std::size_t d = 0; d < nd; ++d) out.dx.tiles[d] += dy.tiles[d];  // residual
  return out;
}

// ---------------------------------------------------------------------------
// Transformer block and training
// ---------------------------------------------------------------------------

struct DistBlockWeights {
  DistAttenWeights atten;
  DistWeight w1, w2;
};

struct DistBlockSaved {
  DistAttenSaved atten;
  DistFfnSaved ffn;
};

struct DistBlockGrads {
  DistActivation dx;
  std::vector<Matrix> dwq, dwk, dwv, dwo, dw1, dw2;
};

/// Per-die resident bytes of one block's weight tiles.
inline std::int64_t block_weight_bytes_on_die(const DistBlockWeights& w, std::size_t die,
                                              std::int64_t elem_bytes) {
  return matrix_bytes(w.atten.wq.tiles[die], elem_bytes) +
         matrix_bytes(w.atten.wk.tiles[die], elem_bytes) +
         matrix_bytes(w.atten.wv.tiles[die], elem_bytes) +
         matrix_bytes(w.atten.wo.tiles[die], elem_bytes) +
         matrix_bytes(w.w1.tiles[die], elem_bytes) +
         matrix_bytes(w.w2.tiles[die], elem_bytes);
}

inline void note_block_weights(EngineContext& ctx, const DistBlockWeights& w) {
  for (std::size_t d = 0; d < w.w1.tiles.size(); ++d)
    ctx.meter.note_weight(block_weight_bytes_on_die(w, d, ctx.elem_bytes));
}

inline DistActivation forward_block(EngineContext& ctx, const DistActivation& x,
                                    const DistBlockWeights& w, std::int64_t heads,
                                    std::int64_t samples, double scale,
                                    DistBlockSaved* saved = nullptr) {
  note_block_weights(ctx, w);
  DistAttenSaved as;
  DistActivation o = forward_attention(ctx, x, w.atten, heads, samples, scale, &as);
  DistFfnSaved fs;
  DistActivation y = forward_ffn(ctx, o, w.w1, w.w2, &fs);
  if (saved) {
    saved->atten = std::move(as);
    saved->ffn = std::move(fs);
  }
  return y;
}

inline DistBlockGrads backward_block(EngineContext& ctx, const DistActivation& dy,
                                     const DistBlockSaved& saved, const DistBlockWeights& w,
                                     std::int64_t heads, std::int64_t samples, double scale) {
  note_block_weights(ctx, w);
  DistFfnGrads fg = backward_ffn(ctx, dy, saved.ffn, w.w1, w.w2);
  DistAttenGrads ag =
      backward_attention(ctx, fg.dx, saved.atten, w.atten, heads, samples, scale);
  DistBlockGrads g;
  g.dx = std::move(ag.dx);
  g.dwq = std::move(ag.dwq);
  g.dwk = std::move(ag.dwk);
  g.dwv = std::move(ag.dwv);
  g.dwo = std::move(ag.dwo);
  g.dw1 = std::move(fg.dw1);
  g.dw2 = std::move(fg.dw2);
  return g;
}

/// Squared-error loss accumulated tile by tile:  0.5 * ||y - target||^2.
inline double dist_loss_value(const DistActivation& y, const DistActivation& target) {
  if (y.tiles.size() != target.tiles.size())
    throw std::invalid_argument("loss: mismatched tilings");
  double loss = 0.0;
  for (std::size_t d = 0; d < y.tiles.size(); ++d)
    loss += 0.5 * (y.tiles[d] - target.tiles[d]).squaredNorm();
  return loss;
}

inline DistActivation dist_loss_grad(const DistActivation& y, const DistActivation& target) {
  DistActivation dy = y;
  for (std::size_t d = 0; d < dy.tiles.size(); ++d) dy.tiles[d] -= target.tiles[d];
  return dy;
}

namespace detail {

inline std::vector<Matrix> zero_tiles_like(const std::vector<Matrix>& tiles) {
  std::vector<Matrix> z(tiles.size());
  for (std::size_t d = 0; d < tiles.size(); ++d)
    z[d] = Matrix::Zero(tiles[d].rows(), tiles[d].cols());
  return z;
}

inline void add_tiles(std::vector<Matrix>& acc, const std::vector<Matrix>& g) {
  for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += g[d];
}

inline void sgd_tiles(std::vector<Matrix>& w, const std::vector<Matrix>& g, double lr) {
  for (std::size_t d = 0; d < w.size(); ++d) w[d] -= lr * g[d];
}

}  // namespace detail

/// Gradient-accumulation iteration over a list of minibatches: forward each
/// one (saving activations), backward in reverse order summing weight
/// gradients, then a single SGD update.  Returns the summed loss before the
/// update — the same schedule as the dense reference's train_iteration.
inline double dist_train_iteration(EngineContext& ctx, std::vector<DistBlockWeights>& blocks,
                                   const std::vector<DistActivation>& xs,
                                   const std::vector<DistActivation>& targets,
                                   std::int64_t heads, std::int64_t samples, double scale,
                                   double lr) {
  if (xs.empty() || xs.size() != targets.size())
    throw std::invalid_argument("dist_train_iteration: minibatch lists must match");
  const std::size_t num_layers = blocks.size();
  const std::size_t num_mb = xs.size();
  std::vector<std::vector<DistBlockSaved>> saved(num_mb,
                                                 std::vector<DistBlockSaved>(num_layers));
  std::vector<DistActivation> ys(num_mb);
  double loss = 0.0;
  for (std::size_t m = 0; m < num_mb; ++m) {
    DistActivation y = xs[m];
    for (std::size_t l = 0; l < num_layers; ++l)
      y = forward_block(ctx, y, blocks[l], heads, samples, scale, &saved[m][l]);
    loss += dist_loss_value(y, targets[m]);
    ys[m] = std::move(y);
  }
  struct Acc {
    std::vector<Matrix> dwq, dwk, dwv, dwo, dw1, dw2;
  };
  std::vector<Acc> acc(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    acc[l].dwq = detail::zero_tiles_like(blocks[l].atten.wq.tiles);
    acc[l].dwk = detail::zero_tiles_like(blocks[l].atten.wk.tiles);
    acc[l].dwv = detail::zero_tiles_like(blocks[l].atten.wv.tiles);
    acc[l].dwo = detail::zero_tiles_like(blocks[l].atten.wo.tiles);
    acc[l].dw1 = detail::zero_tiles_like(blocks[l].w1.tiles);
    acc[l].dw2 = detail::zero_tiles_like(blocks[l].w2.tiles);
  }
  for (std::size_t m = num_mb; m-- > 0;) {
    DistActivation dy = dist_loss_grad(ys[m], targets[m]);
    for (std::size_t l = num_layers; l-- > 0;) {
      DistBlockGrads g =
          backward_block(ctx, dy, saved[m][l], blocks[l], heads, samples, scale);
      dy = std::move(g.dx);
      detail::add_tiles(acc[l].dwq, g.dwq);
      detail::add_tiles(acc[l].dwk, g.dwk);
      detail::add_tiles(acc[l].dwv, g.dwv);
      detail::add_tiles(acc[l].dwo, g.dwo);
      detail::add_tiles(acc[l].dw1, g.dw1);
      detail::add_tiles(acc[l].dw2, g.dw2);
    }
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    detail::sgd_tiles(blocks[l].atten.wq.tiles, acc[l].dwq, lr);
    detail::sgd_tiles(blocks[l].atten.wk.tiles, acc[l].dwk, lr);
    detail::sgd_tiles(blocks[l].atten.wv.tiles, acc[l].dwv, lr);
    detail::sgd_tiles(blocks[l].atten.wo.tiles, acc[l].dwo, lr);
    detail::sgd_tiles(blocks[l].w1.tiles, acc[l].dw1, lr);
    detail::sgd_tiles(blocks[l].w2.tiles, acc[l].dw2, lr);
  }
  return loss;
}

/// Shard a dense block-weight set onto the grid with the orientations the
/// engine's dataflow expects.
inline DistBlockWeights shard_block_weights(const oracle::BlockWeights& w,
                                            const DieGrid& grid) {
  DistBlockWeights out;
  out.atten.wq = shard_weight(w.atten.wq, grid, Orientation::Transposed);
  out.atten.wk = shard_weight(w.atten.wk, grid, Orientation::Transposed);
  out.atten.wv = shard_weight(w.atten.wv, grid, Orientation::Transposed);
  out.atten.wo = shard_weight(w.atten.wo, grid, Orientation::Normal);
  out.w1 = shard_weight(w.w1, grid, Orientation::Transposed);
  out.w2 = shard_weight(w.w2, grid, Orientation::Normal);
  return out;
}

inline oracle::BlockWeights assemble_block_weights(const DistBlockWeights& w) {
  oracle::BlockWeights out;
  out.atten.wq = assemble_weight(w.atten.wq);
  out.atten.wk = assemble_weight(w.atten.wk);
  out.atten.wv = assemble_weight(w.atten.wv);
  out.atten.wo = assemble_weight(w.atten.wo);
  out.w1 = assemble_weight(w.w1);
  out.w2 = assemble_weight(w.w2);
  return out;
}

}  // namespace hecaton::engine
