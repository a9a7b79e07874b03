#pragma once

// Die-grid topology for a multi-chiplet package.
//
// Dies sit on an R x C grid and are wired as a 2D mesh of D2D links.  Every
// row and every column additionally forms a logical ring ("bypass ring"):
// the ring order zig-zags through the line of dies (0, 2, 4, ..., 5, 3, 1)
// so that every ring hop crosses at most two physical links.  A router that
// forwards while it transmits makes a 2-hop step cost the same as two wires
// in flight, so each ring step costs at most 2 * alpha regardless of ring
// length; a conventional ring laid on the same line would pay (L-1) * alpha
// for its wraparound step.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hecaton {

/// Per-hop D2D link parameters.
struct LinkParams {
  double alpha_s = 10e-9;     ///< latency of one die-to-die hop, seconds
  double beta_Bps = 32e9;     ///< bandwidth of one link, bytes/second
};

enum class RingAxis { Row, Column };

/// A logical ring over a subset of dies, in transmission order.
///
/// `order[k]` sends to `order[(k+1) % size()]` and the payload crosses
/// `hops[k]` physical links on the way.
struct RingPath {
  std::vector<int> order;  ///< die ids in ring-transmission order
  std::vector<int> hops;   ///< hops[k] = physical hops from order[k] to its successor

  int size() const { return static_cast<int>(order.size()); }
  int max_hops() const {
    int m = 0;
    for (int h : hops) m = m > h ? m : h;
    return m;
  }
};

/// Zig-zag traversal of positions [0, n): even positions ascending, then odd
/// positions descending.  Consecutive entries (cyclically) differ by at most 2.
inline std::vector<int> zigzag_order(int n) {
  std::vector<int> order;
  order.reserve(n);
  for (int p = 0; p < n; p += 2) order.push_back(p);
  int last_odd = (n % 2 == 0) ? n - 1 : n - 2;
  for (int p = last_odd; p >= 1; p -= 2) order.push_back(p);
  return order;
}

/// Rectangular die grid with row-major die ids.
class DieGrid {
 public:
  DieGrid() = default;
  DieGrid(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("die grid dimensions must be >= 1, got " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int num_dies() const { return rows_ * cols_; }

  int die_id(int row, int col) const { return row * cols_ + col; }
  int row_of(int die) const { return die / cols_; }
  int col_of(int die) const { return die % cols_; }

  bool is_square() const { return rows_ == cols_; }

  /// Bypass ring over one row (`index` in [0, rows)) or one column.
  RingPath ring_for(RingAxis axis, int index) const {
    const int len = axis == RingAxis::Row ? cols_ : rows_;
    const int bound = axis == RingAxis::Row ? rows_ : cols_;
    if (index < 0 || index >= bound)
      throw std::out_of_range("ring index " + std::to_string(index) +
                              " out of range for axis of size " + std::to_string(bound));
    RingPath ring;
    for (int p : zigzag_order(len)) {
      ring.order.push_back(axis == RingAxis::Row ? die_id(index, p) : die_id(p, index));
    }
    finalize_hops(ring, len);
    return ring;
  }

  /// Bypass-style ring over an explicit set of dies that lie on one grid line
  /// (same row or same column, contiguous positions).  Used for rings over a
  /// subset of a row, e.g. the dies sharing one attention head.
  RingPath ring_over(const std::vector<int>& dies) const {
    const int len = static_cast<int>(dies.size());
    if (len == 0) throw std::invalid_argument("ring over empty die set");
    RingPath ring;
    for (int p : zigzag_order(len)) ring.order.push_back(dies[p]);
    // Hop count between ring neighbours is their Manhattan distance.
    ring.hops.resize(len);
    for (int k = 0; k < len; ++k) {
      const int a = ring.order[k];
      const int b = ring.order[(k + 1) % len];
      int d = std::abs(row_of(a) - row_of(b)) + std::abs(col_of(a) - col_of(b));
      ring.hops[k] = d;
    }
    if (len == 1) ring.hops[0] = 0;
    return ring;
  }

 private:
  static void finalize_hops(RingPath& ring, int len) {
    ring.hops.resize(len);
    if (len == 1) {
      ring.hops[0] = 0;
      return;
    }
    // Positions along the line differ by at most 2 between ring neighbours.
    std::vector<int> pos = zigzag_order(len);
    for (int k = 0; k < len; ++k) {
      ring.hops[k] = std::abs(pos[(k + 1) % len] - pos[k]);
    }
  }

  int rows_ = 1;
  int cols_ = 1;
};

inline DieGrid build_grid(int rows, int cols) { return DieGrid(rows, cols); }

/// Latency of the slowest step in a bypass ring of the given length:
/// 0 for a singleton, one hop for a pair, two hops otherwise.
inline double longest_step_latency(int ring_length, const LinkParams& link) {
  if (ring_length <= 1) return 0.0;
  if (ring_length == 2) return link.alpha_s;
  return 2.0 * link.alpha_s;
}

/// Slowest step of a conventional ring laid on a line of dies without
/// wraparound wiring: the closing step travels back across the whole line.
inline double torus_wrap_step_latency(int ring_length, const LinkParams& link) {
  if (ring_length <= 1) return 0.0;
  return static_cast<double>(ring_length - 1) * link.alpha_s;
}

/// Total link latency of one (L-1)-step ring pass (all-gather or
/// reduce-scatter) where every step pays the slowest-hop latency.
inline double ring_pass_link_latency(int ring_length, const LinkParams& link) {
  if (ring_length <= 1) return 0.0;
  return static_cast<double>(ring_length - 1) * longest_step_latency(ring_length, link);
}

}  // namespace hecaton
