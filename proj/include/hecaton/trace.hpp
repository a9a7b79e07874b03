#pragma once

// Record of the messages a collective puts on the package interconnect.
//
// A collective over a ring of L members runs in rounds; in each round every
// member forwards one block to its ring successor.  Rounds are synchronous,
// so a round costs the slowest hop's latency plus the largest block's
// serialization time, and the collective costs the sum over rounds.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hecaton/topology.hpp"

namespace hecaton {

/// One message: die `src` sends `bytes` to die `dst`, `hops` grid steps away.
struct CommStep {
  int round = 0;
  int src = 0;
  int dst = 0;
  int hops = 1;
  std::int64_t bytes = 0;
};

/// All messages of one collective, with per-round synchronous cost.
class CommTrace {
 public:
  void add(const CommStep& step) {
    steps_.push_back(step);
    rounds_ = std::max(rounds_, step.round + 1);
  }

  const std::vector<CommStep>& steps() const { return steps_; }
  int rounds() const { return rounds_; }

  /// Total payload bytes over all messages.
  std::int64_t total_bytes() const {
    std::int64_t sum = 0;
    for (const auto& s : steps_) sum += s.bytes;
    return sum;
  }

  /// Sum over rounds of the largest per-message byte count in that round.
  /// This is the serialization byte count a synchronous ring pays: all links
  /// run in parallel within a round, so only the fattest message gates it.
  std::int64_t critical_bytes() const {
    std::int64_t sum = 0;
    for (int r = 0; r < rounds_; ++r) {
      std::int64_t worst = 0;
      for (const auto& s : steps_)
        if (s.round == r) worst = std::max(worst, s.bytes);
      sum += worst;
    }
    return sum;
  }

  /// Sum over rounds of the largest hop count in that round.
  int critical_hops() const {
    int sum = 0;
    for (int r = 0; r < rounds_; ++r) {
      int worst = 0;
      for (const auto& s : steps_)
        if (s.round == r) worst = std::max(worst, s.hops);
      sum += worst;
    }
    return sum;
  }

  /// Wall-clock cost: per round, slowest hop latency + fattest block transfer.
  double cost_seconds(const LinkParams& link) const {
    double t = 0.0;
    for (int r = 0; r < rounds_; ++r) {
      int worst_hops = 0;
      std::int64_t worst_bytes = 0;
      for (const auto& s : steps_) {
        if (s.round != r) continue;
        worst_hops = std::max(worst_hops, s.hops);
        worst_bytes = std::max(worst_bytes, s.bytes);
      }
      t += static_cast<double>(worst_hops) * link.alpha_s +
           static_cast<double>(worst_bytes) / link.beta_Bps;
    }
    return t;
  }

  /// Sequential composition: other's rounds run after this trace's rounds.
  void append(const CommTrace& other) {
    const int base = rounds_;
    for (CommStep s : other.steps()) {
      s.round += base;
      add(s);
    }
    rounds_ = std::max(rounds_, base + other.rounds());
  }

  /// Concurrent composition: other runs on disjoint links at the same time
  /// (e.g. the rings of all columns of a grid), so rounds stay aligned.
  void merge(const CommTrace& other) {
    for (const CommStep& s : other.steps()) add(s);
    rounds_ = std::max(rounds_, other.rounds());
  }

  /// CSV rows `phase,step,src,dst,hops,bytes` (no header).
  void write_csv(std::ostream& os, const std::string& phase) const {
    for (const auto& s : steps_)
      os << phase << ',' << s.round << ',' << s.src << ',' << s.dst << ','
         << s.hops << ',' << s.bytes << '\n';
  }

 private:
  std::vector<CommStep> steps_;
  int rounds_ = 0;
};

}  // namespace hecaton
