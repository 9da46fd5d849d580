#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dispfl {

/// Who receives from whom in one round. `receive_from[k]` is the sorted set
/// S_{k,t} of clients whose models k pulls; dropped clients neither send nor
/// receive.
struct RoundSchedule {
  std::vector<std::vector<std::size_t>> receive_from;
  std::vector<bool> dropped;

  std::size_t clients() const noexcept { return receive_from.size(); }
  bool active(std::size_t k) const { return !dropped.at(k); }
  std::size_t max_receive_degree() const;
  /// Number of receivers each client serves this round.
  std::vector<std::size_t> send_degrees() const;
};

/// k receives from k-1 and k+1 (mod K). Requires K >= 3.
RoundSchedule ring(std::size_t clients, std::size_t t);

/// k receives from every other client. Requires K >= 2.
RoundSchedule fully_connected(std::size_t clients, std::size_t t);

/// k receives from `max_degree` distinct other clients drawn uniformly at
/// random, redrawn every round; a pure function of (seed, K, t, max_degree).
RoundSchedule time_varying(std::size_t clients, std::size_t t, std::size_t max_degree, std::uint64_t seed);

/// Drops each client independently with probability `dropout_prob` for round
/// t and strips dropped ids from everyone's lists. Pure in (seed, t).
RoundSchedule apply_dropout(RoundSchedule schedule, double dropout_prob, std::uint64_t seed, std::size_t t);

/// `ring` | `full` | `random:<max_degree>` | `none` (no exchange).
struct TopologySpec {
  enum class Kind { ring, full, random, none };
  Kind kind = Kind::ring;
  std::size_t max_degree = 0;

  static TopologySpec parse(const std::string& text);
  std::string to_string() const;
};

/// Round-by-round schedule for a whole experiment.
class NeighborSchedule {
 public:
  NeighborSchedule(TopologySpec spec, std::size_t clients, double dropout_prob, std::uint64_t seed);

  RoundSchedule round(std::size_t t) const;
  const TopologySpec& spec() const noexcept { return spec_; }
  /// Receive-degree cap implied by the topology (K-1 for full, 2 for ring).
  std::size_t max_degree() const noexcept;

 private:
  TopologySpec spec_;
  std::size_t clients_;
  double dropout_prob_;
  std::uint64_t seed_;
};

}  // namespace dispfl
