#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

namespace dispfl {

struct ClientRoundRecord {
  std::size_t client = 0;
  double test_accuracy = 0.0;
  double train_loss = 0.0;
  std::int64_t bytes_sent = 0;
  std::int64_t bytes_received = 0;
  /// What the same exchange would cost without mask bitsets.
  std::int64_t values_only_sent = 0;
  /// Local training plus mask search.
  std::int64_t flops = 0;
  /// The mask-search share of `flops` (dense gradient for regrowth).
  std::int64_t search_flops = 0;
  std::int64_t mask_churn = 0;
  bool active = true;
};

struct RoundMetrics {
  std::size_t round = 0;
  std::vector<ClientRoundRecord> clients;
  /// max over clients of bytes_sent + bytes_received
  std::int64_t busiest_node_bytes = 0;
  double mean_personalized_accuracy = 0.0;
};

/// Builds a round record and fills in its derived aggregates.
RoundMetrics record_round(std::size_t round, std::vector<ClientRoundRecord> clients);

/// Append-only per-round metrics with CSV and JSON emitters.
class MetricsLog {
 public:
  void push(RoundMetrics m) { rounds_.push_back(std::move(m)); }
  const std::vector<RoundMetrics>& rounds() const noexcept { return rounds_; }

  /// Header `round,client,acc,loss,bytes_sent,bytes_received,flops,mask_churn`
  /// and one row per round per client.
  void write_csv(std::ostream& out) const;

  /// Totals, final accuracies and the given config echo.
  nlohmann::json summary(const nlohmann::json& config) const;

  /// Writes `metrics.csv` and `summary.json` into `dir` (created if missing).
  void emit(const std::filesystem::path& dir, const nlohmann::json& config) const;

 private:
  std::vector<RoundMetrics> rounds_;
};

}  // namespace dispfl
