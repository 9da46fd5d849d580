#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dispfl/client.hpp"
#include "dispfl/config.hpp"
#include "dispfl/data.hpp"
#include "dispfl/metrics.hpp"
#include "dispfl/topology.hpp"

namespace dispfl {

/// Called once per round after metrics are recorded, with the schedule that
/// was used and the clients' end-of-round states.
using RoundObserver = std::function<void(std::size_t round, const RoundSchedule&, std::span<const ClientState>)>;

struct ExperimentResult {
  MetricsLog metrics;
  std::vector<ClientState> clients;
  Shapes shapes;
  Partition partition;
  /// Payloads delivered over the whole run.
  std::int64_t messages = 0;
};

/// Clients with data shards, initial models and masks, as round 0 sees them.
std::vector<ClientState> setup_clients(const ExperimentConfig& cfg, Shapes& shapes, Partition& partition);

/// Runs cfg.algorithm. Each round: schedule -> (exchange, aggregate) ->
/// local training -> mask search -> evaluation, with every aggregation
/// reading the previous round's frozen states. Per-client work runs on
/// cfg.workers threads and is bit-identical to a single thread.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer = {});

ExperimentResult run_dispfl(ExperimentConfig cfg, const RoundObserver& observer = {});
/// No communication; dense models.
ExperimentResult run_local(ExperimentConfig cfg, const RoundObserver& observer = {});
/// Dense models averaged with the same gossip operator; each round reports
/// the accuracy of the aggregated (consensus) model on the local test shard.
ExperimentResult run_dpsgd(ExperimentConfig cfg, const RoundObserver& observer = {});
/// D-PSGD whose last round ends with a local fine-tuning phase, and the
/// fine-tuned model is what that round reports.
ExperimentResult run_dpsgd_ft(ExperimentConfig cfg, const RoundObserver& observer = {});

/// cfg.output_dir, unless DISPFL_OUTPUT_DIR is set.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

struct SweepRow {
  double density = 0.0;
  double final_mean_accuracy = 0.0;
  std::int64_t total_bytes = 0;
  std::int64_t total_bytes_values_only = 0;
  /// values_only minus the bias share: bytes spent on surviving weights.
  std::int64_t weight_value_bytes = 0;
  std::int64_t total_flops = 0;
};

/// One Dis-PFL run per density (uniform capacity); each run's metrics go to
/// <output>/density_<d>/ when `write_runs` is set.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const double> densities,
                                bool write_runs = true);
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

/// K x K normalized Hamming distances between final client masks.
std::vector<std::vector<double>> hamming_matrix(std::span<const ClientState> clients);
/// K x K cosine similarities between client training label distributions.
std::vector<std::vector<double>> label_cosine_matrix(const Partition& partition);
void write_matrix_csv(const std::vector<std::vector<double>>& m, std::ostream& out);

}  // namespace dispfl
