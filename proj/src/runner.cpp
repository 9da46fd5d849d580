#include "dispfl/runner.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dispfl/accounting.hpp"
#include "dispfl/error.hpp"
#include "dispfl/gossip.hpp"
#include "dispfl/mask_evolution.hpp"

namespace dispfl {

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads with a static
/// stride. Writes must go to per-index slots. Rethrows the exception of the
/// lowest failing index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Re-raises any failure with the round and client it happened in.
template <typename Fn>
void with_context(std::size_t round, std::size_t client, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    throw Error("round " + std::to_string(round) + ", client " + std::to_string(client) + ": " + e.what());
  }
}

struct Mode {
  bool sparse = false;       // ERK masks + mask search
  bool communicate = false;  // gossip with neighbours
  bool finetune = false;     // local phase after the last aggregation
  bool consensus = false;    // evaluate the aggregated model, before local training
};

Mode mode_of(Algorithm a) {
  switch (a) {
    case Algorithm::dispfl: return {true, true, false};
    case Algorithm::local: return {false, false, false};
    case Algorithm::dpsgd: return {false, true, false, true};
    case Algorithm::dpsgd_ft: return {false, true, true, true};
  }
  return {};
}

Partition make_partition(const ExperimentConfig& cfg, const Dataset& train) {
  Rng rng = derive_rng(cfg.seed, "partition");
  switch (cfg.partition.kind) {
    case PartitionSpec::Kind::dirichlet:
      return dirichlet_partition(train, cfg.clients, cfg.partition.alpha, rng);
    case PartitionSpec::Kind::pathological:
      return pathological_partition(train, cfg.clients, cfg.partition.classes_per_client, rng);
    case PartitionSpec::Kind::grouped:
      return grouped_dirichlet(train, cfg.partition.groups, cfg.clients / cfg.partition.groups,
                               cfg.partition.alpha, rng);
  }
  throw ConfigError("unknown partition kind");
}

}  // namespace

std::vector<ClientState> setup_clients(const ExperimentConfig& cfg, Shapes& shapes, Partition& partition) {
  cfg.validate();
  const Mode mode = mode_of(cfg.algorithm);

  Rng data_rng = derive_rng(cfg.seed, "data");
  const auto mixture = make_mixture(cfg.data.classes, cfg.data.dim, cfg.data.class_sep, data_rng);
  const Dataset train = sample_mixture(mixture, cfg.data.train_per_class, data_rng);
  const Dataset test_pool = sample_mixture(mixture, cfg.data.test_per_class, data_rng);

  partition = make_partition(cfg, train);
  shapes = mlp_shapes(cfg.data.dim, cfg.hidden, static_cast<std::size_t>(cfg.data.classes));

  std::vector<ClientState> clients(cfg.clients);
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    auto& c = clients[k];
    c.id = k;
    c.rng = derive_rng(cfg.seed, "client", {k});
    c.capacity = mode.sparse ? cfg.capacity_of(k) : 1.0;
    c.model = init_model<double>(shapes, c.rng);
    c.mask = mode.sparse ? erk_init(shapes, c.capacity, c.rng) : Mask::ones(shapes);
    c.model = masked_copy(c.model, c.mask);
    c.train = train.subset(partition.client_indices[k]);

    Rng test_rng = derive_rng(cfg.seed, "test-shard", {k});
    const auto idx = matched_test_shard(partition.label_distribution(k), test_pool, cfg.test_size, test_rng);
    c.test = test_pool.subset(idx);
  }
  return clients;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer) {
  ExperimentResult result;
  result.clients = setup_clients(cfg, result.shapes, result.partition);
  auto& clients = result.clients;
  const Mode mode = mode_of(cfg.algorithm);
  const std::size_t K = cfg.clients;
  const auto& shapes = result.shapes;

  const TopologySpec topo = mode.communicate ? cfg.topology_spec() : TopologySpec{TopologySpec::Kind::none, 0};
  const NeighborSchedule schedule(topo, K, cfg.dropout_prob, cfg.seed);
  const MaskSearchOptions search{{cfg.alpha0, cfg.rounds}, cfg.batch_size};

  std::vector<std::vector<std::int64_t>> layer_ones(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < shapes.size(); ++l) layer_ones[k].push_back(clients[k].mask.layer_ones(l));
  }

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const RoundSchedule sched = schedule.round(t);
    const double lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(t));
    for (auto& c : clients) c.counters = {};

    // Exchange: every payload is built from the frozen end-of-previous-round state.
    std::vector<ClientRoundRecord> records(K);
    for (std::size_t k = 0; k < K; ++k) {
      records[k].client = k;
      records[k].active = sched.active(k);
    }
    if (mode.communicate) {
      std::vector<SparsePayload> payloads(K);
      std::vector<PayloadBytes> sizes(K);
      parallel_for(K, cfg.workers, [&](std::size_t k) {
        if (!sched.active(k)) return;
        with_context(t, k, [&] {
          payloads[k] = to_payload(clients[k].model, clients[k].mask);
          sizes[k] = payloads[k].byte_size();
        });
      });
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j : sched.receive_from[k]) {
          const std::int64_t bytes = mode.sparse ? sizes[j].with_mask : sizes[j].values_only;
          records[k].bytes_received += bytes;
          records[j].bytes_sent += bytes;
          records[j].values_only_sent += sizes[j].values_only;
          ++result.messages;
        }
      }
      std::vector<Model> merged(K);
      parallel_for(K, cfg.workers, [&](std::size_t k) {
        if (!sched.active(k)) return;
        with_context(t, k, [&] {
          std::vector<MaskedModel<double>> received;
          received.reserve(sched.receive_from[k].size());
          for (std::size_t j : sched.receive_from[k]) received.push_back(from_payload(payloads[j]));
          merged[k] = aggregate<double>({clients[k].model, clients[k].mask}, received);
        });
      });
      for (std::size_t k = 0; k < K; ++k) {
        if (sched.active(k)) clients[k].model = std::move(merged[k]);
      }
    }

    const bool last = t + 1 == cfg.rounds;
    auto evaluate_into = [&](std::size_t k) {
      const auto& c = clients[k];
      records[k].test_accuracy = evaluate_test(c).accuracy;
      records[k].train_loss = evaluate_train(c).loss;
    };
    const bool consensus_eval = mode.consensus && !(mode.finetune && last);
    if (consensus_eval) {
      parallel_for(K, cfg.workers, [&](std::size_t k) { with_context(t, k, [&] { evaluate_into(k); }); });
    }

    parallel_for(K, cfg.workers, [&](std::size_t k) {
      if (!sched.active(k) && !(mode.finetune && last)) return;
      with_context(t, k, [&] {
        auto& c = clients[k];
        const LocalTrainOptions opts{lr, cfg.steps_for(c.train.size()), cfg.batch_size, cfg.weight_decay};
        if (sched.active(k)) {
          c = local_train(std::move(c), opts);
          if (mode.sparse) c = evolve_mask(std::move(c), search, t);
        }
        if (mode.finetune && last) {
          LocalTrainOptions ft = opts;
          if (cfg.finetune_steps > 0) ft.steps = cfg.finetune_steps;
          c = local_train(std::move(c), ft);
        }
      });
    });

    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (clients[k].mask.layer_ones(l) != layer_ones[k][l]) {
          throw Error("round " + std::to_string(t) + ", client " + std::to_string(k) + ": layer " +
                      std::to_string(l) + " ones-count changed from " + std::to_string(layer_ones[k][l]) +
                      " to " + std::to_string(clients[k].mask.layer_ones(l)));
        }
      }
    }

    parallel_for(K, cfg.workers, [&](std::size_t k) {
      with_context(t, k, [&] {
        const auto& c = clients[k];
        auto& r = records[k];
        if (!consensus_eval) evaluate_into(k);
        r.search_flops = c.counters.search_flops;
        r.flops = c.counters.train_flops + c.counters.search_flops;
        r.mask_churn = c.counters.mask_churn;
      });
    });

    result.metrics.push(record_round(t, std::move(records)));
    if (observer) observer(t, sched, clients);
  }
  return result;
}

ExperimentResult run_dispfl(ExperimentConfig cfg, const RoundObserver& observer) {
  cfg.algorithm = Algorithm::dispfl;
  return run_experiment(cfg, observer);
}

ExperimentResult run_local(ExperimentConfig cfg, const RoundObserver& observer) {
  cfg.algorithm = Algorithm::local;
  return run_experiment(cfg, observer);
}

ExperimentResult run_dpsgd(ExperimentConfig cfg, const RoundObserver& observer) {
  cfg.algorithm = Algorithm::dpsgd;
  return run_experiment(cfg, observer);
}

ExperimentResult run_dpsgd_ft(ExperimentConfig cfg, const RoundObserver& observer) {
  cfg.algorithm = Algorithm::dpsgd_ft;
  return run_experiment(cfg, observer);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("DISPFL_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const double> densities, bool write_runs) {
  std::vector<SweepRow> rows;
  const auto base = resolve_output_dir(cfg);
  for (double d : densities) {
    ExperimentConfig run = cfg;
    run.algorithm = Algorithm::dispfl;
    run.densities = {d};
    run.output_dir = (base / fmt::format("density_{}", d)).string();
    const auto res = run_experiment(run);
    if (write_runs) res.metrics.emit(run.output_dir, run.to_json());

    const auto summary = res.metrics.summary(run.to_json());
    SweepRow row;
    row.density = d;
    row.final_mean_accuracy = summary["final_mean_accuracy"].get<double>();
    row.total_bytes = summary["total_bytes"].get<std::int64_t>();
    row.total_bytes_values_only = summary["total_bytes_values_only"].get<std::int64_t>();
    row.weight_value_bytes = row.total_bytes_values_only - res.messages * kValueBytes * total_bias_count(res.shapes);
    row.total_flops = summary["total_flops"].get<std::int64_t>();
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "density,final_mean_accuracy,total_bytes,total_bytes_values_only,weight_value_bytes,total_flops\n";
  for (const auto& r : rows) {
    fmt::print(out, "{},{},{},{},{},{}\n", r.density, r.final_mean_accuracy, r.total_bytes,
               r.total_bytes_values_only, r.weight_value_bytes, r.total_flops);
  }
}

std::vector<std::vector<double>> hamming_matrix(std::span<const ClientState> clients) {
  const std::size_t K = clients.size();
  std::vector<std::vector<double>> m(K, std::vector<double>(K, 0.0));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      m[a][b] = m[b][a] = hamming_distance(clients[a].mask, clients[b].mask).normalized;
    }
  }
  return m;
}

std::vector<std::vector<double>> label_cosine_matrix(const Partition& partition) {
  const std::size_t K = partition.clients();
  std::vector<LabelDistribution> dist;
  for (std::size_t k = 0; k < K; ++k) dist.push_back(partition.label_distribution(k));
  std::vector<std::vector<double>> m(K, std::vector<double>(K, 1.0));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      m[a][b] = m[b][a] = label_cosine_similarity(dist[a], dist[b]);
    }
  }
  return m;
}

void write_matrix_csv(const std::vector<std::vector<double>>& m, std::ostream& out) {
  for (const auto& row : m) {
    for (std::size_t j = 0; j < row.size(); ++j) fmt::print(out, "{}{}", j ? "," : "", row[j]);
    out << '\n';
  }
}

}  // namespace dispfl
