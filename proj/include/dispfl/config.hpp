#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispfl/topology.hpp"

namespace dispfl {

enum class Algorithm { dispfl, local, dpsgd, dpsgd_ft };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct PartitionSpec {
  enum class Kind { dirichlet, pathological, grouped };
  Kind kind = Kind::pathological;
  double alpha = 0.3;                 // dirichlet, grouped
  std::size_t classes_per_client = 2; // pathological
  std::size_t groups = 4;             // grouped; clients split evenly
};

struct DataSpec {
  int classes = 10;
  std::size_t dim = 20;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 200;
  double class_sep = 4.0;
};

/// Everything one simulated experiment needs. The JSON form uses the same
/// field names; see to_json() for the full schema with defaults.
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::dispfl;
  std::size_t clients = 20;
  std::size_t rounds = 100;
  double local_epochs = 1.0;
  /// Overrides the epoch-derived step count when set.
  std::optional<std::size_t> local_steps;
  /// dpsgd_ft only; 0 means one local phase.
  std::size_t finetune_steps = 0;
  double lr = 0.1;
  double lr_decay = 0.998;
  std::size_t batch_size = 16;
  double weight_decay = 5e-4;
  std::string topology = "random:4";
  double dropout_prob = 0.0;
  PartitionSpec partition;
  /// One entry: every client gets it. Several: clients are split into that
  /// many equal consecutive groups, group g getting densities[g].
  std::vector<double> densities{0.5};
  double alpha0 = 0.5;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t workers = 1;
  DataSpec data;
  std::vector<std::size_t> hidden{50, 50};
  std::size_t test_size = 100;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  double capacity_of(std::size_t client) const;
  /// ceil(local_epochs * shard_size / batch_size) unless local_steps is set.
  std::size_t steps_for(std::size_t shard_size) const;
  TopologySpec topology_spec() const { return TopologySpec::parse(topology); }

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

}  // namespace dispfl
