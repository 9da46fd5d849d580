#include "dispfl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "dispfl/error.hpp"

namespace dispfl {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dispfl: return "dispfl";
    case Algorithm::local: return "local";
    case Algorithm::dpsgd: return "dpsgd";
    case Algorithm::dpsgd_ft: return "dpsgd_ft";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "dispfl") return Algorithm::dispfl;
  if (s == "local") return Algorithm::local;
  if (s == "dpsgd") return Algorithm::dpsgd;
  if (s == "dpsgd_ft") return Algorithm::dpsgd_ft;
  throw ConfigError("unknown algorithm '" + s + "' (expected dispfl, local, dpsgd or dpsgd_ft)");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string partition_kind(PartitionSpec::Kind k) {
  switch (k) {
    case PartitionSpec::Kind::dirichlet: return "dirichlet";
    case PartitionSpec::Kind::pathological: return "pathological";
    case PartitionSpec::Kind::grouped: return "grouped";
  }
  return "?";
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require(clients >= 1, "clients must be >= 1");
  require(rounds >= 1, "rounds must be >= 1");
  require(std::isfinite(local_epochs) && local_epochs >= 0, "local_epochs must be >= 0");
  require(std::isfinite(lr) && lr >= 0, "lr must be finite and >= 0");
  require(std::isfinite(lr_decay) && lr_decay > 0 && lr_decay <= 1, "lr_decay must lie in (0, 1]");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(std::isfinite(weight_decay) && weight_decay >= 0, "weight_decay must be >= 0");
  require(dropout_prob >= 0 && dropout_prob < 1, "dropout_prob must lie in [0, 1)");
  require(alpha0 >= 0 && alpha0 < 1, "alpha0 must lie in [0, 1)");
  require(workers >= 1, "workers must be >= 1");
  require(test_size >= 1, "test_size must be >= 1");
  require(!densities.empty(), "densities must not be empty");
  require(densities.size() <= clients, "more capacity groups than clients");
  for (double d : densities) require(d > 0 && d <= 1, "every density must lie in (0, 1]");
  require(data.classes >= 2, "data.classes must be >= 2");
  require(data.dim >= 1, "data.dim must be >= 1");
  require(data.train_per_class >= 10, "data.train_per_class must be >= 10");
  require(data.test_per_class >= 1, "data.test_per_class must be >= 1");
  require(std::isfinite(data.class_sep) && data.class_sep >= 0, "data.class_sep must be >= 0");
  for (auto h : hidden) require(h >= 1, "hidden layer widths must be >= 1");
  switch (partition.kind) {
    case PartitionSpec::Kind::dirichlet:
      require(partition.alpha > 0, "partition.alpha must be > 0");
      break;
    case PartitionSpec::Kind::pathological:
      require(partition.classes_per_client >= 1 &&
                  partition.classes_per_client <= static_cast<std::size_t>(data.classes),
              "partition.classes_per_client must lie in [1, classes]");
      require(clients * partition.classes_per_client >= static_cast<std::size_t>(data.classes),
              "clients * classes_per_client must cover every class");
      break;
    case PartitionSpec::Kind::grouped:
      require(partition.alpha > 0, "partition.alpha must be > 0");
      require(partition.groups >= 1 && clients % partition.groups == 0,
              "partition.groups must divide the number of clients");
      break;
  }
  (void)topology_spec();
}

double ExperimentConfig::capacity_of(std::size_t client) const {
  if (densities.size() == 1) return densities.front();
  return densities.at(client * densities.size() / clients);
}

std::size_t ExperimentConfig::steps_for(std::size_t shard_size) const {
  if (local_steps) return *local_steps;
  return static_cast<std::size_t>(
      std::ceil(local_epochs * static_cast<double>(shard_size) / static_cast<double>(batch_size)));
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json part{{"kind", partition_kind(partition.kind)}};
  switch (partition.kind) {
    case PartitionSpec::Kind::dirichlet: part["alpha"] = partition.alpha; break;
    case PartitionSpec::Kind::pathological: part["classes_per_client"] = partition.classes_per_client; break;
    case PartitionSpec::Kind::grouped:
      part["alpha"] = partition.alpha;
      part["groups"] = partition.groups;
      break;
  }
  nlohmann::json j{
      {"algorithm", to_string(algorithm)},
      {"clients", clients},
      {"rounds", rounds},
      {"local_epochs", local_epochs},
      {"local_steps", local_steps ? nlohmann::json(*local_steps) : nlohmann::json(nullptr)},
      {"finetune_steps", finetune_steps},
      {"lr", lr},
      {"lr_decay", lr_decay},
      {"batch_size", batch_size},
      {"weight_decay", weight_decay},
      {"topology", topology},
      {"dropout_prob", dropout_prob},
      {"partition", part},
      {"densities", densities},
      {"alpha0", alpha0},
      {"seed", seed},
      {"output_dir", output_dir},
      {"workers", workers},
      {"data",
       {{"classes", data.classes},
        {"dim", data.dim},
        {"train_per_class", data.train_per_class},
        {"test_per_class", data.test_per_class},
        {"class_sep", data.class_sep}}},
      {"hidden", hidden},
      {"test_size", test_size},
  };
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"algorithm", "clients", "rounds", "local_epochs", "local_steps", "finetune_steps", "lr",
                  "lr_decay", "batch_size", "weight_decay", "topology", "dropout_prob", "partition",
                  "densities", "alpha0", "seed", "output_dir", "workers", "data", "hidden", "test_size"},
                 "config");
  ExperimentConfig c;
  if (j.contains("algorithm")) {
    std::string a;
    read(j, "algorithm", a);
    c.algorithm = parse_algorithm(a);
  }
  read(j, "clients", c.clients);
  read(j, "rounds", c.rounds);
  read(j, "local_epochs", c.local_epochs);
  if (j.contains("local_steps") && !j.at("local_steps").is_null()) {
    std::size_t s = 0;
    read(j, "local_steps", s);
    c.local_steps = s;
  }
  read(j, "finetune_steps", c.finetune_steps);
  read(j, "lr", c.lr);
  read(j, "lr_decay", c.lr_decay);
  read(j, "batch_size", c.batch_size);
  read(j, "weight_decay", c.weight_decay);
  read(j, "topology", c.topology);
  read(j, "dropout_prob", c.dropout_prob);
  read(j, "densities", c.densities);
  read(j, "alpha0", c.alpha0);
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);
  read(j, "workers", c.workers);
  read(j, "hidden", c.hidden);
  read(j, "test_size", c.test_size);

  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    if (!p.is_object()) throw ConfigError("partition must be an object");
    reject_unknown(p, {"kind", "alpha", "classes_per_client", "groups"}, "partition");
    std::string kind = "pathological";
    read(p, "kind", kind);
    if (kind == "dirichlet") {
      c.partition.kind = PartitionSpec::Kind::dirichlet;
    } else if (kind == "pathological") {
      c.partition.kind = PartitionSpec::Kind::pathological;
    } else if (kind == "grouped") {
      c.partition.kind = PartitionSpec::Kind::grouped;
    } else {
      throw ConfigError("unknown partition kind '" + kind + "'");
    }
    read(p, "alpha", c.partition.alpha);
    read(p, "classes_per_client", c.partition.classes_per_client);
    read(p, "groups", c.partition.groups);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (!d.is_object()) throw ConfigError("data must be an object");
    reject_unknown(d, {"classes", "dim", "train_per_class", "test_per_class", "class_sep"}, "data");
    read(d, "classes", c.data.classes);
    read(d, "dim", c.data.dim);
    read(d, "train_per_class", c.data.train_per_class);
    read(d, "test_per_class", c.data.test_per_class);
    read(d, "class_sep", c.data.class_sep);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace dispfl
