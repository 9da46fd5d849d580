#include "dispfl/cli.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "dispfl/config.hpp"
#include "dispfl/dp_bounds.hpp"
#include "dispfl/error.hpp"
#include "dispfl/runner.hpp"

namespace dispfl {

namespace {

/// Command-line overrides applied on top of a config file.
struct RunFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::string algorithm;
  std::size_t clients = 0;
  std::size_t rounds = 0;
  std::string topology;
  double dropout = -1;
  std::vector<double> densities;
  double alpha0 = -1;
  std::size_t workers = 0;
  std::size_t local_steps = 0;
  double lr = -1;

  void add_to(CLI::App* cmd, bool seed_required) {
    cmd->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    auto* s = cmd->add_option("--seed", seed, "master seed");
    if (seed_required) s->required();
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--algorithm", algorithm, "dispfl | local | dpsgd | dpsgd_ft");
    cmd->add_option("--clients", clients, "number of clients");
    cmd->add_option("--rounds", rounds, "communication rounds");
    cmd->add_option("--topology", topology, "ring | full | random:<d>");
    cmd->add_option("--dropout", dropout, "per-round client dropout probability");
    cmd->add_option("--density", densities, "client density (repeat for capacity groups)")->delimiter(',');
    cmd->add_option("--alpha0", alpha0, "initial pruning rate");
    cmd->add_option("--workers", workers, "worker threads");
    cmd->add_option("--local-steps", local_steps, "local SGD steps per round");
    cmd->add_option("--lr", lr, "initial learning rate");
  }

  ExperimentConfig resolve(const nlohmann::json& defaults = nlohmann::json::object()) const {
    nlohmann::json j = defaults;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config " + config_path);
      try {
        nlohmann::json file;
        in >> file;
        j.update(file);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
    }
    j["seed"] = seed;
    if (!out.empty()) j["output_dir"] = out;
    if (!algorithm.empty()) j["algorithm"] = algorithm;
    if (clients) j["clients"] = clients;
    if (rounds) j["rounds"] = rounds;
    if (!topology.empty()) j["topology"] = topology;
    if (dropout >= 0) j["dropout_prob"] = dropout;
    if (!densities.empty()) j["densities"] = densities;
    if (alpha0 >= 0) j["alpha0"] = alpha0;
    if (workers) j["workers"] = workers;
    if (local_steps) j["local_steps"] = local_steps;
    if (lr >= 0) j["lr"] = lr;
    return ExperimentConfig::from_json(j);
  }
};

struct BoundFlags {
  BoundParams p;

  void add_to(CLI::App* cmd, bool with_beta) {
    cmd->add_option("--samples", p.samples, "training sample size N")->capture_default_str();
    cmd->add_option("--batch", p.batch, "batch size tau")->capture_default_str();
    cmd->add_option("--iterations", p.iterations, "training iterations T")->capture_default_str();
    if (with_beta) cmd->add_option("--beta", p.beta, "union mask density")->capture_default_str();
    cmd->add_option("--diameter", p.gradient_diameter, "gradient-space diameter D_g")->capture_default_str();
    cmd->add_option("--sigma", p.sigma, "Gaussian noise scale")->capture_default_str();
    cmd->add_option("--delta", p.delta, "per-step probability parameter")->capture_default_str();
    cmd->add_option("--delta-tilde", p.delta_tilde, "composition slack")->capture_default_str();
  }
};

nlohmann::json bound_record(const BoundParams& p, const GeneralizationBound& b) {
  auto opt = [](const auto& o) { return o ? nlohmann::json(static_cast<double>(*o)) : nlohmann::json(nullptr); };
  return {
      {"params",
       {{"samples", p.samples},
        {"batch", p.batch},
        {"iterations", p.iterations},
        {"beta", p.beta},
        {"diameter", p.gradient_diameter},
        {"sigma", p.sigma},
        {"delta", p.delta},
        {"delta_tilde", p.delta_tilde}}},
      {"eps_tilde", static_cast<double>(b.eps_tilde)},
      {"eps_prime", static_cast<double>(b.eps_prime)},
      {"gap", static_cast<double>(b.gap)},
      {"delta_status", to_string(b.delta_status)},
      {"delta_prime", opt(b.delta_prime)},
      {"failure_prob", opt(b.failure_prob)},
      {"vacuous", b.vacuous},
      {"sample_condition", b.sample_condition ? nlohmann::json(*b.sample_condition) : nlohmann::json(nullptr)},
  };
}

std::string opt_str(const std::optional<long double>& v) {
  return v ? fmt::format("{}", static_cast<double>(*v)) : std::string();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

nlohmann::json analyze_defaults() {
  return {{"clients", 20}, {"partition", {{"kind", "grouped"}, {"groups", 4}, {"alpha", 0.3}}}};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decentralized personalized federated learning with sparse masks: simulator and bound calculator"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run one experiment and write metrics.csv / summary.json");
  run_flags.add_to(run, true);

  RunFlags sweep_flags;
  std::vector<double> sweep_densities{0.2, 0.4, 0.5, 0.6, 0.8};
  auto* sweep = app.add_subcommand("sweep", "Dis-PFL over a grid of densities, one summary row each");
  sweep_flags.add_to(sweep, true);
  sweep->add_option("--densities", sweep_densities, "density grid")->delimiter(',')->capture_default_str();

  BoundFlags bound_flags;
  auto* bounds = app.add_subcommand("bounds", "evaluate the privacy/generalization bound as JSON");
  bound_flags.add_to(bounds, true);

  BoundFlags bsweep_flags;
  double beta_min = 0.05, beta_max = 1.0;
  std::size_t points = 20;
  std::string bsweep_out;
  auto* bsweep = app.add_subcommand("bounds-sweep", "evaluate the bound over a grid of beta values as CSV");
  bsweep_flags.add_to(bsweep, false);
  bsweep->add_option("--beta-min", beta_min)->capture_default_str();
  bsweep->add_option("--beta-max", beta_max)->capture_default_str();
  bsweep->add_option("--points", points)->capture_default_str()->check(CLI::PositiveNumber);
  bsweep->add_option("--out", bsweep_out, "CSV path (stdout when omitted)");

  RunFlags analyze_flags;
  auto* analyze = app.add_subcommand("analyze-masks",
                                     "run an experiment and write mask Hamming / label cosine matrices");
  analyze_flags.add_to(analyze, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (run->parsed()) {
      const auto cfg = run_flags.resolve();
      const auto res = run_experiment(cfg);
      const auto dir = resolve_output_dir(cfg);
      res.metrics.emit(dir, cfg.to_json());
      const auto& last = res.metrics.rounds().back();
      fmt::print(out, "{}: final mean accuracy {:.4f}, outputs in {}\n", to_string(cfg.algorithm),
                 last.mean_personalized_accuracy, dir.string());
    } else if (sweep->parsed()) {
      const auto cfg = sweep_flags.resolve();
      const auto rows = run_sweep(cfg, sweep_densities);
      const auto dir = resolve_output_dir(cfg);
      std::filesystem::create_directories(dir);
      std::ostringstream csv;
      write_sweep_csv(rows, csv);
      write_file(dir / "sweep.csv", csv.str());
      out << csv.str();
    } else if (bounds->parsed()) {
      const auto b = generalization_gap_bound(bound_flags.p);
      out << bound_record(bound_flags.p, b).dump(2) << '\n';
    } else if (bsweep->parsed()) {
      if (!(beta_min >= 0 && beta_max <= 1 && beta_min <= beta_max)) {
        throw DomainError("need 0 <= beta-min <= beta-max <= 1");
      }
      std::ostringstream csv;
      csv << "beta,eps_tilde,eps_prime,gap,delta_status,delta_prime,failure_prob,vacuous,sample_condition\n";
      for (std::size_t i = 0; i < points; ++i) {
        BoundParams p = bsweep_flags.p;
        p.beta = points == 1 ? beta_min
                             : beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(points - 1);
        const auto b = generalization_gap_bound(p);
        fmt::print(csv, "{},{},{},{},{},{},{},{},{}\n", p.beta, static_cast<double>(b.eps_tilde),
                   static_cast<double>(b.eps_prime), static_cast<double>(b.gap), to_string(b.delta_status),
                   opt_str(b.delta_prime), opt_str(b.failure_prob), b.vacuous ? 1 : 0,
                   b.sample_condition ? (*b.sample_condition ? "1" : "0") : "");
      }
      if (bsweep_out.empty()) {
        out << csv.str();
      } else {
        write_file(bsweep_out, csv.str());
      }
    } else if (analyze->parsed()) {
      const auto cfg = analyze_flags.resolve(analyze_defaults());
      const auto res = run_experiment(cfg);
      const auto dir = resolve_output_dir(cfg);
      res.metrics.emit(dir, cfg.to_json());
      const auto ham = hamming_matrix(res.clients);
      const auto cos = label_cosine_matrix(res.partition);
      std::ostringstream h, c, g;
      write_matrix_csv(ham, h);
      write_matrix_csv(cos, c);
      g << "client,group\n";
      for (std::size_t k = 0; k < res.partition.clients(); ++k) g << k << ',' << res.partition.group_of[k] << '\n';
      write_file(dir / "hamming.csv", h.str());
      write_file(dir / "label_cosine.csv", c.str());
      write_file(dir / "groups.csv", g.str());
      fmt::print(out, "wrote {}x{} matrices to {}\n", ham.size(), ham.size(), dir.string());
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dispfl
