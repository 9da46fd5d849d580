#include "dispfl/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dispfl/error.hpp"

namespace dispfl {

RoundMetrics record_round(std::size_t round, std::vector<ClientRoundRecord> clients) {
  RoundMetrics m;
  m.round = round;
  m.clients = std::move(clients);
  double acc = 0.0;
  for (const auto& c : m.clients) {
    m.busiest_node_bytes = std::max(m.busiest_node_bytes, c.bytes_sent + c.bytes_received);
    acc += c.test_accuracy;
  }
  m.mean_personalized_accuracy = m.clients.empty() ? 0.0 : acc / static_cast<double>(m.clients.size());
  return m;
}

void MetricsLog::write_csv(std::ostream& out) const {
  out << "round,client,acc,loss,bytes_sent,bytes_received,flops,mask_churn\n";
  for (const auto& r : rounds_) {
    for (const auto& c : r.clients) {
      fmt::print(out, "{},{},{},{},{},{},{},{}\n", r.round, c.client, c.test_accuracy, c.train_loss,
                 c.bytes_sent, c.bytes_received, c.flops, c.mask_churn);
    }
  }
}

nlohmann::json MetricsLog::summary(const nlohmann::json& config) const {
  std::int64_t sent = 0;
  std::int64_t values_only = 0;
  std::int64_t flops = 0;
  std::int64_t search_flops = 0;
  std::int64_t busiest = 0;
  std::vector<std::int64_t> per_client_flops;
  for (const auto& r : rounds_) {
    busiest = std::max(busiest, r.busiest_node_bytes);
    per_client_flops.resize(std::max(per_client_flops.size(), r.clients.size()), 0);
    for (std::size_t k = 0; k < r.clients.size(); ++k) {
      const auto& c = r.clients[k];
      sent += c.bytes_sent;
      values_only += c.values_only_sent;
      flops += c.flops;
      search_flops += c.search_flops;
      per_client_flops[k] += c.flops;
    }
  }

  nlohmann::json j;
  j["config"] = config;
  j["rounds"] = rounds_.size();
  if (rounds_.empty()) {
    j["final_mean_accuracy"] = nullptr;
    j["final_accuracies"] = nlohmann::json::array();
  } else {
    const auto& last = rounds_.back();
    j["final_mean_accuracy"] = last.mean_personalized_accuracy;
    auto accs = nlohmann::json::array();
    for (const auto& c : last.clients) accs.push_back(c.test_accuracy);
    j["final_accuracies"] = accs;
  }
  j["total_bytes"] = sent;
  j["total_bytes_values_only"] = values_only;
  j["max_busiest_node_bytes"] = busiest;
  j["total_flops"] = flops;
  j["total_search_flops"] = search_flops;
  j["max_client_flops"] =
      per_client_flops.empty() ? 0 : *std::max_element(per_client_flops.begin(), per_client_flops.end());
  return j;
}

void MetricsLog::emit(const std::filesystem::path& dir, const nlohmann::json& config) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  write_csv(csv);
  std::ofstream js(dir / "summary.json");
  if (!js) throw IoError("cannot write " + (dir / "summary.json").string());
  js << summary(config).dump(2) << '\n';
  if (!csv || !js) throw IoError("failed writing metrics into " + dir.string());
}

}  // namespace dispfl
