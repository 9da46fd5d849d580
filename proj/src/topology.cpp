#include "dispfl/topology.hpp"

#include <algorithm>
#include <charconv>

#include "dispfl/error.hpp"
#include "dispfl/rng.hpp"

namespace dispfl {

std::size_t RoundSchedule::max_receive_degree() const {
  std::size_t d = 0;
  for (const auto& r : receive_from) d = std::max(d, r.size());
  return d;
}

std::vector<std::size_t> RoundSchedule::send_degrees() const {
  std::vector<std::size_t> out(clients(), 0);
  for (const auto& r : receive_from) {
    for (auto j : r) ++out.at(j);
  }
  return out;
}

namespace {

RoundSchedule empty_schedule(std::size_t clients) {
  RoundSchedule s;
  s.receive_from.resize(clients);
  s.dropped.assign(clients, false);
  return s;
}

}  // namespace

RoundSchedule ring(std::size_t clients, std::size_t /*t*/) {
  if (clients < 3) throw DomainError("ring topology needs at least 3 clients");
  auto s = empty_schedule(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    std::vector<std::size_t> nb{(k + clients - 1) % clients, (k + 1) % clients};
    std::sort(nb.begin(), nb.end());
    s.receive_from[k] = std::move(nb);
  }
  return s;
}

RoundSchedule fully_connected(std::size_t clients, std::size_t /*t*/) {
  if (clients < 2) throw DomainError("fully connected topology needs at least 2 clients");
  auto s = empty_schedule(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    for (std::size_t j = 0; j < clients; ++j) {
      if (j != k) s.receive_from[k].push_back(j);
    }
  }
  return s;
}

RoundSchedule time_varying(std::size_t clients, std::size_t t, std::size_t max_degree, std::uint64_t seed) {
  if (max_degree < 1 || max_degree >= clients) {
    throw DomainError("time_varying: max_degree must lie in [1, K-1]");
  }
  auto s = empty_schedule(clients);
  Rng rng = derive_rng(seed, "topology", {t});
  for (std::size_t k = 0; k < clients; ++k) {
    // Draw from the K-1 other ids; index i >= k maps to i + 1.
    auto picks = sample_without_replacement(rng, clients - 1, max_degree);
    for (auto& p : picks) {
      if (p >= k) ++p;
    }
    std::sort(picks.begin(), picks.end());
    s.receive_from[k] = std::move(picks);
  }
  return s;
}

RoundSchedule apply_dropout(RoundSchedule schedule, double dropout_prob, std::uint64_t seed, std::size_t t) {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw DomainError("apply_dropout: probability must lie in [0, 1)");
  }
  if (dropout_prob == 0.0) return schedule;
  Rng rng = derive_rng(seed, "dropout", {t});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < schedule.clients(); ++k) {
    if (u(rng) < dropout_prob) schedule.dropped[k] = true;
  }
  for (std::size_t k = 0; k < schedule.clients(); ++k) {
    auto& r = schedule.receive_from[k];
    if (schedule.dropped[k]) {
      r.clear();
      continue;
    }
    std::erase_if(r, [&](std::size_t j) { return static_cast<bool>(schedule.dropped[j]); });
  }
  return schedule;
}

TopologySpec TopologySpec::parse(const std::string& text) {
  if (text == "ring") return {Kind::ring, 0};
  if (text == "full") return {Kind::full, 0};
  if (text == "none") return {Kind::none, 0};
  const std::string prefix = "random:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t d = 0;
    const char* first = text.data() + prefix.size();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, d);
    if (ec == std::errc{} && ptr == last && first != last && d >= 1) return {Kind::random, d};
  }
  throw ConfigError("unknown topology '" + text + "' (expected ring, full, random:<d> or none)");
}

std::string TopologySpec::to_string() const {
  switch (kind) {
    case Kind::ring: return "ring";
    case Kind::full: return "full";
    case Kind::none: return "none";
    case Kind::random: return "random:" + std::to_string(max_degree);
  }
  return "?";
}

NeighborSchedule::NeighborSchedule(TopologySpec spec, std::size_t clients, double dropout_prob, std::uint64_t seed)
    : spec_(spec), clients_(clients), dropout_prob_(dropout_prob), seed_(seed) {
  if (clients < 1) throw ConfigError("need at least one client");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ConfigError("dropout_prob must lie in [0, 1)");
  if (clients == 1) return;
  switch (spec_.kind) {
    case TopologySpec::Kind::ring:
      if (clients < 3) throw ConfigError("ring topology needs at least 3 clients");
      break;
    case TopologySpec::Kind::random:
      if (spec_.max_degree >= clients) throw ConfigError("random:<d> needs d < number of clients");
      break;
    default: break;
  }
}

RoundSchedule NeighborSchedule::round(std::size_t t) const {
  RoundSchedule s;
  if (clients_ == 1 || spec_.kind == TopologySpec::Kind::none) {
    s = empty_schedule(clients_);
  } else {
    switch (spec_.kind) {
      case TopologySpec::Kind::ring: s = ring(clients_, t); break;
      case TopologySpec::Kind::full: s = fully_connected(clients_, t); break;
      case TopologySpec::Kind::random: s = time_varying(clients_, t, spec_.max_degree, seed_); break;
      case TopologySpec::Kind::none: break;
    }
  }
  return apply_dropout(std::move(s), dropout_prob_, seed_, t);
}

std::size_t NeighborSchedule::max_degree() const noexcept {
  if (clients_ == 1) return 0;
  switch (spec_.kind) {
    case TopologySpec::Kind::ring: return 2;
    case TopologySpec::Kind::full: return clients_ - 1;
    case TopologySpec::Kind::random: return spec_.max_degree;
    case TopologySpec::Kind::none: return 0;
  }
  return 0;
}

}  // namespace dispfl
