#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dispfl/client.hpp"
#include "dispfl/data.hpp"
#include "dispfl/error.hpp"
#include "dispfl/mask_evolution.hpp"
#include "test_support.hpp"

using namespace dispfl;

TEST_CASE("anneal_rate endpoints") {
  const AnnealSchedule s{0.5, 100};
  CHECK(anneal_rate(s, 0) == 0.5);
  CHECK(anneal_rate(s, 100) == 0.0);
  CHECK(anneal_rate(s, 50) == doctest::Approx(0.25).epsilon(1e-15));
  double prev = 1.0;
  for (std::size_t t = 0; t <= 100; ++t) {
    const double a = anneal_rate(s, t);
    CHECK(a <= prev);
    prev = a;
  }
  CHECK_THROWS_AS(anneal_rate(s, 101), DomainError);
  CHECK_THROWS_AS(anneal_rate({1.0, 10}, 0), DomainError);
}

TEST_CASE("prune: hand example and alpha zero") {
  const Shapes shapes{{4, 1, false}};
  Model m = Model::zeros(shapes);
  m.layers[0].weight << 0.5, -0.1, 0.3, 0.0;
  MaskLayer ml(1, 4);
  ml << 1, 1, 1, 0;
  const Mask mask({ml});

  const auto r = prune_by_magnitude(m, mask, 1.0 / 3.0);
  CHECK(r.counts == std::vector<std::int64_t>{1});
  MaskLayer expect(1, 4);
  expect << 1, 0, 1, 0;
  CHECK(r.pruned == Mask({expect}));

  const auto none = prune_by_magnitude(m, mask, 0.0);
  CHECK(none.pruned == mask);
  CHECK(none.counts == std::vector<std::int64_t>{0});
  CHECK_THROWS_AS(prune_by_magnitude(m, mask, 1.0), DomainError);
}

TEST_CASE("prune: survivors dominate the pruned set") {
  Rng rng(8);
  const Shapes shapes{{10, 10, false}};
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    Model m = Model::zeros(shapes);
    for (Eigen::Index i = 0; i < 100; ++i) m.layers[0].weight.data()[i] = normal(rng);
    const auto r = prune_by_magnitude(m, Mask::ones(shapes), 0.3);
    CHECK(r.counts[0] == 30);
    CHECK(r.pruned.total_ones() == 70);
    double survivor_min = INFINITY, pruned_max = 0;
    for (Eigen::Index i = 0; i < 100; ++i) {
      const double w = std::abs(m.layers[0].weight.data()[i]);
      if (r.pruned.layer(0).data()[i]) survivor_min = std::min(survivor_min, w);
      else pruned_max = std::max(pruned_max, w);
    }
    CHECK(survivor_min >= pruned_max);
  }
}

TEST_CASE("regrow: forced argmax, zero counts, subset contract") {
  const Shapes shapes{{4, 1, false}};
  MaskLayer pl(1, 4), ol(1, 4);
  pl << 1, 0, 1, 0;
  ol << 1, 1, 1, 0;
  const Mask pruned({pl}), original({ol});
  Gradient g = Gradient::zeros(shapes);
  g.layers[0].weight << 5.0, 0.2, 7.0, -0.9;

  const std::vector<std::int64_t> one{1};
  MaskLayer expect(1, 4);
  expect << 1, 0, 1, 1;
  CHECK(regrow_by_gradient(pruned, original, g, one) == Mask({expect}));

  const std::vector<std::int64_t> zero{0};
  CHECK(regrow_by_gradient(pruned, original, g, zero) == pruned);

  // Equal magnitudes: lowest flat index wins.
  g.layers[0].weight << 0.0, 0.5, 0.0, -0.5;
  expect << 1, 1, 1, 0;
  CHECK(regrow_by_gradient(pruned, original, g, one) == Mask({expect}));

  CHECK_THROWS_AS(regrow_by_gradient(original, pruned, g, one), DomainError);
  const std::vector<std::int64_t> three{3};
  CHECK_THROWS_AS(regrow_by_gradient(pruned, original, g, three), DomainError);
}

namespace {

ClientState small_client(std::uint64_t seed, double density) {
  Rng data_rng(seed + 1000);
  ClientState c;
  c.rng = Rng(seed);
  const Shapes shapes{{4, 8, true}, {8, 2, true}};
  c.train = make_synthetic(2, 4, 20, 3.0, data_rng);
  c.capacity = density;
  c.model = init_model<double>(shapes, c.rng);
  c.mask = erk_init(shapes, density, c.rng);
  c.model = masked_copy(c.model, c.mask);
  return c;
}

// Straight-line prune-then-regrow on flat arrays; shares no code with the library.
std::vector<std::vector<std::uint8_t>> scripted_evolution(const ClientState& c, double alpha, std::size_t batch) {
  Rng rng = c.rng;
  const Batch b = sample_batch(c.train, batch, rng);
  const Gradient g = dense_gradient(c.model, b);
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t l = 0; l < c.model.layers.size(); ++l) {
    const auto& w = c.model.layers[l].weight;
    const auto size = static_cast<std::size_t>(w.size());
    std::vector<std::uint8_t> m(c.mask.layer(l).data(), c.mask.layer(l).data() + size);
    std::size_t ones = 0;
    for (auto v : m) ones += v;
    const auto n = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(ones)));
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t best = size;
      for (std::size_t i = 0; i < size; ++i) {
        if (m[i] && (best == size || std::abs(w.data()[i]) < std::abs(w.data()[best]))) best = i;
      }
      m[best] = 0;
    }
    std::vector<std::uint8_t> grown = m;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t best = size;
      for (std::size_t i = 0; i < size; ++i) {
        if (!grown[i] && (best == size || std::abs(g.layers[l].weight.data()[i]) >
                                              std::abs(g.layers[l].weight.data()[best]))) {
          best = i;
        }
      }
      grown[best] = 1;
    }
    out.push_back(std::move(grown));
  }
  return out;
}

}  // namespace

TEST_CASE("evolve_mask matches the scripted replay at t = 0") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const ClientState c = small_client(seed, 0.5);
    const MaskSearchOptions opts{{0.5, 100}, 8};
    const auto expected = scripted_evolution(c, 0.5, 8);
    const ClientState next = evolve_mask(c, opts, 0);
    for (std::size_t l = 0; l < expected.size(); ++l) {
      const auto& got = next.mask.layer(l);
      CHECK(std::equal(expected[l].begin(), expected[l].end(), got.data()));
      CHECK(next.mask.layer_ones(l) == c.mask.layer_ones(l));
    }
    CHECK(next.counters.mask_churn == hamming_distance(c.mask, next.mask).raw);
    CHECK(next.counters.search_flops > 0);
    // Model zero outside the new mask.
    for (std::size_t l = 0; l < expected.size(); ++l) {
      CHECK(((next.mask.layer(l) == 0) && (next.model.layers[l].weight.array() != 0.0)).count() == 0);
    }
  }
}

TEST_CASE("evolve_mask: no-op at t = T and when alpha rounds to zero") {
  const ClientState c = small_client(9, 0.5);
  const ClientState end = evolve_mask(c, {{0.5, 10}, 8}, 10);
  CHECK(end.mask == c.mask);
  CHECK(end.model == c.model);
  CHECK(end.counters.mask_churn == 0);
  CHECK(end.rng == c.rng);

  const ClientState zero = evolve_mask(c, {{0.0, 10}, 8}, 0);
  CHECK(zero.mask == c.mask);
  CHECK(zero.rng == c.rng);
}

TEST_CASE("evolve_mask keeps per-layer counts over many rounds") {
  ClientState c = small_client(10, 0.3);
  const auto before = c.mask;
  for (std::size_t t = 0; t <= 20; ++t) {
    c = local_train(std::move(c), {0.1, 2, 8, 5e-4});
    c = evolve_mask(std::move(c), {{0.5, 20}, 8}, t);
    for (std::size_t l = 0; l < before.layer_count(); ++l) CHECK(c.mask.layer_ones(l) == before.layer_ones(l));
  }
}
