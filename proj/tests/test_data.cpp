#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "dispfl/data.hpp"
#include "dispfl/error.hpp"

using namespace dispfl;

namespace {

void check_exact_partition(const Partition& p, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& idx : p.client_indices) {
    for (auto i : idx) ++seen.at(i);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

double centroid_accuracy(const Dataset& train, const Dataset& test) {
  Matrix<double> centroids = Matrix<double>::Zero(train.classes, train.features.cols());
  std::vector<double> counts(static_cast<std::size_t>(train.classes), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    centroids.row(train.labels[i]) += train.features.row(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(train.labels[i])] += 1;
  }
  for (int c = 0; c < train.classes; ++c) centroids.row(c) /= counts[static_cast<std::size_t>(c)];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Eigen::Index best;
    (centroids.rowwise() - test.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    correct += best == test.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("synthetic generator") {
  Rng rng(31);
  const auto mix = make_mixture(10, 20, 4.0, rng);
  for (int c = 0; c < 10; ++c) CHECK(mix.means.row(c).norm() == doctest::Approx(4.0).epsilon(1e-12));
  const Dataset train = sample_mixture(mix, 100, rng);
  const Dataset test = sample_mixture(mix, 100, rng);
  CHECK(train.histogram() == std::vector<std::int64_t>(10, 100));
  CHECK(centroid_accuracy(train, test) >= 0.95);

  Rng r0(32);
  const Dataset flat = make_synthetic(10, 20, 100, 0.0, r0);
  const Dataset flat_test = make_synthetic(10, 20, 100, 0.0, r0);
  CHECK(centroid_accuracy(flat, flat_test) < 0.2);

  Rng a(7), b(7);
  const Dataset x = make_synthetic(3, 5, 10, 2.0, a);
  const Dataset y = make_synthetic(3, 5, 10, 2.0, b);
  CHECK(x.features == y.features);
  CHECK(x.labels == y.labels);
  CHECK_THROWS_AS(make_synthetic(3, 5, 9, 2.0, a), DomainError);
}

TEST_CASE("largest remainder") {
  const std::vector<double> w{1, 1, 1};
  CHECK(largest_remainder(w, 10) == std::vector<std::int64_t>{4, 3, 3});
  const std::vector<double> skew{0.5, 0.3, 0.2};
  CHECK(largest_remainder(skew, 7) == std::vector<std::int64_t>{4, 2, 1});
  const std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(largest_remainder(zero, 3), DomainError);
}

TEST_CASE("dirichlet partition") {
  Rng rng(33);
  const Dataset ds = make_synthetic(10, 5, 200, 3.0, rng);

  const auto one = dirichlet_partition(ds, 1, 0.3, rng);
  CHECK(one.client_indices[0].size() == ds.size());

  const auto flat = dirichlet_partition(ds, 10, 1e6, rng);
  check_exact_partition(flat, ds.size());
  for (const auto& h : flat.histograms) {
    for (auto c : h) CHECK(std::abs(static_cast<double>(c) - 20.0) <= 0.2 * 20.0);
  }

  Rng big_rng(34);
  const Dataset big = make_synthetic(10, 5, 500, 3.0, big_rng);
  const auto skew = dirichlet_partition(big, 100, 0.3, big_rng);
  check_exact_partition(skew, big.size());
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < 100; ++k) {
    CHECK(!skew.client_indices[k].empty());
    support.push_back(skew.label_distribution(k).support_size(0.05));
  }
  std::nth_element(support.begin(), support.begin() + 50, support.end());
  CHECK(support[50] < 5);
}

TEST_CASE("dirichlet partition repairs empty clients") {
  Rng rng(35);
  const Dataset ds = make_synthetic(2, 3, 10, 3.0, rng);
  const auto p = dirichlet_partition(ds, 15, 0.01, rng);
  check_exact_partition(p, ds.size());
  for (const auto& idx : p.client_indices) CHECK(!idx.empty());
}

TEST_CASE("pathological partition") {
  Rng rng(36);
  const Dataset ds = make_synthetic(10, 5, 40, 3.0, rng);
  const auto p = pathological_partition(ds, 100, 2, rng);
  check_exact_partition(p, ds.size());
  for (std::size_t k = 0; k < 100; ++k) CHECK(p.label_distribution(k).support_size() == 2);

  const auto all = pathological_partition(ds, 5, 10, rng);
  for (std::size_t k = 0; k < 5; ++k) CHECK(all.label_distribution(k).support_size() == 10);
  CHECK_THROWS_AS(pathological_partition(ds, 3, 2, rng), DomainError);
}

TEST_CASE("grouped dirichlet") {
  Rng rng(37);
  const Dataset ds = make_synthetic(10, 5, 200, 3.0, rng);
  const auto single = grouped_dirichlet(ds, 1, 6, 0.3, rng);
  check_exact_partition(single, ds.size());
  for (std::size_t k = 1; k < 6; ++k) {
    CHECK(label_cosine_similarity(single.label_distribution(0), single.label_distribution(k)) > 0.99);
  }

  const auto p = grouped_dirichlet(ds, 4, 5, 0.3, rng);
  check_exact_partition(p, ds.size());
  CHECK(p.clients() == 20);
  for (std::size_t g = 0; g < 4; ++g) CHECK(std::count(p.group_of.begin(), p.group_of.end(), g) == 5);
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (std::size_t a = 0; a < 20; ++a) {
    for (std::size_t b = a + 1; b < 20; ++b) {
      const double s = label_cosine_similarity(p.label_distribution(a), p.label_distribution(b));
      if (p.group_of[a] == p.group_of[b]) intra += s, ++ni;
      else inter += s, ++nx;
    }
  }
  CHECK(intra / ni >= inter / nx);
}

TEST_CASE("matched test shard") {
  Rng rng(38);
  const Dataset pool = make_synthetic(10, 5, 50, 3.0, rng);

  std::vector<std::int64_t> single(10, 0);
  single[3] = 17;
  auto idx = matched_test_shard(LabelDistribution::from_histogram(single), pool, 40, rng);
  CHECK(idx.size() == 40);
  for (auto i : idx) CHECK(pool.labels[i] == 3);

  const std::vector<std::int64_t> uniform(10, 5);
  idx = matched_test_shard(LabelDistribution::from_histogram(uniform), pool, 100, rng);
  CHECK(pool.subset(idx).histogram() == std::vector<std::int64_t>(10, 10));
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 100);

  const std::vector<std::int64_t> skew{5, 3, 2, 0, 0, 0, 0, 0, 0, 0};
  const auto dist = LabelDistribution::from_histogram(skew);
  idx = matched_test_shard(dist, pool, 25, rng);
  const auto want = largest_remainder(dist.proportions, 25);
  CHECK(pool.subset(idx).histogram() == want);
}

TEST_CASE("label cosine similarity") {
  const LabelDistribution a{{0.5, 0.5, 0.0}}, b{{0.5, 0.0, 0.5}}, c{{0.0, 0.0, 1.0}}, d{{1.0, 0.0, 0.0}};
  CHECK(label_cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(label_cosine_similarity(c, d) == 0.0);
  CHECK(label_cosine_similarity(a, b) == doctest::Approx(0.5));
}

TEST_CASE("dataset file round trip") {
  Rng rng(39);
  const Dataset ds = make_synthetic(3, 4, 10, 2.0, rng);
  const auto path = std::filesystem::temp_directory_path() / "dispfl_test_dataset.bin";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  CHECK(back.labels == ds.labels);
  CHECK(back.classes == 3);
  CHECK(back.features == ds.features.cast<float>().cast<double>());
  CHECK(std::filesystem::file_size(path) == 24 + 30 * 4 * 4 + 30 * 4);
  std::filesystem::resize_file(path, 50);
  CHECK_THROWS_AS(load_dataset(path), IoError);
  std::filesystem::remove(path);
}
