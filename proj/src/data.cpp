#include "dispfl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "dispfl/error.hpp"

namespace dispfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DomainError("subset index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

std::vector<std::int64_t> Dataset::histogram() const {
  std::vector<std::int64_t> h(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++h.at(static_cast<std::size_t>(y));
  return h;
}

GaussianMixture make_mixture(int classes, std::size_t dim, double class_sep, Rng& rng) {
  if (classes < 2) throw DomainError("make_mixture: need at least 2 classes");
  if (dim < 1) throw DomainError("make_mixture: dimension must be >= 1");
  if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) {
    throw DomainError("make_mixture: class_sep must be finite and >= 0");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianMixture mix;
  mix.means.resize(classes, static_cast<Eigen::Index>(dim));
  for (int c = 0; c < classes; ++c) {
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    mix.means.row(c) = v.norm() > 0.0 ? Eigen::RowVectorXd(v * (class_sep / v.norm()))
                                      : Eigen::RowVectorXd::Zero(v.size());
  }
  return mix;
}

Dataset sample_mixture(const GaussianMixture& mixture, std::size_t per_class, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto classes = mixture.classes();
  Dataset ds;
  ds.classes = classes;
  ds.features.resize(static_cast<Eigen::Index>(per_class) * classes, mixture.means.cols());
  ds.labels.reserve(per_class * static_cast<std::size_t>(classes));
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        ds.features(row, j) = mixture.means(c, j) + normal(rng);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Dataset make_synthetic(int classes, std::size_t dim, std::size_t per_class, double class_sep,
                       Rng& rng) {
  if (per_class < 10) throw DomainError("make_synthetic: per_class must be >= 10");
  const auto mix = make_mixture(classes, dim, class_sep, rng);
  return sample_mixture(mix, per_class, rng);
}

LabelDistribution LabelDistribution::from_histogram(std::span<const std::int64_t> counts) {
  double total = 0.0;
  for (auto c : counts) {
    if (c < 0) throw DomainError("label histogram has a negative count");
    total += static_cast<double>(c);
  }
  if (total <= 0.0) throw DomainError("label histogram is empty");
  LabelDistribution d;
  d.proportions.reserve(counts.size());
  for (auto c : counts) d.proportions.push_back(static_cast<double>(c) / total);
  return d;
}

std::size_t LabelDistribution::support_size(double min_mass) const {
  return static_cast<std::size_t>(std::count_if(proportions.begin(), proportions.end(),
                                                [&](double p) { return p > 0.0 && p >= min_mass; }));
}

LabelDistribution Partition::label_distribution(std::size_t client) const {
  return LabelDistribution::from_histogram(histograms.at(client));
}

std::vector<std::int64_t> largest_remainder(std::span<const double> weights, std::int64_t total) {
  if (total < 0) throw DomainError("largest_remainder: negative total");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("largest_remainder: invalid weight");
    sum += w;
  }
  if (weights.empty() || sum <= 0.0) throw DomainError("largest_remainder: weights sum to zero");

  const std::size_t n = weights.size();
  std::vector<std::int64_t> out(n);
  std::vector<double> frac(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = weights[i] / sum * static_cast<double>(total);
    out[i] = static_cast<std::int64_t>(std::floor(quota));
    frac[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Floating error can leave assigned a unit off in either direction.
  for (std::size_t i = 0; assigned < total; i = (i + 1) % n) {
    ++out[order[i]];
    ++assigned;
  }
  for (std::size_t i = n; assigned > total;) {
    i = (i == 0 ? n : i) - 1;
    if (out[order[i]] > 0) {
      --out[order[i]];
      --assigned;
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class.at(static_cast<std::size_t>(ds.labels[i])).push_back(i);
  }
  return by_class;
}

std::vector<double> sample_dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& x : p) {
    x = gamma(rng);
    sum += x;
  }
  if (sum <= 0.0) {
    // Every draw underflowed (tiny alpha); the limit puts all mass on one coordinate.
    std::fill(p.begin(), p.end(), 0.0);
    p[uniform_index(rng, n)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

void finalize(Partition& part, const Dataset& ds) {
  // Fill empty clients from the largest one.
  for (std::size_t k = 0; k < part.clients(); ++k) {
    if (!part.client_indices[k].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t j = 1; j < part.clients(); ++j) {
      if (part.client_indices[j].size() > part.client_indices[donor].size()) donor = j;
    }
    if (part.client_indices[donor].size() < 2) {
      throw DomainError("partition: not enough samples to give every client one");
    }
    part.client_indices[k].push_back(part.client_indices[donor].back());
    part.client_indices[donor].pop_back();
    ++part.repairs;
  }
  part.histograms.clear();
  for (auto& idx : part.client_indices) {
    std::sort(idx.begin(), idx.end());
    std::vector<std::int64_t> h(static_cast<std::size_t>(ds.classes), 0);
    for (auto i : idx) ++h[static_cast<std::size_t>(ds.labels[i])];
    part.histograms.push_back(std::move(h));
  }
  if (part.group_of.empty()) part.group_of.assign(part.clients(), 0);
}

void check_dataset(const Dataset& ds) {
  if (ds.classes < 1 || ds.size() == 0) throw DomainError("partition: empty dataset");
}

}  // namespace

Partition dirichlet_partition(const Dataset& ds, std::size_t clients, double alpha, Rng& rng) {
  check_dataset(ds);
  if (clients < 1) throw DomainError("dirichlet_partition: need at least one client");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("dirichlet_partition: alpha must be > 0");

  Partition part;
  part.client_indices.resize(clients);
  for (auto& idx : indices_by_class(ds)) {
    if (idx.empty()) continue;
    shuffle(idx, rng);
    const auto p = sample_dirichlet(clients, alpha, rng);
    const auto counts = largest_remainder(p, static_cast<std::int64_t>(idx.size()));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      for (std::int64_t i = 0; i < counts[k]; ++i) part.client_indices[k].push_back(idx[pos++]);
    }
  }
  finalize(part, ds);
  return part;
}

Partition pathological_partition(const Dataset& ds, std::size_t clients,
                                 std::size_t classes_per_client, Rng& rng) {
  check_dataset(ds);
  const auto num_classes = static_cast<std::size_t>(ds.classes);
  if (clients < 1) throw DomainError("pathological_partition: need at least one client");
  if (classes_per_client < 1 || classes_per_client > num_classes) {
    throw DomainError("pathological_partition: classes_per_client must lie in [1, C]");
  }
  const std::size_t shards = clients * classes_per_client;
  if (shards < num_classes) {
    throw DomainError("pathological_partition: clients * classes_per_client < C leaves classes unused");
  }

  std::vector<std::size_t> class_order(num_classes);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  shuffle(class_order, rng);
  std::vector<std::size_t> client_order(clients);
  std::iota(client_order.begin(), client_order.end(), std::size_t{0});
  shuffle(client_order, rng);

  auto by_class = indices_by_class(ds);
  Partition part;
  part.client_indices.resize(clients);
  // Shards laid out class by class; shard j goes to client slot j mod K. A
  // class occupies at most ceil(K*c/C) <= K consecutive slots, so no client
  // receives two shards of one class.
  std::size_t slot = 0;
  for (std::size_t r = 0; r < num_classes; ++r) {
    const std::size_t c = class_order[r];
    const std::size_t count = shards / num_classes + (r < shards % num_classes ? 1 : 0);
    auto& idx = by_class[c];
    if (idx.size() < count) {
      throw DomainError("pathological_partition: class " + std::to_string(c) + " has " +
                        std::to_string(idx.size()) + " samples for " + std::to_string(count) +
                        " shards");
    }
    shuffle(idx, rng);
    const std::vector<double> equal(count, 1.0);
    const auto sizes = largest_remainder(equal, static_cast<std::int64_t>(idx.size()));
    std::size_t pos = 0;
    for (std::size_t s = 0; s < count; ++s, ++slot) {
      auto& dst = part.client_indices[client_order[slot % clients]];
      for (std::int64_t i = 0; i < sizes[s]; ++i) dst.push_back(idx[pos++]);
    }
  }
  finalize(part, ds);
  return part;
}

Partition grouped_dirichlet(const Dataset& ds, std::size_t groups, std::size_t clients_per_group,
                            double alpha, Rng& rng) {
  check_dataset(ds);
  if (groups < 1 || clients_per_group < 1) {
    throw DomainError("grouped_dirichlet: groups and clients_per_group must be >= 1");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("grouped_dirichlet: alpha must be > 0");

  const auto num_classes = static_cast<std::size_t>(ds.classes);
  std::vector<std::vector<double>> group_dist;
  for (std::size_t g = 0; g < groups; ++g) group_dist.push_back(sample_dirichlet(num_classes, alpha, rng));

  const std::size_t clients = groups * clients_per_group;
  Partition part;
  part.client_indices.resize(clients);
  part.group_of.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) part.group_of[k] = k / clients_per_group;

  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    shuffle(idx, rng);
    std::vector<double> w(clients);
    for (std::size_t k = 0; k < clients; ++k) w[k] = group_dist[part.group_of[k]][c];
    if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; })) {
      std::fill(w.begin(), w.end(), 1.0);
    }
    const auto counts = largest_remainder(w, static_cast<std::int64_t>(idx.size()));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      for (std::int64_t i = 0; i < counts[k]; ++i) part.client_indices[k].push_back(idx[pos++]);
    }
  }
  finalize(part, ds);
  return part;
}

std::vector<std::size_t> matched_test_shard(const LabelDistribution& target, const Dataset& pool,
                                            std::size_t n_test, Rng& rng) {
  if (target.proportions.size() != static_cast<std::size_t>(pool.classes)) {
    throw DomainError("matched_test_shard: distribution has " +
                      std::to_string(target.proportions.size()) + " classes, pool has " +
                      std::to_string(pool.classes));
  }
  const auto counts = largest_remainder(target.proportions, static_cast<std::int64_t>(n_test));
  const auto by_class = indices_by_class(pool);
  std::vector<std::size_t> out;
  out.reserve(n_test);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto want = static_cast<std::size_t>(counts[c]);
    if (want == 0) continue;
    const auto& idx = by_class[c];
    if (idx.empty()) {
      throw DomainError("matched_test_shard: class " + std::to_string(c) + " is absent from the pool");
    }
    if (want <= idx.size()) {
      for (auto j : sample_without_replacement(rng, idx.size(), want)) out.push_back(idx[j]);
    } else {
      for (std::size_t i = 0; i < want; ++i) out.push_back(idx[uniform_index(rng, idx.size())]);
    }
  }
  return out;
}

double label_cosine_similarity(const LabelDistribution& a, const LabelDistribution& b) {
  if (a.proportions.size() != b.proportions.size()) {
    throw DomainError("label_cosine_similarity: class counts differ");
  }
  const Eigen::Map<const Eigen::VectorXd> x(a.proportions.data(), static_cast<Eigen::Index>(a.proportions.size()));
  const Eigen::Map<const Eigen::VectorXd> y(b.proportions.data(), static_cast<Eigen::Index>(b.proportions.size()));
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) throw DomainError("label_cosine_similarity: zero vector");
  return std::clamp(x.dot(y) / (nx * ny), 0.0, 1.0);
}

namespace {

template <typename T>
void put_le(std::ofstream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::ifstream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw IoError("dataset file is truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  put_le<std::uint64_t>(out, ds.size());
  put_le<std::uint64_t>(out, ds.dim());
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ds.classes));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) put_le<float>(out, static_cast<float>(ds.features(i, j)));
  }
  for (int y : ds.labels) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(y));
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto n = get_le<std::uint64_t>(in);
  const auto d = get_le<std::uint64_t>(in);
  const auto c = get_le<std::uint64_t>(in);
  if (c > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) || n > (1ULL << 40) || d > (1ULL << 24)) {
    throw IoError("dataset header is implausible");
  }
  Dataset ds;
  ds.classes = static_cast<int>(c);
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.features(i, j) = get_le<float>(in);
  }
  ds.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto y = get_le<std::uint32_t>(in);
    if (y >= c) throw IoError("label " + std::to_string(y) + " out of range");
    ds.labels.push_back(static_cast<int>(y));
  }
  return ds;
}

}  // namespace dispfl
