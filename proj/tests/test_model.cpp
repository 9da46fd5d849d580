#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dispfl/client.hpp"
#include "dispfl/data.hpp"
#include "dispfl/error.hpp"
#include "dispfl/mask.hpp"
#include "dispfl/model.hpp"
#include "test_support.hpp"

using namespace dispfl;

namespace {

// Closed-form 4-8-2 fixture; tests/oracles/forward_oracle.py evaluates the
// same network at 40 digits.
Model closed_form_model() {
  const Shapes shapes{{4, 8, true}, {8, 2, true}};
  Model m = Model::zeros(shapes);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 4; ++j) m.layers[0].weight(i, j) = std::sin(1.0 + 4 * i + j) / 2;
    m.layers[0].bias(i) = std::cos(static_cast<double>(i)) / 10;
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 8; ++j) m.layers[1].weight(i, j) = std::sin((3.0 + 8 * i + j) / 3);
    m.layers[1].bias(i) = i / 20.0 - 1.0 / 40;
  }
  return m;
}

Batch closed_form_batch() {
  Batch b;
  b.features.resize(8, 4);
  for (int n = 0; n < 8; ++n) {
    for (int j = 0; j < 4; ++j) b.features(n, j) = 2 * std::cos((7.0 * n + 13.0 * j) / 10);
    b.labels.push_back(n % 2);
  }
  return b;
}

// Plain loops over std::vector, sharing nothing with the Eigen implementation.
double loop_forward_loss(const Model& model, const Mask& mask, const Batch& batch) {
  double total = 0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    std::vector<double> act(static_cast<std::size_t>(batch.features.cols()));
    for (std::size_t j = 0; j < act.size(); ++j) act[j] = batch.features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& L = model.layers[l];
      std::vector<double> next(static_cast<std::size_t>(L.weight.rows()), 0.0);
      for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
        double s = L.has_bias() ? L.bias(i) : 0.0;
        for (Eigen::Index j = 0; j < L.weight.cols(); ++j) {
          if (mask.layer(l)(i, j)) s += L.weight(i, j) * act[static_cast<std::size_t>(j)];
        }
        next[static_cast<std::size_t>(i)] = (l + 1 < model.layers.size() && s < 0) ? 0.0 : s;
      }
      act = std::move(next);
    }
    double m = act[0];
    for (double v : act) m = std::max(m, v);
    double z = 0;
    for (double v : act) z += std::exp(v - m);
    total += m + std::log(z) - act[static_cast<std::size_t>(batch.labels[n])];
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("forward: zero weights give ln 2 on two classes") {
  const Shapes shapes{{3, 2, true}};
  const Model m = Model::zeros(shapes);
  Batch b;
  b.features = Matrix<double>::Random(5, 3);
  b.labels = {0, 1, 1, 0, 1};
  const auto r = forward(m, Mask::ones(shapes), b);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Tied logits resolve to class 0.
  CHECK(r.accuracy == doctest::Approx(2.0 / 5.0));
}

TEST_CASE("forward: all-zero mask equals the zero-weight network") {
  Rng rng(3);
  const auto shapes = mlp_shapes(4, std::vector<std::size_t>{6}, 3);
  const Model m = init_model<double>(shapes, rng);
  Model z = Model::zeros(shapes);
  for (std::size_t l = 0; l < shapes.size(); ++l) z.layers[l].bias = m.layers[l].bias;
  const Batch b = testing::random_batch(rng, 7, 4, 3);
  const auto masked = forward(m, Mask::zeros(shapes), b);
  const auto bias_only = forward(z, Mask::ones(shapes), b);
  CHECK(masked.loss == bias_only.loss);
  CHECK(masked.accuracy == bias_only.accuracy);
}

TEST_CASE("forward: closed-form fixture matches the high-precision oracle") {
  const Model m = closed_form_model();
  const Batch b = closed_form_batch();
  const auto r = forward(m, Mask::ones(m.shapes()), b);
  CHECK(r.loss == doctest::Approx(3.178611500322591950108201).epsilon(1e-12));
  CHECK(r.accuracy == 0.5);
}

TEST_CASE("forward: seed-42 4-8-2 model matches the loop oracle, dense and masked") {
  Rng rng(42);
  const Shapes shapes{{4, 8, true}, {8, 2, true}};
  const Model m = init_model<double>(shapes, rng);
  const Batch b = testing::random_batch(rng, 8, 4, 2);
  CHECK(forward(m, Mask::ones(shapes), b).loss == doctest::Approx(loop_forward_loss(m, Mask::ones(shapes), b)).epsilon(1e-13));
  const Mask mask = erk_init(shapes, 0.5, rng);
  CHECK(forward(m, mask, b).loss == doctest::Approx(loop_forward_loss(m, mask, b)).epsilon(1e-13));
}

TEST_CASE("forward: contract violations") {
  const Shapes shapes{{4, 8, true}, {8, 2, true}};
  Model m = Model::zeros(shapes);
  Batch b;
  b.features = Matrix<double>::Zero(2, 3);
  b.labels = {0, 1};
  CHECK_THROWS_AS(forward(m, Mask::ones(shapes), b), ShapeError);
  b.features = Matrix<double>::Zero(2, 4);
  b.labels = {0, 2};
  CHECK_THROWS_AS(forward(m, Mask::ones(shapes), b), Error);
  b.labels = {0, 1};
  CHECK_THROWS_AS(forward(m, Mask::ones(Shapes{{4, 8, true}}), b), ShapeError);
  m.layers[1].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dense_gradient(m, b), NumericError);
}

TEST_CASE("masked_gradient: zero mask, identity mask") {
  Rng rng(5);
  const auto shapes = mlp_shapes(4, std::vector<std::size_t>{8}, 2);
  const Model m = init_model<double>(shapes, rng);
  const Batch b = testing::random_batch(rng, 8, 4, 2);
  const auto gz = masked_gradient(m, Mask::zeros(shapes), b);
  for (const auto& l : gz.layers) CHECK(l.weight.isZero(0.0));
  const auto gd = dense_gradient(m, b);
  const auto go = masked_gradient(m, Mask::ones(shapes), b);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    CHECK(go.layers[l].weight == gd.layers[l].weight);
    CHECK(go.layers[l].bias == gd.layers[l].bias);
  }
}

TEST_CASE("dense_gradient: balanced symmetric batch at zero weights has zero output bias gradient") {
  const auto shapes = mlp_shapes(3, std::vector<std::size_t>{4}, 2);
  const Model m = Model::zeros(shapes);
  Batch b;
  b.features = Matrix<double>::Random(4, 3);
  b.labels = {0, 1, 0, 1};
  const auto g = dense_gradient(m, b);
  CHECK(g.layers.back().bias.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(7);
  const Shapes shapes{{4, 8, true}, {8, 2, true}};
  for (int trial = 0; trial < 5; ++trial) {
    const Model m = init_model<double>(shapes, rng);
    const Batch b = testing::random_batch(rng, 8, 4, 2);
    const Mask mask = erk_init(shapes, 0.5, rng);
    CHECK(testing::max_fd_error(m, Mask::ones(shapes), b, dense_gradient(m, b)) < 1e-4);
    CHECK(testing::max_fd_error(m, mask, b, masked_gradient(m, mask, b)) < 1e-4);
  }
}

TEST_CASE("sgd_step") {
  const Shapes shapes{{1, 1, false}};
  Model m = Model::zeros(shapes);
  m.layers[0].weight(0, 0) = 1.0;
  Gradient g = Gradient::zeros(shapes);
  CHECK(sgd_step(m, g, 0.1) == m);
  g.layers[0].weight(0, 0) = 2.0;
  CHECK(sgd_step(m, g, 0.1).layers[0].weight(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(sgd_step(m, g, 0.0), DomainError);
  CHECK_THROWS_AS(sgd_step(m, Gradient::zeros(Shapes{{2, 1, false}}), 0.1), ShapeError);
}

TEST_CASE("local_train: replay oracle, zero steps, zero lr") {
  Rng data_rng(11);
  const Dataset ds = make_synthetic(2, 4, 20, 4.0, data_rng);
  const auto shapes = mlp_shapes(4, std::vector<std::size_t>{8}, 2);

  ClientState c;
  c.rng = Rng(99);
  c.model = init_model<double>(shapes, c.rng);
  c.mask = erk_init(shapes, 0.5, c.rng);
  c.model = masked_copy(c.model, c.mask);
  c.train = ds;
  c.capacity = 0.5;

  const LocalTrainOptions opts{0.05, 6, 5, 5e-4};
  const auto trained = local_train(c, opts);

  // Step-by-step replay with the same stream.
  Rng rng = c.rng;
  Model w = c.model;
  for (std::size_t s = 0; s < opts.steps; ++s) {
    const Batch b = sample_batch(ds, opts.batch_size, rng);
    Gradient g = masked_gradient(w, c.mask, b);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      g.layers[l].weight += opts.weight_decay * apply_mask(w.layers[l].weight, c.mask.layer(l));
    }
    w = sgd_step(w, g, opts.lr);
  }
  CHECK(trained.model == w);
  CHECK(trained.mask == c.mask);
  CHECK(trained.counters.train_flops > 0);

  const auto idle = local_train(c, {0.05, 0, 5, 5e-4});
  CHECK(idle.model == c.model);
  const auto frozen = local_train(c, {0.0, 3, 5, 5e-4});
  CHECK(frozen.model == c.model);
  CHECK(std::isfinite(frozen.counters.mean_batch_loss));
}

TEST_CASE("local_train: 50 steps on a separable two-class shard") {
  Rng data_rng(2024);
  const Dataset ds = make_synthetic(2, 4, 50, 4.0, data_rng);
  const auto shapes = mlp_shapes(4, std::vector<std::size_t>{8}, 2);
  ClientState c;
  c.rng = Rng(1);
  c.model = init_model<double>(shapes, c.rng);
  c.mask = Mask::ones(shapes);
  c.train = ds;
  c = local_train(std::move(c), {0.1, 50, 16, 5e-4});
  CHECK(evaluate_train(c).loss < std::log(2.0) / 2);
}
