#include "dispfl/client.hpp"

#include <cmath>

#include "dispfl/accounting.hpp"
#include "dispfl/error.hpp"

namespace dispfl {

Batch sample_batch(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (ds.size() == 0) throw DomainError("sample_batch: dataset is empty");
  if (batch_size == 0) throw DomainError("sample_batch: batch size must be >= 1");
  const auto idx = sample_without_replacement(rng, ds.size(), batch_size);
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
  b.labels.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(idx[i]));
    b.labels.push_back(ds.labels[idx[i]]);
  }
  return b;
}

bool density_matches_capacity(const Mask& mask, double capacity) {
  const double target = capacity * static_cast<double>(mask.total_size());
  return std::abs(static_cast<double>(mask.total_ones()) - target) <=
         static_cast<double>(mask.layer_count());
}

ClientState local_train(ClientState state, const LocalTrainOptions& opts) {
  if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr)) {
    throw DomainError("local_train: learning rate must be finite and >= 0");
  }
  if (!(opts.weight_decay >= 0.0)) throw DomainError("local_train: weight decay must be >= 0");
  if (state.train.size() == 0) {
    throw DomainError("local_train: client " + std::to_string(state.id) + " has no training data");
  }
  if (!density_matches_capacity(state.mask, state.capacity)) {
    throw DomainError("local_train: client " + std::to_string(state.id) + " mask density " +
                      std::to_string(state.mask.density()) + " does not match capacity " +
                      std::to_string(state.capacity));
  }
  if (opts.steps == 0) return state;

  const auto shapes = state.model.shapes();
  double loss_sum = 0.0;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const Batch batch = sample_batch(state.train, opts.batch_size, state.rng);
    if (opts.lr == 0.0) {
      loss_sum += forward(state.model, state.mask, batch).loss;
    } else {
      auto [value, grad] = masked_value_and_gradient(state.model, state.mask, batch);
      loss_sum += value.loss;
      if (opts.weight_decay > 0.0) {
        for (std::size_t l = 0; l < grad.layers.size(); ++l) {
          grad.layers[l].weight +=
              opts.weight_decay * apply_mask(state.model.layers[l].weight, state.mask.layer(l));
        }
      }
      state.model = sgd_step(state.model, grad, opts.lr);
    }
    state.counters.train_flops +=
        training_flops(shapes, state.mask, static_cast<std::int64_t>(batch.size()), 1);
  }
  state.counters.mean_batch_loss = loss_sum / static_cast<double>(opts.steps);
  return state;
}

ForwardResult evaluate_test(const ClientState& state) {
  return forward(state.model, state.mask, state.test.as_batch());
}

ForwardResult evaluate_train(const ClientState& state) {
  return forward(state.model, state.mask, state.train.as_batch());
}

}  // namespace dispfl
