#pragma once

#include <cstdint>
#include <limits>

#include "dispfl/data.hpp"
#include "dispfl/mask.hpp"
#include "dispfl/model.hpp"
#include "dispfl/rng.hpp"

namespace dispfl {

/// Work done by one client since the counters were last reset.
struct ClientCounters {
  std::int64_t train_flops = 0;
  std::int64_t search_flops = 0;
  std::int64_t mask_churn = 0;
  /// Mean mini-batch loss over the last local phase (NaN before any step).
  double mean_batch_loss = std::numeric_limits<double>::quiet_NaN();
};

struct ClientState {
  std::size_t id = 0;
  Model model;
  Mask mask;
  /// Target density in (0, 1].
  double capacity = 1.0;
  Dataset train;
  Dataset test;
  Rng rng;
  ClientCounters counters;
};

struct LocalTrainOptions {
  double lr = 0.1;
  std::size_t steps = 1;
  std::size_t batch_size = 32;
  /// L2 penalty, applied to surviving weights only (never biases).
  double weight_decay = 5e-4;
};

/// min(batch_size, n) distinct samples of `ds`.
Batch sample_batch(const Dataset& ds, std::size_t batch_size, Rng& rng);

/// True when the mask holds round(capacity * P) weights up to one per layer.
bool density_matches_capacity(const Mask& mask, double capacity);

/// `steps` rounds of batch sampling, masked gradient and SGD on the client's
/// own stream. Masked-out weights stay exactly 0. lr = 0 evaluates the batch
/// losses but leaves the parameters untouched. Adds to the training FLOP
/// counter and sets the mean batch loss.
ClientState local_train(ClientState state, const LocalTrainOptions& opts);

/// Accuracy/loss of the client's masked model on its test shard.
ForwardResult evaluate_test(const ClientState& state);
/// Same on the whole train shard.
ForwardResult evaluate_train(const ClientState& state);

}  // namespace dispfl
