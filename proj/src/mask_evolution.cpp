#include "dispfl/mask_evolution.hpp"

#include <numbers>

#include "dispfl/accounting.hpp"

namespace dispfl {

double anneal_rate(const AnnealSchedule& sched, std::size_t t) {
  if (!(sched.alpha0 >= 0.0 && sched.alpha0 < 1.0)) {
    throw DomainError("anneal_rate: alpha0 must lie in [0, 1)");
  }
  if (sched.total_rounds < 1) throw DomainError("anneal_rate: total_rounds must be >= 1");
  if (t > sched.total_rounds) {
    throw DomainError("anneal_rate: round " + std::to_string(t) + " beyond " +
                      std::to_string(sched.total_rounds));
  }
  if (t == sched.total_rounds) return 0.0;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(sched.total_rounds);
  return sched.alpha0 / 2.0 * (1.0 + std::cos(phase));
}

ClientState evolve_mask(ClientState state, const MaskSearchOptions& opts, std::size_t t) {
  const double alpha = anneal_rate(opts.schedule, t);
  auto [pruned, counts] = prune_by_magnitude(state.model, state.mask, alpha);
  if (std::all_of(counts.begin(), counts.end(), [](std::int64_t n) { return n == 0; })) {
    return state;
  }

  const Batch batch = sample_batch(state.train, opts.batch_size, state.rng);
  const Gradient grad = dense_gradient(state.model, batch);
  Mask next = regrow_by_gradient(pruned, state.mask, grad, counts);

  const auto shapes = state.model.shapes();
  state.counters.search_flops +=
      training_flops(shapes, Mask::ones(shapes), static_cast<std::int64_t>(batch.size()), 1);
  state.counters.mask_churn += hamming_distance(state.mask, next).raw;

  // Weights outside the old mask were already 0, so newly grown coordinates
  // come out as 0; pruned ones are cleared here.
  state.model = masked_copy(state.model, next);
  state.mask = std::move(next);
  return state;
}

}  // namespace dispfl
