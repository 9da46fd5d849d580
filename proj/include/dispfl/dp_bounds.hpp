#pragma once

// Closed-form privacy and generalization quantities for masked decentralized
// SGD with Gaussian gradient noise.
//
//   per-step epsilon:
//     eps~ = log((N - tau)/N + tau/N * exp(
//              (sqrt(2) beta D_g sigma / tau * sqrt(log(1/delta)) + beta^2 D_g^2 / tau^2)
//              / (2 sigma^2)))
//
//   composition over T steps (slack delta~):
//     eps' = sqrt(2 T log(1/delta~) eps~^2) + T eps~ (e^eps~ - 1)/(e^eps~ + 1)
//     delta' = e^{-(eps' + T eps~)/2} ((1/(1+e^eps~)) (2 T eps~/(T eps~ - eps')))^T
//                ((T eps~ + eps')/(T eps~ - eps'))^{-(eps' + T eps~)/(2 eps~)}
//              + 2 - (1 - e^eps~ q)^ceil(eps'/eps~) (1 - q)^(T - ceil(eps'/eps~))
//              - (1 - q)^T,                           q = delta / (1 + e^eps~)
//
//   P[|empirical - expected risk| < 9 eps'] > 1 - e^{-eps'} delta' / eps' * log(2/eps'),
//   provided N >= 2/eps'^2 * log(16 / (e^{-eps'} delta')).
//
// Everything is evaluated in long double; delta' goes through log space.

#include <cstdint>
#include <optional>
#include <string>

namespace dispfl {

struct BoundParams {
  double samples = 1000;          // N
  double batch = 32;              // tau, 1 <= tau <= N
  std::int64_t iterations = 100;  // T
  double beta = 1.0;              // union mask density, in [0, 1]
  double gradient_diameter = 1.0; // D_g >= 0
  double sigma = 1.0;             // noise scale > 0
  double delta = 1e-2;            // in (0, 1)
  double delta_tilde = 1e-5;      // composition slack, in (0, 1)

  /// Throws DomainError naming the first violated constraint.
  void validate() const;
};

long double eps_tilde(const BoundParams& p);

/// Why delta' is or is not a finite real number.
enum class DeltaStatus {
  ok,
  pole,      // T eps~ == eps': the middle factor divides by zero
  non_real,  // T eps~ < eps': negative base under a fractional power
  overflow,  // finite inputs, but the value exceeds long double range (delta' = +inf)
};

std::string to_string(DeltaStatus s);

struct Composition {
  long double eps_prime = 0;
  /// Meaningful when status is ok (value) or overflow (+inf).
  long double delta_prime = 0;
  DeltaStatus status = DeltaStatus::ok;
};

/// Composes `eps_step` over p.iterations steps. eps_step = 0 gives eps' = 0 and
/// the eps~ -> 0 limit of delta'.
Composition compose(const BoundParams& p, long double eps_step);

struct GeneralizationBound {
  long double eps_tilde = 0;
  long double eps_prime = 0;
  long double gap = 0;  // 9 eps'
  DeltaStatus delta_status = DeltaStatus::ok;
  std::optional<long double> delta_prime;
  /// e^{-eps'} delta' / eps' * log(2 / eps'); empty when delta' is unavailable
  /// or the statement is vacuous.
  std::optional<long double> failure_prob;
  /// log(2/eps') <= 0 (eps' >= 2) or eps' == 0: the probability statement says nothing.
  bool vacuous = false;
  /// Whether N meets the sample-size hypothesis; empty when it cannot be evaluated.
  std::optional<bool> sample_condition;
};

GeneralizationBound generalization_gap_bound(const BoundParams& p);

}  // namespace dispfl
