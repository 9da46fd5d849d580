#include "dispfl/dp_bounds.hpp"

#include <cmath>
#include <limits>

#include "dispfl/error.hpp"

namespace dispfl {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(std::string("bound parameters: ") + what);
}

}  // namespace

void BoundParams::validate() const {
  require(std::isfinite(samples) && samples >= 1, "N must be >= 1");
  require(std::isfinite(batch) && batch >= 1 && batch <= samples, "tau must lie in [1, N]");
  require(iterations >= 1, "T must be >= 1");
  require(beta >= 0 && beta <= 1, "beta must lie in [0, 1]");
  require(std::isfinite(gradient_diameter) && gradient_diameter >= 0, "D_g must be finite and >= 0");
  require(std::isfinite(sigma) && sigma > 0, "sigma must be finite and > 0");
  require(delta > 0 && delta < 1, "delta must lie in (0, 1)");
  require(delta_tilde > 0 && delta_tilde < 1, "delta_tilde must lie in (0, 1)");
}

std::string to_string(DeltaStatus s) {
  switch (s) {
    case DeltaStatus::ok: return "ok";
    case DeltaStatus::pole: return "pole";
    case DeltaStatus::non_real: return "non_real";
    case DeltaStatus::overflow: return "overflow";
  }
  return "?";
}

long double eps_tilde(const BoundParams& p) {
  p.validate();
  using LD = long double;
  const LD n = p.samples;
  const LD tau = p.batch;
  const LD bd = static_cast<LD>(p.beta) * static_cast<LD>(p.gradient_diameter);
  const LD sigma = p.sigma;
  const LD num = std::sqrt(LD{2}) * bd * sigma / tau * std::sqrt(std::log(1 / static_cast<LD>(p.delta))) +
                 bd * bd / (tau * tau);
  const LD exponent = num / (2 * sigma * sigma);
  // (N - tau)/N + tau/N e^x  ==  1 + tau/N (e^x - 1); exactly 0 when x == 0.
  return std::log1p(tau / n * std::expm1(exponent));
}

Composition compose(const BoundParams& p, long double eps_step) {
  p.validate();
  if (!(eps_step >= 0) || !std::isfinite(eps_step)) {
    throw DomainError("compose: per-step epsilon must be finite and >= 0");
  }
  using LD = long double;
  const LD t = static_cast<LD>(p.iterations);
  const LD e = eps_step;
  const LD slack = std::log(1 / static_cast<LD>(p.delta_tilde));
  const LD th = std::tanh(e / 2);  // (e^x - 1) / (e^x + 1)

  Composition out;
  out.eps_prime = std::sqrt(2 * t * slack * e * e) + t * e * th;

  // eps'/eps~, written so that it has a limit as eps~ -> 0.
  const LD r = std::sqrt(2 * t * slack) + t * th;
  if (r == t) {
    out.status = DeltaStatus::pole;
    return out;
  }
  if (r > t) {
    out.status = DeltaStatus::non_real;
    return out;
  }

  const LD log_first = -e * (r + t) / 2 +
                       t * (std::log(2 * t) - std::log1p(std::exp(e)) - std::log(t - r)) -
                       (r + t) / 2 * (std::log(t + r) - std::log(t - r));
  const LD q = static_cast<LD>(p.delta) / (1 + std::exp(e));
  const LD c = e > 0 ? std::ceil(out.eps_prime / e) : std::ceil(r);
  const LD second = 2 - std::exp(c * std::log1p(-std::exp(e) * q) + (t - c) * std::log1p(-q));
  const LD third = -std::exp(t * std::log1p(-q));
  const LD first = std::exp(log_first);

  out.delta_prime = first + second + third;
  if (!std::isfinite(out.delta_prime)) {
    out.delta_prime = std::numeric_limits<LD>::infinity();
    out.status = DeltaStatus::overflow;
  }
  return out;
}

GeneralizationBound generalization_gap_bound(const BoundParams& p) {
  GeneralizationBound out;
  out.eps_tilde = eps_tilde(p);
  if (!std::isfinite(out.eps_tilde)) throw DomainError("generalization bound: per-step epsilon overflowed");
  const auto comp = compose(p, out.eps_tilde);
  const long double ep = comp.eps_prime;
  out.eps_prime = ep;
  out.gap = 9 * ep;
  out.delta_status = comp.status;
  out.vacuous = !(ep > 0 && ep < 2);

  if (comp.status == DeltaStatus::ok || comp.status == DeltaStatus::overflow) {
    out.delta_prime = comp.delta_prime;
  }
  if (comp.status != DeltaStatus::ok) return out;

  const long double dp = comp.delta_prime;
  if (!out.vacuous) out.failure_prob = std::exp(-ep) * dp / ep * std::log(2 / ep);
  if (ep > 0 && dp > 0) {
    const long double needed = 2 / (ep * ep) * std::log(16 / (std::exp(-ep) * dp));
    out.sample_condition = static_cast<long double>(p.samples) >= needed;
  }
  return out;
}

}  // namespace dispfl
