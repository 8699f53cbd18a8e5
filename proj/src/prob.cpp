#include "clvsurvey/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "clvsurvey/error.hpp"

namespace clvsurvey {

namespace {

namespace bmp = boost::math::policies;
using GammaPolicy = bmp::policy<bmp::promote_double<false>, bmp::overflow_error<bmp::ignore_error>,
                                bmp::underflow_error<bmp::ignore_error>>;

constexpr double kLogTwoPi = 1.8378770664093454836;

void require_spec(GammaSpec spec) {
  if (!spec.valid()) {
    std::ostringstream msg;
    msg << "invalid gamma parameters: shape=" << spec.shape << " rate=" << spec.rate;
    throw ValidationError(msg.str());
  }
}

[[noreturn]] void throw_region(const char* what, GammaSpec spec, double lo, double hi) {
  std::ostringstream msg;
  msg.precision(10);
  msg << what << " for Gamma(shape=" << spec.shape << ", rate=" << spec.rate << ") on [" << lo << ", " << hi
      << "]";
  throw NumericalError(msg.str());
}

double truncated_by_rejection(RngStream& rng, GammaSpec spec, double lo, double hi) {
  const double a = spec.shape;
  const double b = spec.rate;
  if (std::isinf(hi)) {
    // Shifted-exponential envelope; valid once lo lies beyond the mode.
    const double r = a > 1.0 ? b - (a - 1.0) / lo : b;
    if (!(r > 0.0) || !(lo > 0.0)) throw_region("rejection envelope undefined", spec, lo, hi);
    for (int k = 0; k < kRejectionBudget; ++k) {
      const double x = lo + sample_exponential(rng, r);
      const double log_accept = (a - 1.0) * std::log(x / lo) - (b - r) * (x - lo);
      if (std::log(rng.uniform()) <= log_accept) return x;
    }
    throw_region("rejection budget exhausted", spec, lo, hi);
  }
  if (a < 1.0) {
    // Power-law envelope x^(a-1) on [lo, hi], accept with exp(-b (x - lo)).
    const double lo_a = std::pow(lo, a);
    const double hi_a = std::pow(hi, a);
    for (int k = 0; k < kRejectionBudget; ++k) {
      const double x = std::clamp(std::pow(lo_a + rng.uniform() * (hi_a - lo_a), 1.0 / a), lo, hi);
      if (std::log(rng.uniform()) <= -b * (x - lo)) return x;
    }
    throw_region("rejection budget exhausted", spec, lo, hi);
  }
  const double mode = (a - 1.0) / b;
  const double log_peak = gamma_logpdf(std::clamp(mode, lo, hi), spec);
  for (int k = 0; k < kRejectionBudget; ++k) {
    const double x = sample_uniform(rng, lo, hi);
    if (std::log(rng.uniform()) <= gamma_logpdf(x, spec) - log_peak) return x;
  }
  throw_region("rejection budget exhausted", spec, lo, hi);
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_stream_id(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return mix64(mix64(mix64(a) ^ b) ^ c);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix64(seed ^ mix64(stream_id))) {}

RngStream RngStream::substream(std::uint64_t child) const {
  return RngStream(seed_, derive_stream_id(stream_id_, child));
}

// ---------------------------------------------------------------- densities

double gamma_logpdf(double x, GammaSpec spec) noexcept {
  if (!spec.valid() || !(x > 0.0) || std::isinf(x)) return -kInf;
  return spec.shape * std::log(spec.rate) - std::lgamma(spec.shape) + (spec.shape - 1.0) * std::log(x) -
         spec.rate * x;
}

double beta_logpdf(double x, double a, double b) noexcept {
  if (!(a > 0.0) || !(b > 0.0) || !(x > 0.0) || !(x < 1.0)) return -kInf;
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta;
}

double normal_logpdf(double x, double mean, double variance) noexcept {
  if (!(variance > 0.0) || !std::isfinite(x)) return -kInf;
  const double z = x - mean;
  return -0.5 * (kLogTwoPi + std::log(variance)) - 0.5 * z * z / variance;
}

double exponential_logpdf(double x, double rate) noexcept {
  if (!(rate > 0.0) || !(x >= 0.0) || std::isinf(x)) return -kInf;
  return std::log(rate) - rate * x;
}

double bernoulli_logpmf(int y, double p) noexcept {
  if (!(p >= 0.0 && p <= 1.0)) return -kInf;
  if (y == 1) return std::log(p);
  if (y == 0) return std::log1p(-p);
  return -kInf;
}

double gamma_cdf(double x, GammaSpec spec) {
  require_spec(spec);
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(spec.shape, spec.rate * x, GammaPolicy());
}

double gamma_sf(double x, GammaSpec spec) {
  require_spec(spec);
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(spec.shape, spec.rate * x, GammaPolicy());
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

// ---------------------------------------------------------------- samplers

double sample_uniform(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

double sample_normal(RngStream& rng, double mean, double sd) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double sample_exponential(RngStream& rng, double rate) {
  if (!(rate > 0.0)) throw ValidationError("exponential rate must be positive");
  return -std::log(rng.uniform()) / rate;
}

double sample_gamma(RngStream& rng, GammaSpec spec) {
  require_spec(spec);
  if (spec.shape < 1.0) {
    const double boosted = sample_gamma(rng, GammaSpec{spec.shape + 1.0, spec.rate});
    return boosted * std::pow(rng.uniform(), 1.0 / spec.shape);
  }
  const double d = spec.shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = sample_normal(rng, 0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / spec.rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / spec.rate;
  }
}

double sample_beta(RngStream& rng, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("beta shapes must be positive");
  if (a >= 1.0 && b >= 1.0) {
    const double x = sample_gamma(rng, GammaSpec{a, 1.0});
    const double y = sample_gamma(rng, GammaSpec{b, 1.0});
    return x / (x + y);
  }
  // Small shapes: both gamma variates can underflow to 0, so work with their logs.
  auto log_gamma_variate = [&](double shape) {
    if (shape >= 1.0) return std::log(sample_gamma(rng, GammaSpec{shape, 1.0}));
    const double boosted = sample_gamma(rng, GammaSpec{shape + 1.0, 1.0});
    return std::log(boosted) + std::log(rng.uniform()) / shape;
  };
  const double lx = log_gamma_variate(a);
  const double ly = log_gamma_variate(b);
  return logistic(lx - ly);
}

int sample_bernoulli(RngStream& rng, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bernoulli probability outside [0, 1]");
  return rng.uniform() < p ? 1 : 0;
}

std::size_t sample_categorical(RngStream& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || std::isinf(w)) throw ValidationError("categorical weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("categorical weights must have a positive sum");
  const double target = rng.uniform() * total;
  double running = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    running += weights[j];
    last_positive = j;
    if (target < running) return j + 1;
  }
  return last_positive + 1;
}

double sample_truncated_gamma(RngStream& rng, GammaSpec spec, double lo, double hi) {
  require_spec(spec);
  if (!(lo >= 0.0) || !(lo < hi)) {
    std::ostringstream msg;
    msg << "invalid truncation region [" << lo << ", " << hi << "]";
    throw ValidationError(msg.str());
  }
  if (lo == 0.0 && std::isinf(hi)) return sample_gamma(rng, spec);

  const double a = spec.shape;
  const double x_lo = spec.rate * lo;
  const double x_hi = spec.rate * hi;
  const double p_lo = lo > 0.0 ? boost::math::gamma_p(a, x_lo, GammaPolicy()) : 0.0;

  double x = 0.0;
  if (p_lo < 0.5) {
    const double p_hi = std::isinf(hi) ? 1.0 : boost::math::gamma_p(a, x_hi, GammaPolicy());
    const double width = p_hi - p_lo;
    if (!(width > kTruncationMassFloor)) return truncated_by_rejection(rng, spec, lo, hi);
    const double u = p_lo + rng.uniform() * width;
    x = boost::math::gamma_p_inv(a, u, GammaPolicy()) / spec.rate;
  } else {
    const double q_lo = boost::math::gamma_q(a, x_lo, GammaPolicy());
    const double q_hi = std::isinf(hi) ? 0.0 : boost::math::gamma_q(a, x_hi, GammaPolicy());
    const double width = q_lo - q_hi;
    if (!(width > kTruncationMassFloor)) return truncated_by_rejection(rng, spec, lo, hi);
    const double u = q_hi + rng.uniform() * width;
    x = boost::math::gamma_q_inv(a, u, GammaPolicy()) / spec.rate;
  }
  if (!std::isfinite(x)) return truncated_by_rejection(rng, spec, lo, hi);
  return std::clamp(x, lo, hi);
}

}  // namespace clvsurvey
