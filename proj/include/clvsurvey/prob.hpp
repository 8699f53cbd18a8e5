#pragma once

// Probability kernels and seeded sampling shared by both models.
//
// Gamma densities use the rate parameterization throughout: mean = shape/rate.
// Log-densities return -infinity off the support instead of throwing.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace clvsurvey {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// splitmix64 finalizer; used to derive well-separated seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines a root seed with up to three stream coordinates into one stream id.
std::uint64_t derive_stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

/// A deterministic stream of random numbers.
///
/// Identical (seed, stream_id) pairs reproduce identical sequences on every
/// platform: the engine is std::mt19937_64, whose output is fully specified,
/// and all variates are produced by the samplers in this header rather than
/// by the implementation-defined std:: distributions.
///
/// A stream may be moved between threads but must not be shared.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Child stream keyed by this stream's identity and `child`.
  RngStream substream(std::uint64_t child) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

struct GammaSpec {
  double shape;
  double rate;

  double mean() const noexcept { return shape / rate; }
  bool valid() const noexcept { return shape > 0.0 && rate > 0.0 && shape < kInf && rate < kInf; }
};

// ---------------------------------------------------------------- densities

double gamma_logpdf(double x, GammaSpec spec) noexcept;
double beta_logpdf(double x, double a, double b) noexcept;
double normal_logpdf(double x, double mean, double variance) noexcept;
double exponential_logpdf(double x, double rate) noexcept;
double bernoulli_logpmf(int y, double p) noexcept;

/// Regularized lower incomplete gamma P(shape, rate*x).
double gamma_cdf(double x, GammaSpec spec);
/// Upper tail Q(shape, rate*x), accurate where the CDF is close to one.
double gamma_sf(double x, GammaSpec spec);

double logistic(double x) noexcept;
double logit(double p) noexcept;

// ---------------------------------------------------------------- samplers

double sample_uniform(RngStream& rng, double lo, double hi);
double sample_normal(RngStream& rng, double mean, double sd);
double sample_exponential(RngStream& rng, double rate);
/// Marsaglia–Tsang squeeze; shapes below one are boosted through shape + 1.
double sample_gamma(RngStream& rng, GammaSpec spec);
double sample_beta(RngStream& rng, double a, double b);
int sample_bernoulli(RngStream& rng, double p);
/// Returns a 1-based index with probability weight_j / sum(weights).
std::size_t sample_categorical(RngStream& rng, std::span<const double> weights);

/// Gamma(spec) conditioned on [lo, hi]; hi may be infinite.
///
/// Inverts the CDF on the conditional uniform when the interval carries more
/// than 1e-12 probability mass, otherwise falls back to rejection sampling
/// with a budget of 10^4 proposals. Throws NumericalError when the budget is
/// exhausted.
double sample_truncated_gamma(RngStream& rng, GammaSpec spec, double lo, double hi);

inline constexpr double kTruncationMassFloor = 1e-12;
inline constexpr int kRejectionBudget = 10000;

}  // namespace clvsurvey
