#pragma once

// Two-state (focal / competitor) heterogeneous semi-Markov brand switching:
// Poisson purchase times with individual rate lambda_i, focal repurchase
// probability p_i and competitor repurchase probability q_i.
//
// Times are in years relative to the survey date (negative = past).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/prob.hpp"

namespace clvsurvey::sm {

/// Stationary probability of the focal state.
double equilibrium_prob(double p, double q) noexcept;

/// Probability that the next purchase is focal given the current state.
inline double focal_next_prob(int state, double p, double q) noexcept { return state == 1 ? p : 1.0 - q; }

struct GeneratorSettings {
  std::size_t n = 100000;
  double gamma_shape = 3.0;
  double delta_rate = 10.0;
  double alpha_p = 4.0;
  double beta_p = 6.0;
  double alpha_q = 4.0;
  double beta_q = 6.0;
  double history_back = 30.0;  // years before the survey
  double history_forward = 40.0;

  void validate() const;
};

struct Purchase {
  double time;
  int state;  // 1 = focal
};

struct Individual {
  double lambda = 0.0;
  double p = 0.0;
  double q = 0.0;
  int initial_state = 0;
  std::vector<Purchase> history;  // strictly increasing times

  /// State after the latest purchase before time 0 (initial state if none).
  int current_state() const noexcept;
  std::size_t purchases_before_survey() const noexcept;
};

struct Population {
  GeneratorSettings settings;
  std::vector<Individual> individuals;
};

Population generate_population(const GeneratorSettings& settings, std::uint64_t seed);

/// Simulates one individual's switching chain from `initial_state` over
/// [start, end]; exposed for testing the dynamics.
std::vector<Purchase> simulate_history(double lambda, double p, double q, int initial_state, double start, double end,
                                       RngStream& rng);

struct SurveyObservation {
  int s0 = 0;  // state of the latest purchase
  int s1 = 0;  // state of the purchase before it
  double t = 0.0;       // years between the two purchases
  double t_star = 0.0;  // years since the latest purchase
  std::size_t individual = 0;
};

struct SurveySample {
  std::vector<SurveyObservation> observations;
  std::size_t rejections = 0;  // sampled individuals with fewer than two past purchases
};

/// Uniform sample without replacement among individuals with at least two
/// purchases before the survey date.
SurveySample extract_survey(const Population& population, std::size_t n, std::uint64_t seed);

void write_observations(std::ostream& out, const std::vector<SurveyObservation>& obs);
std::vector<SurveyObservation> read_observations(std::istream& in);

/// Per-individual traits and purchase counts of a population.
void write_population_summary(std::ostream& out, const Population& population);

// ---------------------------------------------------------------- inference

/// Added to v_lambda in the shape/rate derivation, as in the reference code.
inline constexpr double kVarianceStabilizer = 1e-5;

struct Hyper {
  double m_lambda = 0.3;
  double v_lambda = 0.03;
  double m_p = 0.4;
  double k_p = 10.0;
  double m_q = 0.4;
  double k_q = 10.0;

  double gamma_shape() const noexcept { return m_lambda * m_lambda / (v_lambda + kVarianceStabilizer); }
  double delta_rate() const noexcept { return m_lambda / (v_lambda + kVarianceStabilizer); }
  double alpha_p() const noexcept { return k_p * m_p; }
  double beta_p() const noexcept { return k_p * (1.0 - m_p); }
  double alpha_q() const noexcept { return k_q * m_q; }
  double beta_q() const noexcept { return k_q * (1.0 - m_q); }
};

struct Params {
  Hyper hyper;
  std::vector<double> lambda;
  std::vector<double> p;
  std::vector<double> q;
  std::vector<int> s2;  // latent state before the previous purchase
};

struct Priors {
  double m_lambda_shape = 2.0, m_lambda_rate = 1.0;
  double v_lambda_shape = 2.0, v_lambda_rate = 1.0;
  double k_shape = 10.0, k_rate = 1.0;
};

struct LogPosteriorTerms {
  double times = 0.0;       // exponential T and T*
  double states = 0.0;      // S(-2), S(-1), S(0)
  double population = 0.0;  // lambda, p, q given hyperparameters
  double hyperpriors = 0.0;

  double total() const noexcept { return times + states + population + hyperpriors; }
};

/// Throws NumericalError naming the term when the result is not finite.
LogPosteriorTerms log_posterior_terms(const Params& params, const std::vector<SurveyObservation>& data,
                                      const Priors& priors);
double log_posterior_sm(const Params& params, const std::vector<SurveyObservation>& data, const Priors& priors);

class SemiMarkovModel final : public mcmc::Model {
 public:
  enum BlockId : std::size_t { kMLambda, kVLambda, kMp, kKp, kMq, kKq, kLambda, kP, kQ, kS2 };

  SemiMarkovModel(const std::vector<SurveyObservation>& data, Priors priors = {});

  const std::vector<mcmc::ParameterBlock>& blocks() const override { return blocks_; }
  mcmc::State initial_state(RngStream& rng) const override;
  double log_posterior(const mcmc::State& state) const override;
  double log_local(const mcmc::State& state, std::size_t block, std::size_t index) const override;
  void sample_conditional(mcmc::State& state, std::size_t block, RngStream& rng) const override;
  std::vector<std::vector<std::size_t>> joint_groups() const override;
  double log_group_local(const mcmc::State& state, std::size_t group) const override;

  /// Moves k_p (k_q) jointly with every p_i (q_i): k is scaled by e^eps and
  /// the logits are contracted toward logit(m) by e^(-eps/2), which keeps
  /// the individual values at roughly the same population quantile.
  std::vector<std::string> custom_moves() const override { return {"rescale_p", "rescale_q"}; }
  bool custom_move(mcmc::State& state, std::size_t move, double scale, RngStream& rng) const override;

  Params to_params(const mcmc::State& state) const;

 private:
  double lambda_population(const mcmc::State& s) const;
  double p_population(const mcmc::State& s) const;
  double q_population(const mcmc::State& s) const;
  double individual_states(const mcmc::State& s, std::size_t i) const;

  const std::vector<SurveyObservation>& data_;
  Priors priors_;
  std::vector<mcmc::ParameterBlock> blocks_;
};

mcmc::PosteriorDraws fit_sm(const std::vector<SurveyObservation>& data, const mcmc::ChainConfig& config,
                            const Priors& priors = {});

/// Hyperparameters of pooled draw `p`.
Hyper hyper_from_draw(const mcmc::PosteriorDraws& draws, std::size_t p);

// ---------------------------------------------------------------- oracle

struct ValueSpec {
  double value_per_purchase = 100.0;
  double horizon_years = 40.0;
  double annual_discount = 0.10;
};

/// Discounted value of focal purchases in (0, horizon].
double focal_npv(const std::vector<Purchase>& history, const ValueSpec& spec) noexcept;

/// Min, quartiles, mean and max of a sample.
struct Distribution {
  std::size_t n = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};
Distribution describe(std::vector<double> values);

struct OracleReport {
  double ce = 0.0;
  double mean_clv = 0.0;
  Distribution focal;       // current state focal
  Distribution competitor;  // current state competitor
  std::vector<double> clv;  // per individual
};

OracleReport true_ce_oracle(const Population& population, const ValueSpec& spec);

}  // namespace clvsurvey::sm
