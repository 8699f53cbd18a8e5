#pragma once

// Interval-censored Gamma purchase intervals with log-linear rates, logistic
// repurchase and age-weighted brand choice. Latent intervals are augmented
// and drawn from truncated Gamma conditionals; everything else is updated by
// random-walk Metropolis.
//
// Times inside the model are in years. Dataset intervals (months) are
// divided by 12 on the way in.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/survey.hpp"

namespace clvsurvey::mobile {

struct Priors {
  double kappa_shape = 1.0;
  double kappa_rate = 1.0;
  double coef_variance = 1000.0;
  double weight_a = 2.0;
  double weight_b = 2.0;
};

/// Slot layout shared by the beta and alpha vectors:
/// intercept, brand[2..B], agegr[2..6], gender[2], incomegr[2..5], region[2..4].
/// Reference levels are implicit zeros.
class CoefficientLayout {
 public:
  explicit CoefficientLayout(int n_brands);

  int n_brands() const noexcept { return n_brands_; }
  std::size_t size() const noexcept;

  /// Slot indices active for a (brand, covariates) pair, intercept first.
  /// Writes at most 6 entries and returns how many.
  std::size_t active(int brand, const Covariates& c, std::size_t out[6]) const;

  std::vector<std::string> labels(const std::string& prefix, const BrandCatalog& brands) const;

  std::size_t brand_slot(int brand) const;  // brand >= 2
  std::size_t agegr_slot(int agegr) const;  // agegr >= 2

 private:
  int n_brands_;
};

double linear_predictor(const std::vector<double>& coef, const CoefficientLayout& layout, int brand,
                        const Covariates& c);

struct Params {
  double kappa = 1.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> w;         // brand-major: w[(brand-1)*6 + (agegr-1)]
  std::vector<double> latent_T;  // years, one per record

  double weight(int brand, int agegr) const { return w[static_cast<std::size_t>((brand - 1) * kAgeGroups + agegr - 1)]; }
};

/// Purchase rate (per year) for an interval spent holding `brand`.
double rate_of(int brand, const Covariates& c, const std::vector<double>& beta, const CoefficientLayout& layout);
double rate_of(const ModelRecord& record, const std::vector<double>& beta, const CoefficientLayout& layout);

double repurchase_prob(int brand, const Covariates& c, const std::vector<double>& alpha,
                       const CoefficientLayout& layout);
double repurchase_prob(const ModelRecord& record, const std::vector<double>& alpha, const CoefficientLayout& layout);

/// P(v | churn from u, age group h) for v = 1..B (index v-1). Entry u-1 is 0.
std::vector<double> acquisition_probs(int current, int agegr, const std::vector<double>& w, int n_brands);

/// Record interval bounds in years. Right-censored records are capped at
/// 200 months.
std::pair<double, double> latent_bounds(const ModelRecord& record);

struct LogPosteriorTerms {
  double intervals = 0.0;
  double repurchase = 0.0;
  double acquisition = 0.0;
  double priors = 0.0;

  double total() const noexcept { return intervals + repurchase + acquisition + priors; }
};

/// Throws NumericalError naming the term when the result is not finite.
LogPosteriorTerms log_posterior_terms(const Params& params, const ModelDataset& data, const Priors& priors);
double log_posterior(const Params& params, const ModelDataset& data, const Priors& priors);

class MobileModel final : public mcmc::Model {
 public:
  enum BlockId : std::size_t { kKappa = 0, kBeta = 1, kAlpha = 2, kWeights = 3, kLatent = 4 };

  MobileModel(const ModelDataset& data, Priors priors = {});

  const std::vector<mcmc::ParameterBlock>& blocks() const override { return blocks_; }
  mcmc::State initial_state(RngStream& rng) const override;
  double log_posterior(const mcmc::State& state) const override;
  double log_local(const mcmc::State& state, std::size_t block, std::size_t index) const override;
  void sample_conditional(mcmc::State& state, std::size_t block, RngStream& rng) const override;
  std::vector<std::vector<std::size_t>> joint_groups() const override;

  Params to_params(const mcmc::State& state) const;
  const CoefficientLayout& layout() const noexcept { return layout_; }

 private:
  const ModelDataset& data_;
  Priors priors_;
  CoefficientLayout layout_;
  std::vector<mcmc::ParameterBlock> blocks_;
  std::vector<std::pair<double, double>> bounds_;
  std::vector<std::vector<std::size_t>> active_;          // per record
  std::vector<std::vector<std::size_t>> records_by_slot_;  // per coefficient slot
  std::vector<std::size_t> transitions_;                  // records with a repurchase outcome
  std::vector<std::vector<std::size_t>> churn_by_age_;     // churned records per age group
};

mcmc::PosteriorDraws fit(const ModelDataset& data, const mcmc::ChainConfig& config, const Priors& priors = {});

/// Parameters (without latent intervals) of pooled draw `p`.
Params params_from_draw(const mcmc::PosteriorDraws& draws, std::size_t p, int n_brands);

// ---------------------------------------------------------------- checks

struct BrandRegeneration {
  std::vector<std::string> labels;
  std::vector<int> observed;
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;

  bool all_inside() const;
};

/// One simulated transition per record and posterior draw, starting from the
/// record's previous brand; counts of the resulting brand with 95% bands.
BrandRegeneration regenerate_brands(const mcmc::PosteriorDraws& draws, const ModelDataset& data, std::uint64_t seed);

struct CdfEnvelope {
  std::vector<double> grid;  // months
  std::vector<std::size_t> draw_index;
  std::vector<std::vector<double>> realizations;  // [realization][grid point]
  std::vector<double> ecdf_min;                   // CDF of interval lower limits
  std::vector<double> ecdf_max;                   // CDF of interval upper limits
  std::vector<double> inside_fraction;            // per grid point

  double worst_inside_fraction() const;
};

/// Default grid: 0, 3, ..., 198 months.
std::vector<double> default_cdf_grid();

/// Mixture CDF of Gamma(kappa, lambda_i) over the finite-interval records for
/// `n_realizations` random posterior draws, against the empirical CDFs of the
/// interval limits.
CdfEnvelope cdf_envelope(const mcmc::PosteriorDraws& draws, const ModelDataset& data, const std::vector<double>& grid,
                         std::size_t n_realizations, std::uint64_t seed);

}  // namespace clvsurvey::mobile
