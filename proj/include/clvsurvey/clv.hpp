#pragma once

// Forward simulation of purchase histories from posterior draws, discounted
// value per brand, and aggregation to segment CLVs and customer equity.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/semimarkov.hpp"
#include "clvsurvey/survey.hpp"

namespace clvsurvey::clv {

struct RevenueSpec {
  std::vector<double> asp_per_brand;  // currency per purchase, indexed brand-1
  double annual_discount = 0.10;
  double horizon_months = 60.0;

  /// Nokia 68, Apple 473, Samsung 178, Other 0 euros; 10%; five years.
  static RevenueSpec mobile_default();
  void validate(int n_brands) const;
};

struct TimedPurchase {
  double months;  // after the survey date
  int brand;
};

/// Sum of ASP(brand) * (1 + r)^(-t/12) over purchases in (0, horizon].
/// With `brand` > 0 only purchases of that brand count.
double npv(const std::vector<TimedPurchase>& history, const RevenueSpec& spec, int brand = 0);

/// Per-individual, per-draw CLV for every brand. When a draw carries several
/// replicate histories the stored value is their mean.
class ClvSamples {
 public:
  ClvSamples() = default;
  ClvSamples(std::size_t n_individuals, std::size_t n_draws, int n_brands);

  std::size_t n_individuals() const noexcept { return n_individuals_; }
  std::size_t n_draws() const noexcept { return n_draws_; }
  int n_brands() const noexcept { return n_brands_; }

  double& at(std::size_t individual, std::size_t draw, int brand) {
    return v_[(individual * n_draws_ + draw) * static_cast<std::size_t>(n_brands_) + static_cast<std::size_t>(brand - 1)];
  }
  double at(std::size_t individual, std::size_t draw, int brand) const {
    return v_[(individual * n_draws_ + draw) * static_cast<std::size_t>(n_brands_) + static_cast<std::size_t>(brand - 1)];
  }

  std::vector<std::size_t> draw_index;  // pooled posterior index per draw column
  std::size_t replicates_per_draw = 1;

 private:
  std::size_t n_individuals_ = 0;
  std::size_t n_draws_ = 0;
  int n_brands_ = 0;
  std::vector<double> v_;
};

/// Draw columns used for `histories` histories per individual: one history
/// per draw when there are at least that many pooled draws, otherwise every
/// draw with enough replicates to reach the count.
void plan_draws(std::size_t pooled, std::size_t histories, std::vector<std::size_t>& index, std::size_t& replicates);

/// Mobile model: the elapsed time e since the current purchase is the
/// midpoint of its recall window; the first future purchase comes after a
/// Gamma interval left-truncated at e; later intervals are fresh Gamma draws
/// with the rate of the brand then held.
ClvSamples simulate_histories(const mcmc::PosteriorDraws& draws, const ModelDataset& data, const RevenueSpec& spec,
                              std::size_t histories, std::uint64_t seed);

/// One simulated history for a single individual under fixed parameters.
std::vector<TimedPurchase> simulate_mobile_history(int current_brand, const Covariates& c, double elapsed_months,
                                                   double kappa, const std::vector<double>& beta,
                                                   const std::vector<double>& alpha, const std::vector<double>& w,
                                                   int n_brands, double horizon_months, RngStream& rng);

struct ClvSummary {
  int brand = 1;
  std::string segment;  // "current" / "other", or an age-group label
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_individuals = 0;
  std::size_t n_histories = 0;
};

enum class Segmentation { brand_status, brand_agegr };

/// Mean of per-individual means with the 95% interval of the per-draw
/// segment mean. Empty segments are skipped and named in `warnings`.
std::vector<ClvSummary> summarize_clv(const ClvSamples& samples, const ModelDataset& data, Segmentation seg,
                                      std::vector<std::string>* warnings = nullptr);

/// Quantiles of individual simulated CLVs by brand and customer status.
struct QuantileRow {
  int brand = 1;
  std::string segment;
  sm::Distribution dist;
};
std::vector<QuantileRow> clv_quantiles(const ClvSamples& samples, const ModelDataset& data);

/// Population count per age group (index agegr-1).
struct PopulationStrata {
  std::map<int, double> agegr_counts;
};

struct CeSummary {
  int brand = 1;
  int agegr = 0;  // 0 = all age groups
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// CE per brand and per brand x age group, scaled per draw:
/// CE_b(d) = sum_h count_h * mean_{i in h} CLV_b(i, d).
std::vector<CeSummary> scale_to_population(const ClvSamples& samples, const ModelDataset& data,
                                           const PopulationStrata& strata);

// ---------------------------------------------------------------- semi-Markov

struct SmEstimate {
  std::vector<double> ce_by_draw;  // population-scaled
  double ce_mean = 0.0;
  double ce_d1 = 0.0;  // 1st decile
  double ce_d9 = 0.0;  // 9th decile
  sm::Distribution focal;
  sm::Distribution competitor;
  std::size_t draws_used = 0;
};

/// Forward histories for each sampled individual under its per-draw
/// (lambda_i, p_i, q_i); the sample CE of each draw is scaled by
/// population_size / n.
SmEstimate estimate_sm(const mcmc::PosteriorDraws& draws, const std::vector<sm::SurveyObservation>& data,
                       const sm::ValueSpec& spec, std::size_t histories, double population_size, std::uint64_t seed);

}  // namespace clvsurvey::clv
