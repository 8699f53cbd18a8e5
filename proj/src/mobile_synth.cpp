#include "clvsurvey/mobile_synth.hpp"

#include <cmath>
#include <numeric>

#include "clvsurvey/error.hpp"

namespace clvsurvey::mobile {

namespace {

template <std::size_t N>
int total(const std::array<int, N>& a) {
  return std::accumulate(a.begin(), a.end(), 0);
}

// Shuffled list of 1-based category codes with the given counts.
template <std::size_t N>
std::vector<int> shuffled_codes(const std::array<int, N>& counts, RngStream& rng) {
  std::vector<int> out;
  for (std::size_t k = 0; k < N; ++k) out.insert(out.end(), static_cast<std::size_t>(counts[k]), static_cast<int>(k + 1));
  for (std::size_t i = out.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(out[i - 1], out[std::min(j, i - 1)]);
  }
  return out;
}

// Date answer for a purchase `elapsed_years` before the end of the survey month.
DateAnswer recall(double elapsed_years, int granularity, CalendarMonth survey) {
  const double position = static_cast<double>(survey.index() + 1) - 12.0 * elapsed_years;
  const int idx = static_cast<int>(std::floor(position));
  const int year = idx >= 0 ? idx / 12 : (idx - 11) / 12;
  const int month = idx - 12 * year + 1;
  switch (granularity) {
    case 1: return DateAnswer::of_month(year, month);
    case 2: {
      if (month == 12) return DateAnswer::of_season(year + 1, Season::winter);
      if (month <= 2) return DateAnswer::of_season(year, Season::winter);
      if (month <= 5) return DateAnswer::of_season(year, Season::spring);
      if (month <= 8) return DateAnswer::of_season(year, Season::summer);
      return DateAnswer::of_season(year, Season::autumn);
    }
    case 3: return DateAnswer::of_year(year);
    default: return DateAnswer::unknown();
  }
}

int transition(int from, const Covariates& c, const Params& truth, const CoefficientLayout& layout, RngStream& rng) {
  if (sample_bernoulli(rng, repurchase_prob(from, c, truth.alpha, layout)) == 1) return from;
  const auto probs = acquisition_probs(from, c.agegr, truth.w, layout.n_brands());
  return static_cast<int>(sample_categorical(rng, probs));
}

}  // namespace

Params reference_truth() {
  Params p;
  p.kappa = 1.53;
  p.beta = {-0.46, 0.71, 0.55, 0.10, -0.09, -0.23, -0.34, -0.44, -0.62,
            0.06,  0.20, 0.16, 0.22, 0.28,  -0.02, -0.16, 0.01};
  p.alpha = {0.25, -0.05, -1.11, -3.11, 0.80,  1.02, 1.33,  1.84, 2.27,
             0.22, 0.42,  0.06,  -0.60, -0.34, -1.09, -0.16, -0.33};
  // Brand shares by age group: Nokia, Apple, Samsung, Other.
  p.w = {0.46, 0.52, 0.71, 0.78, 0.81, 0.93,  //
         0.14, 0.16, 0.03, 0.06, 0.08, 0.02,  //
         0.27, 0.26, 0.22, 0.13, 0.08, 0.03,  //
         0.13, 0.06, 0.04, 0.03, 0.04, 0.03};
  return p;
}

int SynthSettings::respondents() const { return total(agegr_counts); }

void SynthSettings::validate() const {
  const int n = respondents();
  if (n < 1) throw ValidationError("synthetic survey needs at least one respondent");
  if (total(gender_counts) != n || total(incomegr_counts) != n || total(region_counts) != n) {
    throw ValidationError("covariate counts must all sum to the respondent count");
  }
  if (total(current_recall) != n) throw ValidationError("current recall counts must sum to the respondent count");
  if (no_previous_brand < 0 || no_previous_brand > n) throw ValidationError("invalid no-previous-brand count");
  if (total(previous_recall) != n - no_previous_brand) {
    throw ValidationError("previous recall counts must sum to respondents with a previous brand");
  }
}

std::vector<Respondent> synthesize_survey(const Params& truth, const SynthSettings& settings, std::uint64_t seed) {
  settings.validate();
  const int B = static_cast<int>(truth.w.size() / kAgeGroups);
  const CoefficientLayout layout(B);
  if (truth.beta.size() != layout.size() || truth.alpha.size() != layout.size()) {
    throw ValidationError("truth coefficient vectors do not match the brand count");
  }
  const auto n = static_cast<std::size_t>(settings.respondents());

  RngStream assign(seed, derive_stream_id(0x73796e74ULL, 0));
  const auto age = shuffled_codes(settings.agegr_counts, assign);
  const auto gender = shuffled_codes(settings.gender_counts, assign);
  const auto income = shuffled_codes(settings.incomegr_counts, assign);
  const auto region = shuffled_codes(settings.region_counts, assign);
  const auto cur_recall = shuffled_codes(settings.current_recall, assign);
  std::array<int, 5> prev_counts{settings.previous_recall[0], settings.previous_recall[1], settings.previous_recall[2],
                                 settings.previous_recall[3], settings.no_previous_brand};
  const auto prev_recall = shuffled_codes(prev_counts, assign);

  std::vector<Respondent> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, derive_stream_id(0x73796e74ULL, 1, i));
    Respondent r;
    r.covariates = Covariates{age[i], gender[i], income[i], region[i]};
    const Covariates& c = r.covariates;

    std::vector<double> share(static_cast<std::size_t>(B));
    for (int j = 1; j <= B; ++j) share[static_cast<std::size_t>(j - 1)] = truth.weight(j, c.agegr);
    const int prev = static_cast<int>(sample_categorical(rng, share));
    const int cur = transition(prev, c, truth, layout, rng);
    const int next = transition(cur, c, truth, layout, rng);

    const double T = sample_gamma(rng, GammaSpec{truth.kappa, rate_of(prev, c, truth.beta, layout)});
    const double straddle = sample_gamma(rng, GammaSpec{truth.kappa + 1.0, rate_of(cur, c, truth.beta, layout)});
    const double elapsed = rng.uniform() * straddle;

    r.current_brand = cur;
    r.intended_brand = next;
    r.current_purchase = recall(elapsed, cur_recall[i], settings.survey_date);
    if (prev_recall[i] == 5) {
      r.previous_purchase = DateAnswer::unknown();
    } else {
      r.previous_brand = prev;
      r.previous_purchase = recall(elapsed + T, prev_recall[i], settings.survey_date);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace clvsurvey::mobile
