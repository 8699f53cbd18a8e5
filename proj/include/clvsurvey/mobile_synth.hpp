#pragma once

// Synthetic mobile-phone survey generated from known parameters, used for
// parameter-recovery and predictive-check runs.

#include <array>
#include <cstdint>
#include <vector>

#include "clvsurvey/mobile_model.hpp"
#include "clvsurvey/survey.hpp"

namespace clvsurvey::mobile {

/// Historical-variant posterior means of the published fit, with brand
/// weights set to the observed brand shares by age group.
Params reference_truth();

struct SynthSettings {
  CalendarMonth survey_date{2013, 2};
  // Exact marginal counts; every vector must sum to the respondent count.
  std::array<int, kAgeGroups> agegr_counts{63, 88, 73, 89, 103, 120};
  std::array<int, kGenders> gender_counts{285, 251};
  std::array<int, kIncomeGroups> incomegr_counts{118, 132, 104, 82, 100};
  std::array<int, kRegions> region_counts{143, 91, 155, 147};
  // Recall granularity of the current purchase: month, season, year, unknown.
  std::array<int, 4> current_recall{310, 115, 74, 37};
  // Same for the previous purchase, over respondents who name a previous brand.
  std::array<int, 4> previous_recall{117, 91, 146, 163};
  int no_previous_brand = 19;

  int respondents() const;
  void validate() const;
};

/// Simulates one survey. Each respondent starts from a previous brand drawn
/// from the age-group weights, makes one transition to the current brand,
/// and reports dates at the assigned recall granularity. The interval
/// straddling the survey date is length-biased, so the elapsed time since
/// the current purchase is U * Gamma(kappa + 1, lambda_current).
std::vector<Respondent> synthesize_survey(const Params& truth, const SynthSettings& settings, std::uint64_t seed);

}  // namespace clvsurvey::mobile
