#include "clvsurvey/clv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clvsurvey/error.hpp"
#include "clvsurvey/mobile_model.hpp"

namespace clvsurvey::clv {

namespace {

constexpr std::uint64_t kMobileTag = 0x636c766dULL;
constexpr std::uint64_t kSemiMarkovTag = 0x636c7673ULL;

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Mean with a 95% inverse-ECDF interval; sorts `v`.
void summarize(std::vector<double>& v, double& mean, double& lo, double& hi) {
  mean = mean_of(v);
  std::sort(v.begin(), v.end());
  lo = mcmc::sorted_quantile(v, 0.025);
  hi = mcmc::sorted_quantile(v, 0.975);
}

}  // namespace

RevenueSpec RevenueSpec::mobile_default() { return RevenueSpec{{68.0, 473.0, 178.0, 0.0}, 0.10, 60.0}; }

void RevenueSpec::validate(int n_brands) const {
  if (asp_per_brand.size() != static_cast<std::size_t>(n_brands)) {
    throw ValidationError("expected " + std::to_string(n_brands) + " ASP values, got " +
                          std::to_string(asp_per_brand.size()));
  }
  for (double a : asp_per_brand) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("ASP values must be finite and nonnegative");
  }
  if (!(annual_discount >= 0.0)) throw ValidationError("discount rate must be nonnegative");
  if (!(horizon_months >= 0.0) || !std::isfinite(horizon_months)) throw ValidationError("horizon must be finite and nonnegative");
}

double npv(const std::vector<TimedPurchase>& history, const RevenueSpec& spec, int brand) {
  double v = 0.0;
  for (const auto& pu : history) {
    if (pu.months <= 0.0 || pu.months > spec.horizon_months) continue;
    if (brand > 0 && pu.brand != brand) continue;
    v += spec.asp_per_brand.at(static_cast<std::size_t>(pu.brand - 1)) *
         std::pow(1.0 + spec.annual_discount, -pu.months / 12.0);
  }
  return v;
}

ClvSamples::ClvSamples(std::size_t n_individuals, std::size_t n_draws, int n_brands)
    : n_individuals_(n_individuals), n_draws_(n_draws), n_brands_(n_brands),
      v_(n_individuals * n_draws * static_cast<std::size_t>(n_brands), 0.0) {}

void plan_draws(std::size_t pooled, std::size_t histories, std::vector<std::size_t>& index, std::size_t& replicates) {
  if (pooled == 0) throw ValidationError("no posterior draws available");
  if (histories == 0) throw ValidationError("history count must be positive");
  index.clear();
  if (pooled >= histories) {
    replicates = 1;
    for (std::size_t k = 0; k < histories; ++k) index.push_back(k * pooled / histories);
  } else {
    replicates = (histories + pooled - 1) / pooled;
    for (std::size_t k = 0; k < pooled; ++k) index.push_back(k);
  }
}

std::vector<TimedPurchase> simulate_mobile_history(int current_brand, const Covariates& c, double elapsed_months,
                                                   double kappa, const std::vector<double>& beta,
                                                   const std::vector<double>& alpha, const std::vector<double>& w,
                                                   int n_brands, double horizon_months, RngStream& rng) {
  const mobile::CoefficientLayout layout(n_brands);
  std::vector<TimedPurchase> out;
  int brand = current_brand;
  const double e = elapsed_months / 12.0;
  const double first = sample_truncated_gamma(rng, GammaSpec{kappa, mobile::rate_of(brand, c, beta, layout)}, e, kInf);
  double t = 12.0 * (first - e);
  while (t <= horizon_months) {
    if (sample_bernoulli(rng, mobile::repurchase_prob(brand, c, alpha, layout)) == 0) {
      const auto probs = mobile::acquisition_probs(brand, c.agegr, w, n_brands);
      brand = static_cast<int>(sample_categorical(rng, probs));
    }
    out.push_back(TimedPurchase{t, brand});
    t += 12.0 * sample_gamma(rng, GammaSpec{kappa, mobile::rate_of(brand, c, beta, layout)});
  }
  return out;
}

ClvSamples simulate_histories(const mcmc::PosteriorDraws& draws, const ModelDataset& data, const RevenueSpec& spec,
                              std::size_t histories, std::uint64_t seed) {
  const int B = data.brands.size();
  spec.validate(B);
  std::vector<std::size_t> index;
  std::size_t reps = 1;
  plan_draws(draws.n_pooled(), histories, index, reps);

  std::vector<mobile::Params> params;
  params.reserve(index.size());
  for (std::size_t p : index) params.push_back(mobile::params_from_draw(draws, p, B));

  ClvSamples out(data.individuals.size(), index.size(), B);
  out.draw_index = index;
  out.replicates_per_draw = reps;
  for (std::size_t i = 0; i < data.individuals.size(); ++i) {
    const auto& ind = data.individuals[i];
    const double e = ind.elapsed.midpoint();
    for (std::size_t d = 0; d < index.size(); ++d) {
      const auto& prm = params[d];
      RngStream rng(seed, derive_stream_id(kMobileTag, i, d));
      for (std::size_t r = 0; r < reps; ++r) {
        const auto h = simulate_mobile_history(ind.current_brand, ind.covariates, e, prm.kappa, prm.beta, prm.alpha,
                                               prm.w, B, spec.horizon_months, rng);
        for (int b = 1; b <= B; ++b) out.at(i, d, b) += npv(h, spec, b) / static_cast<double>(reps);
      }
    }
  }
  return out;
}

std::vector<ClvSummary> summarize_clv(const ClvSamples& samples, const ModelDataset& data, Segmentation seg,
                                      std::vector<std::string>* warnings) {
  if (samples.n_individuals() == 0 || samples.n_draws() == 0) throw ValidationError("no CLV samples to summarize");
  const int B = samples.n_brands();
  struct Segment {
    std::string label;
    std::vector<std::size_t> members;
  };
  std::vector<ClvSummary> out;
  for (int b = 1; b <= B; ++b) {
    std::vector<Segment> segments;
    if (seg == Segmentation::brand_status) {
      segments = {{"current", {}}, {"other", {}}};
      for (std::size_t i = 0; i < data.individuals.size(); ++i) {
        segments[data.individuals[i].current_brand == b ? 0 : 1].members.push_back(i);
      }
    } else {
      for (int h = 1; h <= kAgeGroups; ++h) segments.push_back({agegr_labels()[static_cast<std::size_t>(h - 1)], {}});
      for (std::size_t i = 0; i < data.individuals.size(); ++i) {
        segments[static_cast<std::size_t>(data.individuals[i].covariates.agegr - 1)].members.push_back(i);
      }
    }
    for (const auto& s : segments) {
      if (s.members.empty()) {
        if (warnings) warnings->push_back("empty segment " + data.brands.label(b) + "/" + s.label + " omitted");
        continue;
      }
      std::vector<double> per_draw(samples.n_draws(), 0.0);
      for (std::size_t d = 0; d < samples.n_draws(); ++d) {
        double acc = 0.0;
        for (std::size_t i : s.members) acc += samples.at(i, d, b);
        per_draw[d] = acc / static_cast<double>(s.members.size());
      }
      ClvSummary row;
      row.brand = b;
      row.segment = s.label;
      row.n_individuals = s.members.size();
      row.n_histories = s.members.size() * samples.n_draws() * samples.replicates_per_draw;
      summarize(per_draw, row.mean, row.lo, row.hi);
      out.push_back(row);
    }
  }
  return out;
}

std::vector<QuantileRow> clv_quantiles(const ClvSamples& samples, const ModelDataset& data) {
  std::vector<QuantileRow> out;
  for (int b = 1; b <= samples.n_brands(); ++b) {
    std::vector<double> cur;
    std::vector<double> oth;
    for (std::size_t i = 0; i < samples.n_individuals(); ++i) {
      auto& dst = data.individuals[i].current_brand == b ? cur : oth;
      for (std::size_t d = 0; d < samples.n_draws(); ++d) dst.push_back(samples.at(i, d, b));
    }
    if (!cur.empty()) out.push_back(QuantileRow{b, "current", sm::describe(std::move(cur))});
    if (!oth.empty()) out.push_back(QuantileRow{b, "other", sm::describe(std::move(oth))});
  }
  return out;
}

std::vector<CeSummary> scale_to_population(const ClvSamples& samples, const ModelDataset& data,
                                           const PopulationStrata& strata) {
  const int B = samples.n_brands();
  std::vector<std::vector<std::size_t>> by_age(kAgeGroups);
  for (std::size_t i = 0; i < data.individuals.size(); ++i) {
    by_age[static_cast<std::size_t>(data.individuals[i].covariates.agegr - 1)].push_back(i);
  }
  std::vector<double> count(kAgeGroups, 0.0);
  for (int h = 1; h <= kAgeGroups; ++h) {
    if (by_age[static_cast<std::size_t>(h - 1)].empty()) continue;
    const auto it = strata.agegr_counts.find(h);
    if (it == strata.agegr_counts.end()) {
      throw ValidationError("no population stratum for age group " + agegr_labels()[static_cast<std::size_t>(h - 1)]);
    }
    if (!(it->second >= 0.0)) throw ValidationError("population counts must be nonnegative");
    count[static_cast<std::size_t>(h - 1)] = it->second;
  }

  std::vector<CeSummary> out;
  const std::size_t D = samples.n_draws();
  for (int b = 1; b <= B; ++b) {
    std::vector<double> total(D, 0.0);
    std::vector<CeSummary> rows;
    for (int h = 1; h <= kAgeGroups; ++h) {
      const auto& members = by_age[static_cast<std::size_t>(h - 1)];
      if (members.empty()) continue;
      std::vector<double> ce(D, 0.0);
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t i : members) acc += samples.at(i, d, b);
        ce[d] = count[static_cast<std::size_t>(h - 1)] * acc / static_cast<double>(members.size());
        total[d] += ce[d];
      }
      CeSummary row;
      row.brand = b;
      row.agegr = h;
      summarize(ce, row.mean, row.lo, row.hi);
      rows.push_back(row);
    }
    CeSummary all;
    all.brand = b;
    summarize(total, all.mean, all.lo, all.hi);
    out.push_back(all);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

SmEstimate estimate_sm(const mcmc::PosteriorDraws& draws, const std::vector<sm::SurveyObservation>& data,
                       const sm::ValueSpec& spec, std::size_t histories, double population_size, std::uint64_t seed) {
  if (data.empty()) throw ValidationError("no survey observations to project");
  if (!(spec.horizon_years >= 0.0)) throw ValidationError("horizon must be nonnegative");
  std::vector<std::size_t> index;
  std::size_t reps = 1;
  plan_draws(draws.n_pooled(), histories, index, reps);
  const auto& lam = draws.block("lambda");
  const auto& pb = draws.block("p");
  const auto& qb = draws.block("q");
  if (lam.dimension != data.size() || pb.dimension != data.size() || qb.dimension != data.size()) {
    throw ValidationError("posterior draws do not match the survey sample size");
  }

  SmEstimate out;
  out.draws_used = index.size();
  std::vector<double> sample_ce(index.size(), 0.0);
  std::vector<double> focal;
  std::vector<double> competitor;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t d = 0; d < index.size(); ++d) {
      const double* row = draws.pooled_row(index[d]);
      RngStream rng(seed, derive_stream_id(kSemiMarkovTag, i, d));
      double acc = 0.0;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto h = sm::simulate_history(row[lam.first + i], row[pb.first + i], row[qb.first + i], data[i].s0, 0.0,
                                            spec.horizon_years, rng);
        const double v = sm::focal_npv(h, spec);
        acc += v;
        (data[i].s0 == 1 ? focal : competitor).push_back(v);
      }
      sample_ce[d] += acc / static_cast<double>(reps);
    }
  }
  const double scale = population_size / static_cast<double>(data.size());
  out.ce_by_draw.reserve(sample_ce.size());
  for (double c : sample_ce) out.ce_by_draw.push_back(c * scale);
  out.ce_mean = mean_of(out.ce_by_draw);
  std::vector<double> sorted = out.ce_by_draw;
  std::sort(sorted.begin(), sorted.end());
  out.ce_d1 = mcmc::sorted_quantile(sorted, 0.1);
  out.ce_d9 = mcmc::sorted_quantile(sorted, 0.9);
  out.focal = sm::describe(std::move(focal));
  out.competitor = sm::describe(std::move(competitor));
  return out;
}

}  // namespace clvsurvey::clv
