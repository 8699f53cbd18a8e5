#include "clvsurvey/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clvsurvey/clv.hpp"
#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/mobile_model.hpp"
#include "clvsurvey/mobile_synth.hpp"
#include "clvsurvey/semimarkov.hpp"
#include "clvsurvey/survey.hpp"
#include "clvsurvey/tabular.hpp"

#ifndef CLVSURVEY_VERSION
#define CLVSURVEY_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace clvsurvey::cmd {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "out_dir", "model", "variant"}},
      {"data", {"survey", "survey_date", "brands", "observations", "dataset", "draws"}},
      {"chains", {"n_chains", "burn_in", "keep", "thin", "target_accept", "parallel"}},
      {"fit", {"strict", "export_draws"}},
      {"mobile_priors", {"kappa_shape", "kappa_rate", "coef_variance", "weight_a", "weight_b"}},
      {"sm_priors", {"m_lambda_shape", "m_lambda_rate", "v_lambda_shape", "v_lambda_rate", "k_shape", "k_rate"}},
      {"synthetic",
       {"agegr_counts", "gender_counts", "incomegr_counts", "region_counts", "current_recall", "previous_recall",
        "no_previous_brand"}},
      {"generator",
       {"n", "gamma_shape", "delta_rate", "alpha_p", "beta_p", "alpha_q", "beta_q", "history_back", "history_forward",
        "sample_size"}},
      {"value", {"value_per_purchase", "horizon_years", "annual_discount", "population_size", "histories"}},
      {"revenue", {"asp", "annual_discount", "horizon_months", "histories", "export_samples"}},
      {"strata", {}},
      {"diagnose", {"realizations", "grid_step_months", "grid_max_months"}},
  };
  return keys;
}

// Population by age group: 4.1 million 15-79 year olds split by the
// official age shares of the survey population.
const std::vector<double>& default_strata() {
  static const std::vector<double> counts{656000, 656000, 656000, 738000, 738000, 697000};
  return counts;
}

class Context {
 public:
  explicit Context(const Config& cfg) : cfg_(cfg) {
    validate_config(cfg);
    seed_ = cfg.get_u64("run", "seed", 1);
    out_dir_ = cfg.get_string("run", "out_dir", "out");
    model_ = cfg.get_string("run", "model", "mobile");
    if (model_ != "mobile" && model_ != "semimarkov") {
      throw ValidationError("run.model must be mobile or semimarkov, got '" + model_ + "'");
    }
    variant_ = parse_variant(cfg.get_string("run", "variant", "historical"));
    prov_ = Provenance{cfg.hash(), seed_, CLVSURVEY_VERSION};
  }

  const Config& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  bool semimarkov() const { return model_ == "semimarkov"; }
  Variant variant() const { return variant_; }
  std::string tag() const { return semimarkov() ? "sm" : std::string(to_string(variant_)); }
  CommandResult& result() { return result_; }

  std::string output_path(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

  /// Path from the config, else the default file inside out_dir. Must exist.
  std::string input(const std::string& section, const std::string& key, const std::string& default_name) const {
    const std::string path = cfg_.get_string(section, key, output_path(default_name));
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      throw ValidationError("missing input file " + path + " (" + section + "." + key + ")");
    }
    return path;
  }

  /// Writes `body` after the provenance header and records the file.
  void write(const std::string& name, const std::string& body) {
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw ValidationError("cannot create output directory " + out_dir_ + ": " + ec.message());
    const std::string path = output_path(name);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open output file " + path);
    out << prov_.header_line() << '\n' << body;
    out.close();
    if (!out) throw ValidationError("failed writing " + path);
    result_.files.push_back(path);
    result_.log.push_back("wrote " + path);
  }

  void note(std::string line) { result_.log.push_back(std::move(line)); }

  BrandCatalog brands() const {
    return BrandCatalog(cfg_.get_list("data", "brands", {"Nokia", "Apple", "Samsung", "Other"}));
  }
  CalendarMonth survey_date() const { return CalendarMonth::parse(cfg_.get_string("data", "survey_date", "2013-02")); }

  int positive_int(const std::string& section, const std::string& key, long long fallback) const {
    const long long v = cfg_.get_int(section, key, fallback);
    if (v < 1 || v > 1000000000) throw ValidationError(section + "." + key + " must be a positive integer");
    return static_cast<int>(v);
  }

  mcmc::ChainConfig chains() const {
    mcmc::ChainConfig c;
    c.n_chains = static_cast<int>(cfg_.get_int("chains", "n_chains", c.n_chains));
    c.burn_in = static_cast<int>(cfg_.get_int("chains", "burn_in", c.burn_in));
    c.keep = static_cast<int>(cfg_.get_int("chains", "keep", c.keep));
    c.thin = static_cast<int>(cfg_.get_int("chains", "thin", c.thin));
    c.target_accept = cfg_.get_double("chains", "target_accept", c.target_accept);
    c.parallel = cfg_.get_bool("chains", "parallel", c.parallel);
    c.seed = seed_;
    c.validate();
    return c;
  }

 private:
  const Config& cfg_;
  std::uint64_t seed_ = 1;
  std::string out_dir_;
  std::string model_;
  Variant variant_ = Variant::historical;
  Provenance prov_;
  CommandResult result_;
};

template <std::size_t N>
std::array<int, N> int_array(const Config& cfg, const std::string& key, const std::array<int, N>& fallback) {
  if (!cfg.has("synthetic", key)) return fallback;
  const auto items = cfg.get_list("synthetic", key, {});
  if (items.size() != N) {
    throw ValidationError("synthetic." + key + " needs " + std::to_string(N) + " entries, got " +
                          std::to_string(items.size()));
  }
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const long long v = parse_int(items[i], "synthetic." + key);
    if (v < 0) throw ValidationError("synthetic." + key + " entries must be nonnegative");
    out[i] = static_cast<int>(v);
  }
  return out;
}

mobile::Priors mobile_priors(const Config& cfg) {
  mobile::Priors p;
  p.kappa_shape = cfg.get_double("mobile_priors", "kappa_shape", p.kappa_shape);
  p.kappa_rate = cfg.get_double("mobile_priors", "kappa_rate", p.kappa_rate);
  p.coef_variance = cfg.get_double("mobile_priors", "coef_variance", p.coef_variance);
  p.weight_a = cfg.get_double("mobile_priors", "weight_a", p.weight_a);
  p.weight_b = cfg.get_double("mobile_priors", "weight_b", p.weight_b);
  if (!(p.kappa_shape > 0 && p.kappa_rate > 0 && p.coef_variance > 0 && p.weight_a > 0 && p.weight_b > 0)) {
    throw ValidationError("mobile_priors values must be positive");
  }
  return p;
}

sm::Priors sm_priors(const Config& cfg) {
  sm::Priors p;
  p.m_lambda_shape = cfg.get_double("sm_priors", "m_lambda_shape", p.m_lambda_shape);
  p.m_lambda_rate = cfg.get_double("sm_priors", "m_lambda_rate", p.m_lambda_rate);
  p.v_lambda_shape = cfg.get_double("sm_priors", "v_lambda_shape", p.v_lambda_shape);
  p.v_lambda_rate = cfg.get_double("sm_priors", "v_lambda_rate", p.v_lambda_rate);
  p.k_shape = cfg.get_double("sm_priors", "k_shape", p.k_shape);
  p.k_rate = cfg.get_double("sm_priors", "k_rate", p.k_rate);
  if (!(p.m_lambda_shape > 0 && p.m_lambda_rate > 0 && p.v_lambda_shape > 0 && p.v_lambda_rate > 0 &&
        p.k_shape > 0 && p.k_rate > 0)) {
    throw ValidationError("sm_priors values must be positive");
  }
  return p;
}

sm::GeneratorSettings generator(const Config& cfg) {
  sm::GeneratorSettings g;
  const long long n = cfg.get_int("generator", "n", static_cast<long long>(g.n));
  if (n < 0) throw ValidationError("generator.n must be nonnegative");
  g.n = static_cast<std::size_t>(n);
  g.gamma_shape = cfg.get_double("generator", "gamma_shape", g.gamma_shape);
  g.delta_rate = cfg.get_double("generator", "delta_rate", g.delta_rate);
  g.alpha_p = cfg.get_double("generator", "alpha_p", g.alpha_p);
  g.beta_p = cfg.get_double("generator", "beta_p", g.beta_p);
  g.alpha_q = cfg.get_double("generator", "alpha_q", g.alpha_q);
  g.beta_q = cfg.get_double("generator", "beta_q", g.beta_q);
  g.history_back = cfg.get_double("generator", "history_back", g.history_back);
  g.history_forward = cfg.get_double("generator", "history_forward", g.history_forward);
  g.validate();
  return g;
}

sm::ValueSpec value_spec(const Config& cfg) {
  sm::ValueSpec v;
  v.value_per_purchase = cfg.get_double("value", "value_per_purchase", v.value_per_purchase);
  v.horizon_years = cfg.get_double("value", "horizon_years", v.horizon_years);
  v.annual_discount = cfg.get_double("value", "annual_discount", v.annual_discount);
  if (!(v.value_per_purchase >= 0 && v.horizon_years >= 0 && v.annual_discount >= 0)) {
    throw ValidationError("value settings must be nonnegative");
  }
  return v;
}

clv::RevenueSpec revenue(const Config& cfg, int n_brands) {
  clv::RevenueSpec r = clv::RevenueSpec::mobile_default();
  r.asp_per_brand = cfg.get_doubles("revenue", "asp", r.asp_per_brand);
  r.annual_discount = cfg.get_double("revenue", "annual_discount", r.annual_discount);
  r.horizon_months = cfg.get_double("revenue", "horizon_months", r.horizon_months);
  r.validate(n_brands);
  return r;
}

clv::PopulationStrata strata(const Config& cfg) {
  clv::PopulationStrata s;
  const auto& labels = agegr_labels();
  const bool custom = !cfg.keys("strata").empty();
  for (int h = 1; h <= kAgeGroups; ++h) {
    const auto& label = labels[static_cast<std::size_t>(h - 1)];
    if (!custom) {
      s.agegr_counts[h] = default_strata()[static_cast<std::size_t>(h - 1)];
    } else if (cfg.has("strata", label)) {
      const double v = cfg.get_double("strata", label, 0.0);
      if (!(v > 0.0)) throw ValidationError("population count for stratum " + label + " must be positive");
      s.agegr_counts[h] = v;
    }
  }
  return s;
}

std::string mobile_truth_csv(const mobile::Params& truth, const BrandCatalog& brands) {
  const mobile::CoefficientLayout layout(brands.size());
  std::ostringstream out;
  out << "parameter,value\n";
  out << "kappa," << format_double(truth.kappa) << '\n';
  const auto bl = layout.labels("beta", brands);
  const auto al = layout.labels("alpha", brands);
  for (std::size_t j = 0; j < bl.size(); ++j) out << bl[j] << ',' << format_double(truth.beta[j]) << '\n';
  for (std::size_t j = 0; j < al.size(); ++j) out << al[j] << ',' << format_double(truth.alpha[j]) << '\n';
  for (int b = 1; b <= brands.size(); ++b) {
    for (int h = 1; h <= kAgeGroups; ++h) {
      out << "w_" << brands.label(b) << '_' << agegr_labels()[static_cast<std::size_t>(h - 1)] << ','
          << format_double(truth.weight(b, h)) << '\n';
    }
  }
  return out.str();
}

std::string distribution_row(const sm::Distribution& d) {
  std::ostringstream out;
  out << d.n << ',' << format_double(d.min) << ',' << format_double(d.q1) << ',' << format_double(d.median) << ','
      << format_double(d.mean) << ',' << format_double(d.q3) << ',' << format_double(d.max);
  return out.str();
}

constexpr const char* kDistributionHeader = "n,min,q1,median,mean,q3,max";

struct ColumnSummary {
  double mean, sd, lo, hi;
};

ColumnSummary summarize_column(const mcmc::PosteriorDraws& draws, std::size_t column) {
  auto v = draws.pooled_values(column);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  return {mean, sd, mcmc::sorted_quantile(v, 0.025), mcmc::sorted_quantile(v, 0.975)};
}

std::string summary_csv(const mcmc::PosteriorDraws& draws, const std::vector<std::string>& block_names) {
  std::ostringstream out;
  out << "parameter,mean,sd,lo95,hi95\n";
  for (const auto& name : block_names) {
    if (!draws.has_block(name)) continue;
    const auto& b = draws.block(name);
    for (std::size_t j = b.first; j < b.first + b.dimension; ++j) {
      const auto s = summarize_column(draws, j);
      out << draws.names()[j] << ',' << format_double(s.mean) << ',' << format_double(s.sd) << ','
          << format_double(s.lo) << ',' << format_double(s.hi) << '\n';
    }
  }
  return out.str();
}

std::string acceptance_csv(const mcmc::PosteriorDraws& draws) {
  std::ostringstream out;
  out << "move";
  for (std::size_t c = 0; c < draws.n_chains(); ++c) out << ",chain" << c + 1;
  out << '\n';
  for (const auto& [name, rates] : draws.acceptance()) {
    out << name;
    for (double r : rates) out << ',' << format_double(r);
    out << '\n';
  }
  return out.str();
}

// Writes the convergence table and applies the strict-mode check.
void convergence_outputs(Context& ctx, const mcmc::PosteriorDraws& draws) {
  std::ostringstream out;
  out << "parameter,diagnostic,degenerate,converged\n";
  if (draws.n_chains() < 2 || draws.n_iterations() < 100) {
    // Header only, so a stale table from an earlier run is not reported.
    ctx.write("convergence_" + ctx.tag() + ".csv", out.str());
    const std::string msg = "convergence not assessed: the interval diagnostic needs at least 2 chains and 100 kept "
                            "draws per chain";
    if (ctx.cfg().get_bool("fit", "strict", true)) {
      ctx.result().status = Status::convergence;
      ctx.result().message = msg;
    } else {
      ctx.note("warning: " + msg);
    }
    return;
  }
  auto diags = mcmc::all_interval_diagnostics(draws);
  std::vector<std::pair<double, std::string>> failing;
  for (const auto& d : diags) {
    const bool ok = d.value.ratio <= mcmc::kConvergenceThreshold;
    out << d.parameter << ',' << format_double(d.value.ratio) << ',' << (d.value.degenerate ? 1 : 0) << ','
        << (ok ? 1 : 0) << '\n';
    if (!ok) failing.emplace_back(d.value.ratio, d.parameter);
  }
  ctx.write("convergence_" + ctx.tag() + ".csv", out.str());
  double worst = 0.0;
  std::string worst_name;
  for (const auto& d : diags) {
    if (d.value.ratio > worst) {
      worst = d.value.ratio;
      worst_name = d.parameter;
    }
  }
  ctx.note("worst interval diagnostic " + format_fixed(worst, 3) + " (" + worst_name + ")");
  if (failing.empty()) return;
  std::sort(failing.begin(), failing.end(), std::greater<>());
  std::string msg = std::to_string(failing.size()) + " parameter(s) exceed the interval diagnostic threshold 1.1:";
  for (std::size_t i = 0; i < failing.size() && i < 5; ++i) {
    msg += " " + failing[i].second + "=" + format_fixed(failing[i].first, 3);
  }
  if (ctx.cfg().get_bool("fit", "strict", true)) {
    ctx.result().status = Status::convergence;
    ctx.result().message = msg;
  } else {
    ctx.note("warning: " + msg);
  }
}

mcmc::PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open draws file " + path);
  return mcmc::read_draws(in);
}

ModelDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset file " + path);
  return read_dataset(in);
}

std::vector<sm::SurveyObservation> load_observations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open observations file " + path);
  auto obs = sm::read_observations(in);
  if (obs.empty()) throw ValidationError("observations file " + path + " has no rows");
  return obs;
}

// ---------------------------------------------------------------- simulate

void simulate_mobile(Context& ctx) {
  const BrandCatalog brands = ctx.brands();
  const auto truth = mobile::reference_truth();
  if (brands.size() * kAgeGroups != static_cast<int>(truth.w.size())) {
    throw ValidationError("the synthetic reference parameters need a catalog of 4 brands");
  }
  mobile::SynthSettings s;
  const Config& cfg = ctx.cfg();
  s.survey_date = ctx.survey_date();
  s.agegr_counts = int_array(cfg, "agegr_counts", s.agegr_counts);
  s.gender_counts = int_array(cfg, "gender_counts", s.gender_counts);
  s.incomegr_counts = int_array(cfg, "incomegr_counts", s.incomegr_counts);
  s.region_counts = int_array(cfg, "region_counts", s.region_counts);
  s.current_recall = int_array(cfg, "current_recall", s.current_recall);
  s.previous_recall = int_array(cfg, "previous_recall", s.previous_recall);
  s.no_previous_brand = static_cast<int>(cfg.get_int("synthetic", "no_previous_brand", s.no_previous_brand));
  const auto respondents = mobile::synthesize_survey(truth, s, ctx.seed());
  std::ostringstream survey;
  write_survey(survey, respondents, brands);
  ctx.write("survey.csv", survey.str());
  ctx.write("truth.csv", mobile_truth_csv(truth, brands));
  ctx.note("synthetic survey: " + std::to_string(respondents.size()) + " respondents");
}

void simulate_sm(Context& ctx) {
  const auto g = generator(ctx.cfg());
  const long long n = ctx.cfg().get_int("generator", "sample_size", 1000);
  if (n < 1) throw ValidationError("generator.sample_size must be at least 1");
  const auto spec = value_spec(ctx.cfg());
  const auto pop = sm::generate_population(g, ctx.seed());
  const auto sample = sm::extract_survey(pop, static_cast<std::size_t>(n), ctx.seed());
  const auto oracle = sm::true_ce_oracle(pop, spec);

  std::ostringstream p;
  sm::write_population_summary(p, pop);
  ctx.write("population.csv", p.str());
  std::ostringstream o;
  sm::write_observations(o, sample.observations);
  ctx.write("survey_sm.csv", o.str());

  std::ostringstream r;
  r << "segment," << kDistributionHeader << ",ce\n";
  const double focal_ce = oracle.focal.mean * static_cast<double>(oracle.focal.n);
  const double comp_ce = oracle.competitor.mean * static_cast<double>(oracle.competitor.n);
  r << "focal," << distribution_row(oracle.focal) << ',' << format_double(focal_ce) << '\n';
  r << "competitor," << distribution_row(oracle.competitor) << ',' << format_double(comp_ce) << '\n';
  r << "all," << distribution_row(sm::describe(oracle.clv)) << ',' << format_double(oracle.ce) << '\n';
  ctx.write("oracle_sm.csv", r.str());
  ctx.note("population " + std::to_string(g.n) + ", true CE " + format_fixed(oracle.ce, 0) + ", mean CLV " +
           format_fixed(oracle.mean_clv, 2));
  ctx.note("survey sample " + std::to_string(sample.observations.size()) + " (" + std::to_string(sample.rejections) +
           " sampled individuals had fewer than two past purchases)");
}

// ---------------------------------------------------------------- fit

void fit_mobile(Context& ctx) {
  const BrandCatalog brands = ctx.brands();
  const std::string survey_path = ctx.input("data", "survey", "survey.csv");
  std::ifstream in(survey_path, std::ios::binary);
  const auto respondents = parse_survey(in, brands);
  if (respondents.empty()) throw ValidationError("survey file " + survey_path + " has no respondents");
  const auto data = build_dataset(respondents, ctx.variant(), ctx.survey_date(), brands);
  const auto chains = ctx.chains();

  std::ostringstream ds;
  write_dataset(ds, data);
  ctx.write("dataset_" + ctx.tag() + ".txt", ds.str());
  ctx.note("records: " + std::to_string(data.n_retained) + " retained, " + std::to_string(data.n_churned) +
           " churned, " + std::to_string(data.n_interval_only) + " interval-only; " +
           std::to_string(data.report.dropped_respondents) + " respondents dropped, " +
           std::to_string(data.report.clamped_intervals) + " intervals clamped, " +
           std::to_string(data.report.unknown_current_date) + " unknown current dates");

  const auto draws = mobile::fit(data, chains, mobile_priors(ctx.cfg()));
  for (const auto& w : draws.warnings()) ctx.note("warning: " + w);

  std::ostringstream d;
  mcmc::write_draws(d, draws);
  ctx.write("draws_" + ctx.tag() + ".csv", d.str());
  ctx.write("summary_" + ctx.tag() + ".csv", summary_csv(draws, {"kappa", "beta", "alpha"}));
  ctx.write("weights_" + ctx.tag() + ".csv", summary_csv(draws, {"w"}));
  ctx.write("acceptance_" + ctx.tag() + ".csv", acceptance_csv(draws));
  convergence_outputs(ctx, draws);
}

void fit_semimarkov(Context& ctx) {
  const auto obs = load_observations(ctx.input("data", "observations", "survey_sm.csv"));
  const auto chains = ctx.chains();
  const auto draws = sm::fit_sm(obs, chains, sm_priors(ctx.cfg()));
  for (const auto& w : draws.warnings()) ctx.note("warning: " + w);

  // Every per-individual draw is a column, so the export is thinned.
  const long long export_draws = ctx.cfg().get_int("fit", "export_draws", 2000);
  if (export_draws < 1) throw ValidationError("fit.export_draws must be at least 1");
  const auto cap = static_cast<std::size_t>(export_draws);
  const std::size_t thin = std::max<std::size_t>(1, (draws.n_pooled() + cap - 1) / cap);
  std::ostringstream d;
  mcmc::write_draws(d, draws, thin);
  ctx.write("draws_sm.csv", d.str());
  ctx.write("summary_sm.csv", summary_csv(draws, {"m_lambda", "v_lambda", "m_p", "k_p", "m_q", "k_q"}));
  ctx.write("acceptance_sm.csv", acceptance_csv(draws));
  ctx.note("sample " + std::to_string(obs.size()) + ", exported every " + std::to_string(thin) + " draw(s) per chain");
  convergence_outputs(ctx, draws);
}

// ---------------------------------------------------------------- estimate

std::string brand_label(const ModelDataset& data, int b) { return data.brands.label(b); }

void estimate_mobile(Context& ctx) {
  const auto data = load_dataset(ctx.input("data", "dataset", "dataset_" + ctx.tag() + ".txt"));
  const auto draws = load_draws(ctx.input("data", "draws", "draws_" + ctx.tag() + ".csv"));
  const auto spec = revenue(ctx.cfg(), data.brands.size());
  const int histories = ctx.positive_int("revenue", "histories", 2000);
  const auto pop = strata(ctx.cfg());

  const auto samples = clv::simulate_histories(draws, data, spec, static_cast<std::size_t>(histories), ctx.seed());
  const std::string variant(to_string(ctx.variant()));

  std::vector<std::string> warnings;
  std::ostringstream by_status;
  by_status << "brand,customer,mean,lo95,hi95,n_individuals,n_histories\n";
  for (const auto& s : clv::summarize_clv(samples, data, clv::Segmentation::brand_status, &warnings)) {
    by_status << brand_label(data, s.brand) << ',' << (s.segment == "current" ? "yes" : "no") << ','
              << format_double(s.mean) << ',' << format_double(s.lo) << ',' << format_double(s.hi) << ','
              << s.n_individuals << ',' << s.n_histories << '\n';
  }
  ctx.write("clv_status_" + ctx.tag() + ".csv", by_status.str());

  std::ostringstream by_age;
  by_age << "brand,agegr,mean,lo95,hi95,n_individuals,n_histories\n";
  for (const auto& s : clv::summarize_clv(samples, data, clv::Segmentation::brand_agegr, &warnings)) {
    by_age << brand_label(data, s.brand) << ',' << s.segment << ',' << format_double(s.mean) << ','
           << format_double(s.lo) << ',' << format_double(s.hi) << ',' << s.n_individuals << ',' << s.n_histories
           << '\n';
  }
  ctx.write("clv_agegr_" + ctx.tag() + ".csv", by_age.str());
  for (const auto& w : warnings) ctx.note("warning: " + w);

  std::ostringstream quant;
  quant << "brand,customer," << kDistributionHeader << '\n';
  for (const auto& row : clv::clv_quantiles(samples, data)) {
    quant << brand_label(data, row.brand) << ',' << (row.segment == "current" ? "yes" : "no") << ','
          << distribution_row(row.dist) << '\n';
  }
  ctx.write("clv_quantiles_" + ctx.tag() + ".csv", quant.str());

  std::ostringstream ce;
  ce << "brand,agegr,variant,mean,lo95,hi95\n";
  for (const auto& c : clv::scale_to_population(samples, data, pop)) {
    const std::string age = c.agegr == 0 ? "all" : agegr_labels()[static_cast<std::size_t>(c.agegr - 1)];
    ce << brand_label(data, c.brand) << ',' << age << ',' << variant << ',' << format_double(c.mean) << ','
       << format_double(c.lo) << ',' << format_double(c.hi) << '\n';
  }
  ctx.write("ce_" + ctx.tag() + ".csv", ce.str());

  if (ctx.cfg().get_bool("revenue", "export_samples", false)) {
    std::ostringstream s;
    s << "individual,draw,replicates";
    for (int b = 1; b <= samples.n_brands(); ++b) s << ",clv_" << brand_label(data, b);
    s << '\n';
    for (std::size_t i = 0; i < samples.n_individuals(); ++i) {
      for (std::size_t d = 0; d < samples.n_draws(); ++d) {
        s << i + 1 << ',' << samples.draw_index[d] + 1 << ',' << samples.replicates_per_draw;
        for (int b = 1; b <= samples.n_brands(); ++b) s << ',' << format_double(samples.at(i, d, b));
        s << '\n';
      }
    }
    ctx.write("clv_samples_" + ctx.tag() + ".csv", s.str());
  }
  ctx.note(std::to_string(samples.n_individuals()) + " individuals, " + std::to_string(samples.n_draws()) +
           " draws x " + std::to_string(samples.replicates_per_draw) + " replicate(s)");
}

void estimate_semimarkov(Context& ctx) {
  const auto obs = load_observations(ctx.input("data", "observations", "survey_sm.csv"));
  const auto draws = load_draws(ctx.input("data", "draws", "draws_sm.csv"));
  const auto spec = value_spec(ctx.cfg());
  const int histories = ctx.positive_int("value", "histories", 2000);
  const double population = ctx.cfg().get_double(
      "value", "population_size", static_cast<double>(ctx.cfg().get_int("generator", "n", 100000)));
  if (!(population > 0.0)) throw ValidationError("value.population_size must be positive");

  const auto est = clv::estimate_sm(draws, obs, spec, static_cast<std::size_t>(histories), population, ctx.seed());
  std::ostringstream ce;
  ce << "sample_size,draws_used,ce_mean,ce_d1,ce_d9\n";
  ce << obs.size() << ',' << est.draws_used << ',' << format_double(est.ce_mean) << ',' << format_double(est.ce_d1)
     << ',' << format_double(est.ce_d9) << '\n';
  ctx.write("ce_sm.csv", ce.str());

  std::ostringstream q;
  q << "segment," << kDistributionHeader << '\n';
  q << "focal," << distribution_row(est.focal) << '\n';
  q << "competitor," << distribution_row(est.competitor) << '\n';
  ctx.write("clv_quantiles_sm.csv", q.str());
  ctx.note("CE " + format_fixed(est.ce_mean, 0) + " (" + format_fixed(est.ce_d1, 0) + ", " +
           format_fixed(est.ce_d9, 0) + ")");
}

// ---------------------------------------------------------------- diagnose

void diagnose_mobile(Context& ctx) {
  const auto data = load_dataset(ctx.input("data", "dataset", "dataset_" + ctx.tag() + ".txt"));
  const auto draws = load_draws(ctx.input("data", "draws", "draws_" + ctx.tag() + ".csv"));
  const int realizations = ctx.positive_int("diagnose", "realizations", 100);
  const double step = ctx.cfg().get_double("diagnose", "grid_step_months", 3.0);
  const double max = ctx.cfg().get_double("diagnose", "grid_max_months", 198.0);
  if (!(step > 0.0) || !(max >= 0.0)) throw ValidationError("diagnose grid settings must be positive");

  const auto regen = mobile::regenerate_brands(draws, data, ctx.seed());
  std::ostringstream r;
  r << "brand,observed,mean,lo95,hi95,inside\n";
  for (std::size_t b = 0; b < regen.labels.size(); ++b) {
    const bool inside = regen.observed[b] >= regen.lo[b] && regen.observed[b] <= regen.hi[b];
    r << regen.labels[b] << ',' << regen.observed[b] << ',' << format_double(regen.mean[b]) << ','
      << format_double(regen.lo[b]) << ',' << format_double(regen.hi[b]) << ',' << (inside ? 1 : 0) << '\n';
  }
  ctx.write("brand_regeneration_" + ctx.tag() + ".csv", r.str());

  std::vector<double> grid;
  for (int k = 0; k * step <= max + 1e-9; ++k) grid.push_back(k * step);
  const auto env = mobile::cdf_envelope(draws, data, grid, static_cast<std::size_t>(realizations), ctx.seed());
  std::ostringstream e;
  e << "month,ecdf_min,ecdf_max,inside_fraction";
  for (std::size_t k = 0; k < env.realizations.size(); ++k) e << ",draw_" << env.draw_index[k] + 1;
  e << '\n';
  for (std::size_t g = 0; g < env.grid.size(); ++g) {
    e << format_double(env.grid[g]) << ',' << format_double(env.ecdf_min[g]) << ',' << format_double(env.ecdf_max[g])
      << ',' << format_double(env.inside_fraction[g]);
    for (const auto& real : env.realizations) e << ',' << format_double(real[g]);
    e << '\n';
  }
  ctx.write("cdf_envelope_" + ctx.tag() + ".csv", e.str());
  ctx.note(std::string("brand regeneration ") + (regen.all_inside() ? "inside" : "OUTSIDE") +
           " the 95% bands; worst CDF-envelope inside fraction " + format_fixed(env.worst_inside_fraction(), 3));
}

// ---------------------------------------------------------------- report

struct CsvTable {
  std::vector<std::vector<std::string>> rows;  // header first
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CsvTable t;
  std::string line;
  while (next_data_line(in, line)) t.rows.push_back(split_csv_line(line));
  return t;
}

bool looks_numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

// Aligned plain-text table; numbers rounded to `decimals`.
std::string render(const CsvTable& t, int decimals, std::size_t max_columns) {
  if (t.rows.empty()) return "(empty)\n";
  std::vector<std::vector<std::string>> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<std::string> row;
    for (std::size_t c = 0; c < t.rows[r].size() && c < max_columns; ++c) {
      const auto& v = t.rows[r][c];
      const bool integral = v.find_first_of(".eE") == std::string::npos;
      row.push_back(r > 0 && looks_numeric(v) && !integral ? format_fixed(std::strtod(v.c_str(), nullptr), decimals)
                                                           : v);
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      const bool right = c > 0;
      const std::size_t pad = width[c] - row[c].size();
      if (right) out << std::string(pad, ' ') << row[c];
      else out << row[c] << std::string(c + 1 < row.size() ? pad : 0, ' ');
    }
    out << '\n';
  }
  return out.str();
}

void report_all(Context& ctx) {
  struct Part {
    std::string file;
    std::string title;
    int decimals;
    std::size_t max_columns;
  };
  const std::string t = ctx.tag();
  std::vector<Part> parts;
  if (ctx.semimarkov()) {
    parts = {{"oracle_sm.csv", "True CLV distribution of the simulated population", 2, 9},
             {"summary_sm.csv", "Hyperparameter estimates", 3, 5},
             {"ce_sm.csv", "Customer equity estimate (1st-9th decile band)", 0, 5},
             {"clv_quantiles_sm.csv", "Posterior CLV distribution", 2, 8}};
  } else {
    parts = {{"summary_" + t + ".csv", "Parameter estimates (mean, 95% credible interval)", 2, 5},
             {"brand_regeneration_" + t + ".csv", "Regenerated current brand counts", 1, 6},
             {"clv_status_" + t + ".csv", "Average CLV by brand and customer status", 0, 7},
             {"clv_quantiles_" + t + ".csv", "CLV quantiles by brand and customer status", 0, 9},
             {"ce_" + t + ".csv", "Customer equity by brand and age group", 0, 6}};
  }
  std::ostringstream out;
  out << "clvsurvey report (" << t << ")\n";
  std::size_t found = 0;
  for (const auto& p : parts) {
    const std::string path = ctx.output_path(p.file);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) continue;
    ++found;
    out << '\n' << p.title << '\n' << render(read_csv(path), p.decimals, p.max_columns);
  }
  const std::string conv = ctx.output_path("convergence_" + t + ".csv");
  std::error_code ec;
  if (fs::is_regular_file(conv, ec)) {
    ++found;
    const auto table = read_csv(conv);
    std::size_t n = 0, failing = 0;
    double worst = 0.0;
    std::string worst_name;
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
      if (table.rows[r].size() < 2) continue;
      ++n;
      const double v = parse_double(table.rows[r][1], "diagnostic");
      if (v > mcmc::kConvergenceThreshold) ++failing;
      if (v > worst) {
        worst = v;
        worst_name = table.rows[r][0];
      }
    }
    if (n == 0) {
      out << "\nConvergence: not assessed\n";
    } else {
      out << "\nConvergence: " << n << " parameters, " << failing << " above 1.1, worst " << format_fixed(worst, 3)
          << " (" << worst_name << ")\n";
    }
  }
  if (found == 0) throw ValidationError("no outputs to report in " + ctx.output_path(""));
  ctx.write("report_" + t + ".txt", out.str());
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "fit", "estimate", "diagnose", "report"};
  return names;
}

void validate_config(const Config& config) {
  const auto& known = known_keys();
  for (const auto& section : config.sections()) {
    const auto it = known.find(section);
    if (it == known.end()) throw ValidationError("unknown config section [" + section + "]");
    for (const auto& key : config.keys(section)) {
      if (section == "strata") {
        const auto& labels = agegr_labels();
        if (std::find(labels.begin(), labels.end(), key) == labels.end()) {
          throw ValidationError("unknown population stratum '" + key + "'");
        }
        continue;
      }
      if (!it->second.count(key)) throw ValidationError("unknown config key " + section + "." + key);
    }
  }
}

CommandResult simulate(const Config& config) {
  Context ctx(config);
  if (ctx.semimarkov()) simulate_sm(ctx);
  else simulate_mobile(ctx);
  return ctx.result();
}

CommandResult fit(const Config& config) {
  Context ctx(config);
  if (ctx.semimarkov()) fit_semimarkov(ctx);
  else fit_mobile(ctx);
  return ctx.result();
}

CommandResult estimate(const Config& config) {
  Context ctx(config);
  if (ctx.semimarkov()) estimate_semimarkov(ctx);
  else estimate_mobile(ctx);
  return ctx.result();
}

CommandResult diagnose(const Config& config) {
  Context ctx(config);
  if (ctx.semimarkov()) throw ValidationError("diagnose applies to the mobile model only");
  diagnose_mobile(ctx);
  return ctx.result();
}

CommandResult report(const Config& config) {
  Context ctx(config);
  report_all(ctx);
  return ctx.result();
}

CommandResult run_command(std::string_view command, const Config& config) {
  if (command == "simulate") return simulate(config);
  if (command == "fit") return fit(config);
  if (command == "estimate") return estimate(config);
  if (command == "diagnose") return diagnose(config);
  if (command == "report") return report(config);
  throw ValidationError("unknown command '" + std::string(command) + "'");
}

}  // namespace clvsurvey::cmd
