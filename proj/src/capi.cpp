#include "clvsurvey/clvsurvey.h"

#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "clvsurvey/clv.hpp"
#include "clvsurvey/commands.hpp"
#include "clvsurvey/config.hpp"
#include "clvsurvey/error.hpp"
#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/prob.hpp"
#include "clvsurvey/semimarkov.hpp"

struct clv_config {
  clvsurvey::Config cfg;
};

struct clv_result {
  clvsurvey::cmd::CommandResult r;
};

struct clv_draws {
  clvsurvey::mcmc::PosteriorDraws d;
};

namespace {

thread_local std::string g_last_error;

clv_status fail(clv_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Runs `f`, translating exceptions into status codes.
template <class F>
clv_status guarded(F&& f) {
  try {
    return f();
  } catch (const clvsurvey::Error& e) {
    return fail(static_cast<clv_status>(e.status()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CLV_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CLV_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CLV_ERR_INTERNAL, "unknown error");
  }
}

clv_status null_arg(const char* name) { return fail(CLV_ERR_VALIDATION, std::string(name) + " must not be NULL"); }

clv_status run(const char* command, const clv_config* cfg, clv_result** out) {
  if (out) *out = nullptr;
  if (!command) return null_arg("command");
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto res = std::make_unique<clv_result>();
    res->r = clvsurvey::cmd::run_command(command, cfg->cfg);
    const auto status = static_cast<clv_status>(res->r.status);
    if (status != CLV_OK) fail(status, res->r.message);
    *out = res.release();
    return status;
  });
}

}  // namespace

extern "C" {

const char* clv_version(void) { return CLVSURVEY_VERSION; }
const char* clv_last_error(void) { return g_last_error.c_str(); }

clv_status clv_config_new(clv_config** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = new clv_config();
    return CLV_OK;
  });
}

clv_status clv_config_load(const char* path, clv_config** out) {
  if (out) *out = nullptr;
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto c = std::make_unique<clv_config>();
    c->cfg = clvsurvey::Config::load(path);
    *out = c.release();
    return CLV_OK;
  });
}

clv_status clv_config_parse(const char* text, clv_config** out) {
  if (out) *out = nullptr;
  if (!text) return null_arg("text");
  if (!out) return null_arg("out");
  return guarded([&] {
    std::istringstream in(text);
    auto c = std::make_unique<clv_config>();
    c->cfg = clvsurvey::Config::parse(in, "<text>");
    *out = c.release();
    return CLV_OK;
  });
}

clv_status clv_config_set(clv_config* cfg, const char* section, const char* key, const char* value) {
  if (!cfg) return null_arg("cfg");
  if (!section || !key || !value) return null_arg("section/key/value");
  return guarded([&] {
    cfg->cfg.set(section, key, value);
    return CLV_OK;
  });
}

clv_status clv_config_get(const clv_config* cfg, const char* section, const char* key, char* buf, size_t cap,
                          size_t* needed) {
  if (!cfg) return null_arg("cfg");
  if (!section || !key) return null_arg("section/key");
  return guarded([&] {
    const auto v = cfg->cfg.get(section, key);
    if (!v) return fail(CLV_ERR_VALIDATION, std::string("config key ") + section + "." + key + " is not set");
    if (needed) *needed = v->size();
    if (buf && cap > 0) {
      const size_t n = v->size() < cap - 1 ? v->size() : cap - 1;
      v->copy(buf, n);
      buf[n] = '\0';
    }
    return CLV_OK;
  });
}

clv_status clv_config_hash(const clv_config* cfg, char out[17]) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    const auto h = cfg->cfg.hash();
    h.copy(out, 16);
    out[16] = '\0';
    return CLV_OK;
  });
}

void clv_config_free(clv_config* cfg) { delete cfg; }

clv_status clv_run_command(const char* command, const clv_config* cfg, clv_result** out) {
  return run(command, cfg, out);
}
clv_status clv_cmd_simulate(const clv_config* cfg, clv_result** out) { return run("simulate", cfg, out); }
clv_status clv_cmd_fit(const clv_config* cfg, clv_result** out) { return run("fit", cfg, out); }
clv_status clv_cmd_estimate(const clv_config* cfg, clv_result** out) { return run("estimate", cfg, out); }
clv_status clv_cmd_diagnose(const clv_config* cfg, clv_result** out) { return run("diagnose", cfg, out); }
clv_status clv_cmd_report(const clv_config* cfg, clv_result** out) { return run("report", cfg, out); }

clv_status clv_result_status(const clv_result* r) { return r ? static_cast<clv_status>(r->r.status) : CLV_ERR_VALIDATION; }
const char* clv_result_message(const clv_result* r) { return r ? r->r.message.c_str() : ""; }
size_t clv_result_file_count(const clv_result* r) { return r ? r->r.files.size() : 0; }
const char* clv_result_file(const clv_result* r, size_t i) {
  return r && i < r->r.files.size() ? r->r.files[i].c_str() : nullptr;
}
size_t clv_result_log_count(const clv_result* r) { return r ? r->r.log.size() : 0; }
const char* clv_result_log(const clv_result* r, size_t i) {
  return r && i < r->r.log.size() ? r->r.log[i].c_str() : nullptr;
}
void clv_result_free(clv_result* r) { delete r; }

clv_status clv_draws_load(const char* path, clv_draws** out) {
  if (out) *out = nullptr;
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) return fail(CLV_ERR_VALIDATION, std::string("cannot open draws file ") + path);
    auto d = std::make_unique<clv_draws>();
    d->d = clvsurvey::mcmc::read_draws(in);
    *out = d.release();
    return CLV_OK;
  });
}

size_t clv_draws_chains(const clv_draws* d) { return d ? d->d.n_chains() : 0; }
size_t clv_draws_iterations(const clv_draws* d) { return d ? d->d.n_iterations() : 0; }
size_t clv_draws_columns(const clv_draws* d) { return d ? d->d.n_columns() : 0; }
const char* clv_draws_column_name(const clv_draws* d, size_t column) {
  return d && column < d->d.n_columns() ? d->d.names()[column].c_str() : nullptr;
}

clv_status clv_draws_value(const clv_draws* d, size_t chain, size_t iteration, size_t column, double* out) {
  if (!d) return null_arg("d");
  if (!out) return null_arg("out");
  if (chain >= d->d.n_chains() || iteration >= d->d.n_iterations() || column >= d->d.n_columns()) {
    return fail(CLV_ERR_VALIDATION, "draw index out of range");
  }
  *out = d->d.value(chain, iteration, column);
  return CLV_OK;
}

clv_status clv_draws_diagnostic(const clv_draws* d, const char* parameter, double* out) {
  if (!d) return null_arg("d");
  if (!parameter) return null_arg("parameter");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = clvsurvey::mcmc::interval_diagnostic(d->d, parameter).ratio;
    return CLV_OK;
  });
}

void clv_draws_free(clv_draws* d) { delete d; }

double clv_gamma_logpdf(double x, double shape, double rate) {
  return clvsurvey::gamma_logpdf(x, clvsurvey::GammaSpec{shape, rate});
}

double clv_equilibrium_prob(double p, double q) { return clvsurvey::sm::equilibrium_prob(p, q); }

clv_status clv_npv(const double* months, const int* brands, size_t n, const double* asp, size_t n_brands,
                   double annual_discount, double horizon_months, double* out) {
  if (!out) return null_arg("out");
  if (n > 0 && (!months || !brands)) return null_arg("months/brands");
  if (!asp) return null_arg("asp");
  return guarded([&] {
    clvsurvey::clv::RevenueSpec spec;
    spec.asp_per_brand.assign(asp, asp + n_brands);
    spec.annual_discount = annual_discount;
    spec.horizon_months = horizon_months;
    spec.validate(static_cast<int>(n_brands));
    std::vector<clvsurvey::clv::TimedPurchase> h;
    h.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      if (brands[i] < 1 || static_cast<size_t>(brands[i]) > n_brands) {
        return fail(CLV_ERR_VALIDATION, "purchase " + std::to_string(i) + " has an unknown brand");
      }
      h.push_back({months[i], brands[i]});
    }
    *out = clvsurvey::clv::npv(h, spec);
    return CLV_OK;
  });
}

clv_status clv_sample_truncated_gamma(unsigned long long seed, unsigned long long stream, double shape, double rate,
                                      double lo, double hi, size_t n, double* out) {
  if (n > 0 && !out) return null_arg("out");
  return guarded([&] {
    clvsurvey::RngStream rng(seed, stream);
    for (size_t i = 0; i < n; ++i) out[i] = clvsurvey::sample_truncated_gamma(rng, {shape, rate}, lo, hi);
    return CLV_OK;
  });
}

}  // extern "C"
