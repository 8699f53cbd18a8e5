#ifndef CLVSURVEY_CLVSURVEY_H
#define CLVSURVEY_CLVSURVEY_H

/* C interface to the clvsurvey library.
 *
 * Every fallible call returns a clv_status. On failure a description is
 * available from clv_last_error() on the same thread until the next call
 * that fails. Handles are opaque and released with their _free function;
 * passing NULL to a _free function is a no-op. */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(CLVSURVEY_BUILDING_DLL)
#    define CLV_API __declspec(dllexport)
#  else
#    define CLV_API __declspec(dllimport)
#  endif
#else
#  define CLV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum clv_status {
  CLV_OK = 0,
  CLV_ERR_VALIDATION = 2,
  CLV_ERR_NUMERICAL = 3,
  CLV_ERR_CONVERGENCE = 4,
  CLV_ERR_INTERNAL = 5
} clv_status;

typedef struct clv_config clv_config;
typedef struct clv_result clv_result;
typedef struct clv_draws clv_draws;

CLV_API const char* clv_version(void);
/* Message of the most recent failure on this thread, "" if none. */
CLV_API const char* clv_last_error(void);

/* ---- configuration ---- */
CLV_API clv_status clv_config_new(clv_config** out);
CLV_API clv_status clv_config_load(const char* path, clv_config** out);
CLV_API clv_status clv_config_parse(const char* text, clv_config** out);
CLV_API clv_status clv_config_set(clv_config* cfg, const char* section, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to cap). *needed gets
 * the full length without the terminator. Unset keys are a validation error. */
CLV_API clv_status clv_config_get(const clv_config* cfg, const char* section, const char* key, char* buf,
                                  size_t cap, size_t* needed);
CLV_API clv_status clv_config_hash(const clv_config* cfg, char out[17]);
CLV_API void clv_config_free(clv_config* cfg);

/* ---- commands ----
 * Runs "simulate", "fit", "estimate", "diagnose" or "report". On CLV_OK and
 * CLV_ERR_CONVERGENCE *out receives the result (outputs were written); on
 * other failures *out is set to NULL. */
CLV_API clv_status clv_run_command(const char* command, const clv_config* cfg, clv_result** out);
CLV_API clv_status clv_cmd_simulate(const clv_config* cfg, clv_result** out);
CLV_API clv_status clv_cmd_fit(const clv_config* cfg, clv_result** out);
CLV_API clv_status clv_cmd_estimate(const clv_config* cfg, clv_result** out);
CLV_API clv_status clv_cmd_diagnose(const clv_config* cfg, clv_result** out);
CLV_API clv_status clv_cmd_report(const clv_config* cfg, clv_result** out);

CLV_API clv_status clv_result_status(const clv_result* r);
CLV_API const char* clv_result_message(const clv_result* r);
CLV_API size_t clv_result_file_count(const clv_result* r);
CLV_API const char* clv_result_file(const clv_result* r, size_t i);
CLV_API size_t clv_result_log_count(const clv_result* r);
CLV_API const char* clv_result_log(const clv_result* r, size_t i);
CLV_API void clv_result_free(clv_result* r);

/* ---- posterior draws files ---- */
CLV_API clv_status clv_draws_load(const char* path, clv_draws** out);
CLV_API size_t clv_draws_chains(const clv_draws* d);
CLV_API size_t clv_draws_iterations(const clv_draws* d);
CLV_API size_t clv_draws_columns(const clv_draws* d);
CLV_API const char* clv_draws_column_name(const clv_draws* d, size_t column);
CLV_API clv_status clv_draws_value(const clv_draws* d, size_t chain, size_t iteration, size_t column, double* out);
/* Interval criterion for one parameter (80% intervals). */
CLV_API clv_status clv_draws_diagnostic(const clv_draws* d, const char* parameter, double* out);
CLV_API void clv_draws_free(clv_draws* d);

/* ---- kernels ---- */
CLV_API double clv_gamma_logpdf(double x, double shape, double rate);
CLV_API double clv_equilibrium_prob(double p, double q);
/* Discounted value of purchases at months[i] of brand brands[i] (1-based)
 * within (0, horizon_months]; asp[b-1] is the price of brand b. */
CLV_API clv_status clv_npv(const double* months, const int* brands, size_t n, const double* asp, size_t n_brands,
                           double annual_discount, double horizon_months, double* out);
CLV_API clv_status clv_sample_truncated_gamma(unsigned long long seed, unsigned long long stream, double shape,
                                              double rate, double lo, double hi, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
