// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "clvsurvey/clvsurvey.h"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> seed;
  std::optional<std::string> variant;
  std::optional<std::string> model;
  std::optional<int> chains;
  std::optional<int> keep;
  std::optional<int> burnin;
  std::optional<bool> strict;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

int report_failure(clv_status s, const char* what) {
  std::fprintf(stderr, "clvsurvey: %s: %s\n", what, clv_last_error());
  return static_cast<int>(s);
}

int run(const std::string& command, const Overrides& o) {
  clv_config* cfg = nullptr;
  clv_status s = o.config_path.empty() ? clv_config_new(&cfg) : clv_config_load(o.config_path.c_str(), &cfg);
  if (s != CLV_OK) return report_failure(s, "config");

  auto set = [&](const char* section, const char* key, const std::string& value) {
    if (s == CLV_OK) s = clv_config_set(cfg, section, key, value.c_str());
  };
  if (o.seed) set("run", "seed", *o.seed);
  if (o.variant) set("run", "variant", *o.variant);
  if (o.model) set("run", "model", *o.model);
  if (o.out_dir) set("run", "out_dir", *o.out_dir);
  if (o.chains) set("chains", "n_chains", std::to_string(*o.chains));
  if (o.keep) set("chains", "keep", std::to_string(*o.keep));
  if (o.burnin) set("chains", "burn_in", std::to_string(*o.burnin));
  if (o.strict) set("fit", "strict", *o.strict ? "true" : "false");
  if (s != CLV_OK) {
    clv_config_free(cfg);
    return report_failure(s, "config");
  }

  clv_result* res = nullptr;
  s = clv_run_command(command.c_str(), cfg, &res);
  clv_config_free(cfg);
  if (res && !o.quiet) {
    for (size_t i = 0; i < clv_result_log_count(res); ++i) std::printf("%s\n", clv_result_log(res, i));
  }
  clv_result_free(res);
  if (s != CLV_OK) return report_failure(s, command.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Customer lifetime value from interval-censored survey data"};
  app.set_version_flag("--version", std::string(clv_version()));
  app.require_subcommand(1);

  Overrides o;
  app.add_option("-c,--config", o.config_path, "Configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Random seed (overrides run.seed)");
  app.add_option("--variant", o.variant, "Mobile model variant")->check(CLI::IsMember({"historical", "intended"}));
  app.add_option("--model", o.model, "Model family")->check(CLI::IsMember({"mobile", "semimarkov"}));
  app.add_option("--chains", o.chains, "Number of MCMC chains");
  app.add_option("--keep", o.keep, "Kept draws per chain");
  app.add_option("--burnin", o.burnin, "Burn-in iterations per chain");
  app.add_flag("--strict,!--no-strict", o.strict, "Fail fit when any diagnostic exceeds 1.1 (default on)");
  app.add_option("--out-dir", o.out_dir, "Output directory (overrides run.out_dir)");
  app.add_flag("-q,--quiet", o.quiet, "Only print errors");

  std::string command;
  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"simulate", "Generate a synthetic survey (and, for the semi-Markov model, a population and its true CE)"},
      {"fit", "Fit the model by MCMC and write draws, summaries and convergence tables"},
      {"estimate", "Simulate future purchases and write CLV and CE tables"},
      {"diagnose", "Posterior predictive checks for the mobile model"},
      {"report", "Render the CSV outputs in out_dir as a text report"},
  };
  for (const auto& c : commands) {
    app.add_subcommand(c.name, c.help)->fallthrough()->callback([&command, name = c.name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run(command, o);
}
