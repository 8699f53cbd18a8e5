#pragma once

// Multi-chain Metropolis-within-Gibbs driver.
//
// Random-walk blocks are updated one scalar at a time on a transformed scale
// (log for positive, logit for unit-interval). Proposal scales adapt toward
// the target acceptance rate during burn-in via Robbins–Monro and are frozen
// afterwards. Direct-conditional blocks are redrawn exactly once per sweep.
// Models may also name groups of random-walk blocks that receive an extra
// joint Gaussian move whose covariance is learned during burn-in.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "clvsurvey/prob.hpp"

namespace clvsurvey::mcmc {

enum class Support { real, positive, unit_interval, simplex_free };
enum class UpdateKind { random_walk_metropolis, direct_conditional };

struct ParameterBlock {
  std::string name;
  std::size_t dimension = 1;
  Support support = Support::real;
  UpdateKind update_kind = UpdateKind::random_walk_metropolis;
  bool stored = true;               // latent blocks are usually not recorded
  std::vector<std::string> labels;  // optional per-element column names
};

using State = std::vector<std::vector<double>>;

class Model {
 public:
  virtual ~Model() = default;

  virtual const std::vector<ParameterBlock>& blocks() const = 0;
  virtual State initial_state(RngStream& rng) const = 0;
  virtual double log_posterior(const State& state) const = 0;

  /// Log-density terms that involve element (block, index), up to a constant
  /// that does not depend on it. The default evaluates the full posterior.
  virtual double log_local(const State& state, std::size_t block, std::size_t index) const;

  /// Exact draw from the full conditional of a direct_conditional block.
  virtual void sample_conditional(State& state, std::size_t block, RngStream& rng) const;

  /// Groups of random-walk blocks that also get a joint adaptive move.
  virtual std::vector<std::vector<std::size_t>> joint_groups() const { return {}; }

  /// Log-density terms that involve any element of joint group `group`.
  /// The default evaluates the full posterior.
  virtual double log_group_local(const State& state, std::size_t group) const;

  /// Names of model-specific Metropolis moves run after each sweep.
  virtual std::vector<std::string> custom_moves() const { return {}; }
  /// Performs custom move `move` with engine-adapted step size `scale`;
  /// returns whether the proposal was accepted.
  virtual bool custom_move(State& state, std::size_t move, double scale, RngStream& rng) const;
};

struct ChainConfig {
  int n_chains = 3;
  int burn_in = 3000;
  int keep = 3000;
  int thin = 1;
  std::uint64_t seed = 1;
  double target_accept = 0.35;
  bool parallel = true;

  void validate() const;
};

/// Acceptance target for the joint group moves.
inline constexpr double kJointTargetAccept = 0.234;
/// Initialization attempts before giving up on a non-finite log posterior.
inline constexpr int kInitRetries = 100;
/// Pooled draw count below which diagnostics are flagged as unreliable.
inline constexpr int kMinPooledDraws = 1000;
/// Convergence threshold on the interval criterion.
inline constexpr double kConvergenceThreshold = 1.1;

struct BlockColumns {
  std::string name;
  std::size_t first = 0;
  std::size_t dimension = 0;
};

/// Post-burn-in, post-thinning draws. Values are stored chain-major:
/// value(chain, iteration, column).
class PosteriorDraws {
 public:
  PosteriorDraws() = default;
  PosteriorDraws(std::vector<std::string> names, std::vector<BlockColumns> blocks, std::size_t n_chains,
                 std::size_t n_iterations);

  std::size_t n_chains() const noexcept { return n_chains_; }
  std::size_t n_iterations() const noexcept { return n_iterations_; }
  std::size_t n_columns() const noexcept { return names_.size(); }
  std::size_t n_pooled() const noexcept { return n_chains_ * n_iterations_; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<BlockColumns>& blocks() const noexcept { return blocks_; }
  const BlockColumns& block(std::string_view name) const;
  bool has_block(std::string_view name) const;
  std::size_t column(std::string_view name) const;

  double value(std::size_t chain, std::size_t iteration, std::size_t column) const {
    return values_[(chain * n_iterations_ + iteration) * names_.size() + column];
  }
  double& value(std::size_t chain, std::size_t iteration, std::size_t column) {
    return values_[(chain * n_iterations_ + iteration) * names_.size() + column];
  }
  /// Row of all columns for one draw.
  const double* row(std::size_t chain, std::size_t iteration) const {
    return values_.data() + (chain * n_iterations_ + iteration) * names_.size();
  }
  /// Pooled index p = chain * n_iterations + iteration.
  const double* pooled_row(std::size_t p) const { return values_.data() + p * names_.size(); }

  std::vector<double> chain_values(std::size_t chain, std::size_t column) const;
  std::vector<double> pooled_values(std::size_t column) const;

  std::map<std::string, std::vector<double>>& acceptance() noexcept { return acceptance_; }
  const std::map<std::string, std::vector<double>>& acceptance() const noexcept { return acceptance_; }
  std::vector<std::string>& warnings() noexcept { return warnings_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Evenly spaced pooled draw indices, at most `count` of them.
  std::vector<std::size_t> spread_indices(std::size_t count) const;

 private:
  std::vector<std::string> names_;
  std::vector<BlockColumns> blocks_;
  std::size_t n_chains_ = 0;
  std::size_t n_iterations_ = 0;
  std::vector<double> values_;
  std::map<std::string, std::vector<double>> acceptance_;
  std::vector<std::string> warnings_;
};

/// Runs config.n_chains independent chains. Chain c uses RngStream(seed, c),
/// so the output is identical whether or not chains run in parallel.
PosteriorDraws run_chains(const Model& model, const ChainConfig& config);

struct IntervalDiagnostic {
  double ratio = 1.0;
  bool degenerate = false;
};

/// Interval-based potential scale reduction: length of the pooled central
/// `coverage` interval divided by the mean within-chain interval length.
/// Interval endpoints are inverse-ECDF quantiles.
IntervalDiagnostic interval_diagnostic(const PosteriorDraws& draws, std::string_view parameter,
                                       double coverage = 0.80);

struct NamedDiagnostic {
  std::string parameter;
  IntervalDiagnostic value;
};
std::vector<NamedDiagnostic> all_interval_diagnostics(const PosteriorDraws& draws, double coverage = 0.80);

/// Inverse-ECDF quantile of an ascending-sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double prob);

/// Columnar text: chain,iteration,<parameter columns>. Blocks are declared
/// in a leading "blocks" line so the layout survives a round trip.
void write_draws(std::ostream& out, const PosteriorDraws& draws, std::size_t thin = 1);
PosteriorDraws read_draws(std::istream& in);

}  // namespace clvsurvey::mcmc
