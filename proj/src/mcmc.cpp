#include "clvsurvey/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "clvsurvey/error.hpp"
#include "clvsurvey/tabular.hpp"

namespace clvsurvey::mcmc {

namespace {

double to_free(double x, Support s) {
  switch (s) {
    case Support::real: return x;
    case Support::positive:
    case Support::simplex_free: return std::log(x);
    case Support::unit_interval: return logit(x);
  }
  return x;
}

double from_free(double y, Support s) {
  switch (s) {
    case Support::real: return y;
    case Support::positive:
    case Support::simplex_free: return std::exp(y);
    case Support::unit_interval: return logistic(y);
  }
  return y;
}

double log_jacobian(double x, Support s) {
  switch (s) {
    case Support::real: return 0.0;
    case Support::positive:
    case Support::simplex_free: return std::log(x);
    case Support::unit_interval: return std::log(x) + std::log1p(-x);
  }
  return 0.0;
}

bool in_support(double x, Support s) {
  switch (s) {
    case Support::real: return std::isfinite(x);
    case Support::positive:
    case Support::simplex_free: return x > 0.0 && std::isfinite(x);
    case Support::unit_interval: return x > 0.0 && x < 1.0;
  }
  return false;
}

// Robbins–Monro gain.
double adapt_gain(int iteration) { return 1.0 / std::pow(static_cast<double>(iteration) + 1.0, 0.6); }

constexpr double kInitialLogScale = -1.3862943611198906;  // log(0.25)

struct JointGroupState {
  std::size_t index = 0;
  std::vector<std::pair<std::size_t, std::size_t>> elements;  // (block, index)
  double log_scale = 0.0;
  Eigen::MatrixXd chol;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scatter;
  long n_seen = 0;
  long proposals = 0;
  long accepts = 0;
};

class ChainRunner {
 public:
  ChainRunner(const Model& model, const ChainConfig& config, int chain, PosteriorDraws& draws)
      : model_(model), cfg_(config), chain_(chain), draws_(draws), blocks_(model.blocks()),
        rng_(config.seed, static_cast<std::uint64_t>(chain)) {}

  void run() {
    initialize();
    const int total = cfg_.burn_in + cfg_.keep * cfg_.thin;
    std::size_t recorded = 0;
    for (int it = 0; it < total; ++it) {
      const bool adapting = it < cfg_.burn_in;
      sweep(it, adapting);
      if (!adapting && (it - cfg_.burn_in) % cfg_.thin == 0) record(recorded++);
    }
    store_acceptance();
    store_custom_acceptance();
  }

 private:
  void initialize() {
    for (int attempt = 0; attempt < kInitRetries; ++attempt) {
      state_ = model_.initial_state(rng_);
      if (state_.size() != blocks_.size()) throw Error(Status::internal, "initial state does not match block list");
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (state_[b].size() != blocks_[b].dimension) {
          throw Error(Status::internal, "initial state dimension mismatch in block '" + blocks_[b].name + "'");
        }
      }
      if (std::isfinite(model_.log_posterior(state_))) {
        setup_adaptation();
        return;
      }
    }
    throw NumericalError("log posterior not finite at initialization after " + std::to_string(kInitRetries) +
                         " attempts (chain " + std::to_string(chain_) + ")");
  }

  void setup_adaptation() {
    log_scale_.assign(blocks_.size(), {});
    proposals_.assign(blocks_.size(), 0);
    accepts_.assign(blocks_.size(), 0);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      log_scale_[b].assign(blocks_[b].dimension, kInitialLogScale);
    }
    custom_names_ = model_.custom_moves();
    custom_log_scale_.assign(custom_names_.size(), kInitialLogScale);
    custom_proposals_.assign(custom_names_.size(), 0);
    custom_accepts_.assign(custom_names_.size(), 0);
    groups_.clear();
    const auto joint = model_.joint_groups();
    for (std::size_t gi = 0; gi < joint.size(); ++gi) {
      const auto& group = joint[gi];
      JointGroupState g;
      g.index = gi;
      for (std::size_t b : group) {
        if (b >= blocks_.size() || blocks_[b].update_kind != UpdateKind::random_walk_metropolis) {
          throw Error(Status::internal, "joint group references a non random-walk block");
        }
        for (std::size_t i = 0; i < blocks_[b].dimension; ++i) g.elements.emplace_back(b, i);
      }
      const auto d = static_cast<Eigen::Index>(g.elements.size());
      g.mean = Eigen::VectorXd::Zero(d);
      g.scatter = Eigen::MatrixXd::Zero(d, d);
      g.chol = Eigen::MatrixXd::Zero(d, d);
      groups_.push_back(std::move(g));
    }
  }

  void sweep(int it, bool adapting) {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const ParameterBlock& block = blocks_[b];
      if (block.update_kind == UpdateKind::direct_conditional) {
        model_.sample_conditional(state_, b, rng_);
        for (double v : state_[b]) {
          if (std::isnan(v)) nan_error(block.name, it);
        }
        continue;
      }
      for (std::size_t i = 0; i < block.dimension; ++i) update_scalar(b, i, it, adapting);
    }
    for (auto& g : groups_) update_group(g, it, adapting);
    for (std::size_t m = 0; m < custom_names_.size(); ++m) {
      const bool accepted = model_.custom_move(state_, m, std::exp(custom_log_scale_[m]), rng_);
      ++custom_proposals_[m];
      if (accepted) ++custom_accepts_[m];
      for (std::size_t b = 0; b < state_.size(); ++b) {
        for (double v : state_[b]) {
          if (std::isnan(v)) nan_error(custom_names_[m], it);
        }
      }
      if (adapting) custom_log_scale_[m] += ((accepted ? 1.0 : 0.0) - cfg_.target_accept) * adapt_gain(it);
    }
  }

  void update_scalar(std::size_t b, std::size_t i, int it, bool adapting) {
    const Support support = blocks_[b].support;
    const double x_old = state_[b][i];
    const double lp_old = model_.log_local(state_, b, i) + log_jacobian(x_old, support);
    const double y_new = to_free(x_old, support) + std::exp(log_scale_[b][i]) * sample_normal(rng_, 0.0, 1.0);
    const double x_new = from_free(y_new, support);
    ++proposals_[b];
    bool accepted = false;
    if (in_support(x_new, support)) {
      state_[b][i] = x_new;
      const double lp_new = model_.log_local(state_, b, i) + log_jacobian(x_new, support);
      if (std::isnan(lp_new)) nan_error(blocks_[b].name, it);
      if (std::log(rng_.uniform()) < lp_new - lp_old) {
        accepted = true;
      } else {
        state_[b][i] = x_old;
      }
    }
    if (accepted) ++accepts_[b];
    if (adapting) {
      log_scale_[b][i] += ((accepted ? 1.0 : 0.0) - cfg_.target_accept) * adapt_gain(it);
    }
  }

  double group_log_target(const JointGroupState& g) const {
    double lp = model_.log_group_local(state_, g.index);
    for (const auto& [b, i] : g.elements) lp += log_jacobian(state_[b][i], blocks_[b].support);
    return lp;
  }

  void update_group(JointGroupState& g, int it, bool adapting) {
    const auto d = static_cast<Eigen::Index>(g.elements.size());
    Eigen::VectorXd y(d);
    std::vector<double> saved(g.elements.size());
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto [b, i] = g.elements[static_cast<std::size_t>(k)];
      saved[static_cast<std::size_t>(k)] = state_[b][i];
      y[k] = to_free(state_[b][i], blocks_[b].support);
    }

    if (adapting) learn_covariance(g, y, it);

    Eigen::VectorXd z(d);
    for (Eigen::Index k = 0; k < d; ++k) z[k] = sample_normal(rng_, 0.0, 1.0);
    Eigen::VectorXd step;
    if (g.chol.isZero()) {
      step = Eigen::VectorXd(d);
      for (Eigen::Index k = 0; k < d; ++k) {
        const auto [b, i] = g.elements[static_cast<std::size_t>(k)];
        step[k] = std::exp(log_scale_[b][i]) * z[k];
      }
    } else {
      step = g.chol * z;
    }
    step *= std::exp(g.log_scale);

    const double lp_old = group_log_target(g);
    bool valid = true;
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto [b, i] = g.elements[static_cast<std::size_t>(k)];
      const double x = from_free(y[k] + step[k], blocks_[b].support);
      if (!in_support(x, blocks_[b].support)) valid = false;
      state_[b][i] = x;
    }
    bool accepted = false;
    ++g.proposals;
    if (valid) {
      const double lp_new = group_log_target(g);
      if (std::isnan(lp_new)) nan_error("joint group", it);
      accepted = std::log(rng_.uniform()) < lp_new - lp_old;
    }
    if (accepted) {
      ++g.accepts;
    } else {
      for (std::size_t k = 0; k < g.elements.size(); ++k) {
        const auto [b, i] = g.elements[k];
        state_[b][i] = saved[k];
      }
    }
    if (adapting) g.log_scale += ((accepted ? 1.0 : 0.0) - kJointTargetAccept) * adapt_gain(it);
  }

  // Running covariance over the later part of burn-in; the Cholesky factor
  // is refreshed every 100 iterations and frozen with the rest of the
  // adaptation state.
  void learn_covariance(JointGroupState& g, const Eigen::VectorXd& y, int it) {
    const int start = cfg_.burn_in / 3;
    if (it < start) return;
    ++g.n_seen;
    const Eigen::VectorXd delta = y - g.mean;
    g.mean += delta / static_cast<double>(g.n_seen);
    g.scatter += delta * (y - g.mean).transpose();
    const auto d = static_cast<long>(y.size());
    if (g.n_seen >= 2 * d + 20 && (it - start) % 100 == 99) {
      Eigen::MatrixXd cov = g.scatter / static_cast<double>(g.n_seen - 1);
      cov.diagonal().array() += 1e-8;
      cov *= 2.38 * 2.38 / static_cast<double>(d);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        if (g.chol.isZero()) g.log_scale = 0.0;
        g.chol = llt.matrixL();
      }
    }
  }

  void record(std::size_t iteration) {
    std::size_t col = 0;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (!blocks_[b].stored) continue;
      for (double v : state_[b]) draws_.value(static_cast<std::size_t>(chain_), iteration, col++) = v;
    }
  }

  void store_acceptance() {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (blocks_[b].update_kind != UpdateKind::random_walk_metropolis) continue;
      block_acceptance_[blocks_[b].name] =
          proposals_[b] ? static_cast<double>(accepts_[b]) / static_cast<double>(proposals_[b]) : 0.0;
    }
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      const auto& g = groups_[k];
      block_acceptance_["joint_group_" + std::to_string(k + 1)] =
          g.proposals ? static_cast<double>(g.accepts) / static_cast<double>(g.proposals) : 0.0;
    }
  }

  void store_custom_acceptance() {
    for (std::size_t m = 0; m < custom_names_.size(); ++m) {
      block_acceptance_[custom_names_[m]] =
          custom_proposals_[m] ? static_cast<double>(custom_accepts_[m]) / static_cast<double>(custom_proposals_[m]) : 0.0;
    }
  }

  [[noreturn]] void nan_error(const std::string& block, int it) const {
    throw NumericalError("NaN encountered in block '" + block + "' at iteration " + std::to_string(it) +
                         " (chain " + std::to_string(chain_) + ")");
  }

 public:
  std::map<std::string, double> block_acceptance_;

 private:
  const Model& model_;
  const ChainConfig& cfg_;
  int chain_;
  PosteriorDraws& draws_;
  const std::vector<ParameterBlock>& blocks_;
  RngStream rng_;
  State state_;
  std::vector<std::vector<double>> log_scale_;
  std::vector<long> proposals_;
  std::vector<long> accepts_;
  std::vector<JointGroupState> groups_;
  std::vector<std::string> custom_names_;
  std::vector<double> custom_log_scale_;
  std::vector<long> custom_proposals_;
  std::vector<long> custom_accepts_;
};

std::string column_name(const ParameterBlock& block, std::size_t i) {
  if (!block.labels.empty()) return block.labels.at(i);
  if (block.dimension == 1) return block.name;
  return block.name + "[" + std::to_string(i + 1) + "]";
}

}  // namespace

double Model::log_local(const State& state, std::size_t, std::size_t) const { return log_posterior(state); }

double Model::log_group_local(const State& state, std::size_t) const { return log_posterior(state); }

bool Model::custom_move(State&, std::size_t move, double, RngStream&) const {
  throw Error(Status::internal, "model declares custom move " + std::to_string(move) + " without implementing it");
}

void Model::sample_conditional(State&, std::size_t block, RngStream&) const {
  throw Error(Status::internal, "model declares direct block " + std::to_string(block) + " without a sampler");
}

void ChainConfig::validate() const {
  if (n_chains < 1) throw ValidationError("n_chains must be at least 1");
  if (burn_in < 0) throw ValidationError("burn_in must be nonnegative");
  if (keep < 1) throw ValidationError("keep must be at least 1");
  if (thin < 1) throw ValidationError("thin must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("target_accept must lie in (0, 1)");
}

PosteriorDraws::PosteriorDraws(std::vector<std::string> names, std::vector<BlockColumns> blocks,
                               std::size_t n_chains, std::size_t n_iterations)
    : names_(std::move(names)), blocks_(std::move(blocks)), n_chains_(n_chains), n_iterations_(n_iterations),
      values_(n_chains * n_iterations * names_.size(), 0.0) {}

const BlockColumns& PosteriorDraws::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw ValidationError("posterior draws have no block '" + std::string(name) + "'");
}

bool PosteriorDraws::has_block(std::string_view name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const BlockColumns& b) { return b.name == name; });
}

std::size_t PosteriorDraws::column(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ValidationError("posterior draws have no parameter '" + std::string(name) + "'");
}

std::vector<double> PosteriorDraws::chain_values(std::size_t chain, std::size_t column) const {
  std::vector<double> out(n_iterations_);
  for (std::size_t t = 0; t < n_iterations_; ++t) out[t] = value(chain, t, column);
  return out;
}

std::vector<double> PosteriorDraws::pooled_values(std::size_t column) const {
  std::vector<double> out;
  out.reserve(n_pooled());
  for (std::size_t c = 0; c < n_chains_; ++c) {
    for (std::size_t t = 0; t < n_iterations_; ++t) out.push_back(value(c, t, column));
  }
  return out;
}

std::vector<std::size_t> PosteriorDraws::spread_indices(std::size_t count) const {
  const std::size_t total = n_pooled();
  std::vector<std::size_t> out;
  if (total == 0 || count == 0) return out;
  if (count >= total) {
    out.resize(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = i;
    return out;
  }
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(k * total / count);
  return out;
}

PosteriorDraws run_chains(const Model& model, const ChainConfig& config) {
  config.validate();
  const auto& blocks = model.blocks();
  std::vector<std::string> names;
  std::vector<BlockColumns> layout;
  for (const auto& block : blocks) {
    if (!block.stored) continue;
    if (!block.labels.empty() && block.labels.size() != block.dimension) {
      throw Error(Status::internal, "label count mismatch in block '" + block.name + "'");
    }
    layout.push_back(BlockColumns{block.name, names.size(), block.dimension});
    for (std::size_t i = 0; i < block.dimension; ++i) names.push_back(column_name(block, i));
  }
  PosteriorDraws draws(std::move(names), std::move(layout), static_cast<std::size_t>(config.n_chains),
                       static_cast<std::size_t>(config.keep));

  std::vector<std::map<std::string, double>> acceptance(static_cast<std::size_t>(config.n_chains));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(config.n_chains));
  auto run_one = [&](int c) {
    try {
      ChainRunner runner(model, config, c, draws);
      runner.run();
      acceptance[static_cast<std::size_t>(c)] = std::move(runner.block_acceptance_);
    } catch (...) {
      failures[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (config.parallel && config.n_chains > 1 && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> workers;
    for (int c = 0; c < config.n_chains; ++c) workers.emplace_back(run_one, c);
    for (auto& w : workers) w.join();
  } else {
    for (int c = 0; c < config.n_chains; ++c) run_one(c);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  for (std::size_t c = 0; c < acceptance.size(); ++c) {
    for (const auto& [name, rate] : acceptance[c]) {
      auto& v = draws.acceptance()[name];
      v.resize(acceptance.size(), 0.0);
      v[c] = rate;
    }
  }
  if (config.n_chains * config.keep < kMinPooledDraws) {
    draws.warnings().push_back("fewer than " + std::to_string(kMinPooledDraws) +
                               " pooled draws; interval diagnostics are unreliable");
  }
  return draws;
}

double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(n * prob - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

IntervalDiagnostic interval_diagnostic(const PosteriorDraws& draws, std::string_view parameter, double coverage) {
  if (draws.n_chains() < 2) throw ValidationError("interval diagnostic needs at least two chains");
  if (draws.n_iterations() < 100) throw ValidationError("interval diagnostic needs at least 100 draws per chain");
  if (!(coverage > 0.0 && coverage < 1.0)) throw ValidationError("coverage must lie in (0, 1)");
  const std::size_t col = draws.column(parameter);
  const double lo_p = 0.5 * (1.0 - coverage);
  const double hi_p = 1.0 - lo_p;

  std::vector<double> pooled = draws.pooled_values(col);
  std::sort(pooled.begin(), pooled.end());
  if (pooled.front() == pooled.back()) return IntervalDiagnostic{1.0, true};
  const double pooled_len = sorted_quantile(pooled, hi_p) - sorted_quantile(pooled, lo_p);

  double within = 0.0;
  for (std::size_t c = 0; c < draws.n_chains(); ++c) {
    auto v = draws.chain_values(c, col);
    std::sort(v.begin(), v.end());
    within += sorted_quantile(v, hi_p) - sorted_quantile(v, lo_p);
  }
  within /= static_cast<double>(draws.n_chains());
  if (within <= 0.0) return IntervalDiagnostic{pooled_len > 0.0 ? kInf : 1.0, pooled_len <= 0.0};
  return IntervalDiagnostic{pooled_len / within, false};
}

std::vector<NamedDiagnostic> all_interval_diagnostics(const PosteriorDraws& draws, double coverage) {
  std::vector<NamedDiagnostic> out;
  out.reserve(draws.n_columns());
  for (const auto& name : draws.names()) out.push_back(NamedDiagnostic{name, interval_diagnostic(draws, name, coverage)});
  return out;
}

void write_draws(std::ostream& out, const PosteriorDraws& draws, std::size_t thin) {
  if (thin == 0) thin = 1;
  out << "blocks";
  for (const auto& b : draws.blocks()) out << ',' << b.name << ':' << b.dimension;
  out << '\n';
  out << "chain,iteration";
  for (const auto& n : draws.names()) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < draws.n_chains(); ++c) {
    for (std::size_t t = 0; t < draws.n_iterations(); t += thin) {
      out << c + 1 << ',' << t + 1;
      const double* row = draws.row(c, t);
      for (std::size_t j = 0; j < draws.n_columns(); ++j) out << ',' << format_double(row[j]);
      out << '\n';
    }
  }
}

PosteriorDraws read_draws(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_data_line(in, line, &line_no)) throw ValidationError("draws file is empty");
  auto fields = split_csv_line(line);
  if (fields.empty() || fields.front() != "blocks") throw ValidationError("draws file must start with a blocks line");
  std::vector<BlockColumns> layout;
  std::size_t offset = 0;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto colon = fields[i].rfind(':');
    if (colon == std::string::npos) throw ValidationError("malformed block entry '" + fields[i] + "'");
    const auto dim = static_cast<std::size_t>(parse_int(std::string_view(fields[i]).substr(colon + 1), "block size"));
    layout.push_back(BlockColumns{fields[i].substr(0, colon), offset, dim});
    offset += dim;
  }
  if (!next_data_line(in, line, &line_no)) throw ValidationError("draws file has no header");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "chain" || header[1] != "iteration") {
    throw ValidationError("draws header must begin with chain,iteration");
  }
  std::vector<std::string> names(header.begin() + 2, header.end());
  if (names.size() != offset) throw ValidationError("draws header does not match declared blocks");

  std::vector<std::vector<std::vector<double>>> rows;  // [chain][iter][col]
  while (next_data_line(in, line, &line_no)) {
    auto f = split_csv_line(line);
    if (f.size() != names.size() + 2) {
      throw ValidationError("draws line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                            " fields, expected " + std::to_string(names.size() + 2));
    }
    const auto chain = parse_int(f[0], "chain");
    if (chain < 1) throw ValidationError("chain index must be positive");
    if (static_cast<std::size_t>(chain) > rows.size()) rows.resize(static_cast<std::size_t>(chain));
    std::vector<double> vals(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) vals[j] = parse_double(f[j + 2], names[j]);
    rows[static_cast<std::size_t>(chain - 1)].push_back(std::move(vals));
  }
  if (rows.empty()) throw ValidationError("draws file contains no draws");
  const std::size_t n_iter = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != n_iter) throw ValidationError("chains in draws file have unequal lengths");
  }
  PosteriorDraws draws(names, layout, rows.size(), n_iter);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (std::size_t t = 0; t < n_iter; ++t) {
      for (std::size_t j = 0; j < names.size(); ++j) draws.value(c, t, j) = rows[c][t][j];
    }
  }
  return draws;
}

}  // namespace clvsurvey::mcmc
