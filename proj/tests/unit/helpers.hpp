#pragma once

#include <string>
#include <vector>

#include "clvsurvey/mcmc.hpp"
#include "clvsurvey/mobile_model.hpp"

namespace testing {

// Draws file in the mobile model's layout where every draw equals `p`.
inline clvsurvey::mcmc::PosteriorDraws constant_mobile_draws(const clvsurvey::mobile::Params& p, int n_brands,
                                                             std::size_t n_iterations, std::size_t n_chains = 1) {
  using namespace clvsurvey;
  const std::size_t P = p.beta.size();
  std::vector<std::string> names{"kappa"};
  for (std::size_t j = 0; j < P; ++j) names.push_back("beta[" + std::to_string(j) + "]");
  for (std::size_t j = 0; j < P; ++j) names.push_back("alpha[" + std::to_string(j) + "]");
  for (std::size_t j = 0; j < p.w.size(); ++j) names.push_back("w[" + std::to_string(j) + "]");
  std::vector<mcmc::BlockColumns> blocks{
      {"kappa", 0, 1}, {"beta", 1, P}, {"alpha", 1 + P, P}, {"w", 1 + 2 * P, static_cast<std::size_t>(n_brands) * 6}};
  mcmc::PosteriorDraws d(names, blocks, n_chains, n_iterations);
  for (std::size_t c = 0; c < n_chains; ++c) {
    for (std::size_t t = 0; t < n_iterations; ++t) {
      std::size_t j = 0;
      d.value(c, t, j++) = p.kappa;
      for (double v : p.beta) d.value(c, t, j++) = v;
      for (double v : p.alpha) d.value(c, t, j++) = v;
      for (double v : p.w) d.value(c, t, j++) = v;
    }
  }
  return d;
}

}  // namespace testing
