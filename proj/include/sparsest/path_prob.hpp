#pragma once

#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace sparsest {

/// Randomly pruned MLP with input dim 2, output dim 1, L layers of width w.
/// n[l] nonzero weights survive in layer l (0-based).
struct PathProbParams {
  int width = 16;
  int depth = 4;
  std::vector<std::int64_t> nnz;

  /// depth >= 4 and width > max over middle pairs of n[l] + n[l+1].
  bool in_theorem_regime() const;
  void validate() const;
};

using Rational = boost::multiprecision::cpp_rational;

/// Exact probability that no path connects the w x w layers `pair` and
/// pair + 1 (0-based; both must be square, so 1 <= pair <= depth - 3).
Rational path_prob_exact_rational(const PathProbParams& p, int pair);
double path_prob_exact(const PathProbParams& p, int pair);

/// ((w - n_l + 1 - n_{l+1}) / w)^(n_l - 1). Diagnostic only; it is not a
/// valid bound for every parameter choice.
double path_prob_bound_diagnostic(const PathProbParams& p, int pair);

struct MonteCarloEstimate {
  std::int64_t trials = 0;
  std::int64_t pair_hits = 0;
  std::int64_t model_hits = 0;
  double pair_estimate = 0.0;
  double pair_std_error = 0.0;
  double model_estimate = 0.0;
  double model_std_error = 0.0;
};

/// Samples uniform n[l]-subsets per layer and counts trials with no path
/// between layers `pair`/`pair + 1` and with no input-to-output path at all.
/// Trial t uses seed derive_seed(root_seed, t).
MonteCarloEstimate path_prob_monte_carlo(const PathProbParams& p, int pair,
                                         std::int64_t trials,
                                         std::uint64_t root_seed);
MonteCarloEstimate path_prob_monte_carlo_serial(const PathProbParams& p,
                                                int pair, std::int64_t trials,
                                                std::uint64_t root_seed);

}  // namespace sparsest
