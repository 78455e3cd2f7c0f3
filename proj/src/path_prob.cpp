#include "sparsest/path_prob.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sparsest/rng.hpp"

namespace sparsest {
namespace {

using boost::multiprecision::cpp_int;

cpp_int binom(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  cpp_int r = 1;
  for (std::int64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Masks on a w-column matrix whose n nonzeros occupy exactly k given rows,
// every one of them nonempty.
cpp_int exact_rows(std::int64_t w, std::int64_t k, std::int64_t n) {
  cpp_int total = 0;
  for (std::int64_t j = 0; j <= k; ++j) {
    const cpp_int term = binom(k, j) * binom((k - j) * w, n);
    if (j % 2 == 0) {
      total += term;
    } else {
      total -= term;
    }
  }
  return total;
}

std::pair<int, int> layer_shape(const PathProbParams& p, int l) {
  const int rows = l == p.depth - 1 ? 1 : p.width;
  const int cols = l == 0 ? 2 : p.width;
  return {rows, cols};
}

// Floyd's sampling of n distinct cells out of rows*cols.
void sample_mask(Rng& rng, int rows, int cols, std::int64_t n,
                 std::vector<std::uint8_t>& bits) {
  const auto total = static_cast<std::int64_t>(rows) * cols;
  bits.assign(static_cast<std::size_t>(total), 0);
  for (std::int64_t j = total - n; j < total; ++j) {
    const auto t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j + 1)));
    if (bits[static_cast<std::size_t>(t)]) {
      bits[static_cast<std::size_t>(j)] = 1;
    } else {
      bits[static_cast<std::size_t>(t)] = 1;
    }
  }
}

struct TrialOutcome {
  bool pair_disconnected;
  bool model_disconnected;
};

TrialOutcome run_trial(const PathProbParams& p, int pair, std::uint64_t seed,
                       std::vector<std::vector<std::uint8_t>>& masks) {
  Rng rng(seed);
  masks.resize(static_cast<std::size_t>(p.depth));
  for (int l = 0; l < p.depth; ++l) {
    const auto [rows, cols] = layer_shape(p, l);
    sample_mask(rng, rows, cols, p.nnz[static_cast<std::size_t>(l)],
                masks[static_cast<std::size_t>(l)]);
  }
  const int w = p.width;

  bool pair_connected = false;
  const auto& a = masks[static_cast<std::size_t>(pair)];
  const auto& b = masks[static_cast<std::size_t>(pair + 1)];
  for (int i = 0; i < w && !pair_connected; ++i) {
    bool row_hit = false, col_hit = false;
    for (int c = 0; c < w && !row_hit; ++c) row_hit = a[static_cast<std::size_t>(i) * w + c] != 0;
    if (!row_hit) continue;
    for (int r = 0; r < w && !col_hit; ++r) col_hit = b[static_cast<std::size_t>(r) * w + i] != 0;
    pair_connected = col_hit;
  }

  std::vector<std::uint8_t> reach(2, 1), next;
  for (int l = 0; l < p.depth; ++l) {
    const auto [rows, cols] = layer_shape(p, l);
    const auto& m = masks[static_cast<std::size_t>(l)];
    next.assign(static_cast<std::size_t>(rows), 0);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (m[static_cast<std::size_t>(r) * cols + c] && reach[static_cast<std::size_t>(c)]) {
          next[static_cast<std::size_t>(r)] = 1;
          break;
        }
      }
    }
    reach.swap(next);
  }
  return {!pair_connected, reach[0] == 0};
}

MonteCarloEstimate finish(std::int64_t trials, std::int64_t pair_hits,
                          std::int64_t model_hits) {
  MonteCarloEstimate e;
  e.trials = trials;
  e.pair_hits = pair_hits;
  e.model_hits = model_hits;
  const double n = static_cast<double>(trials);
  e.pair_estimate = static_cast<double>(pair_hits) / n;
  e.model_estimate = static_cast<double>(model_hits) / n;
  e.pair_std_error = std::sqrt(e.pair_estimate * (1.0 - e.pair_estimate) / n);
  e.model_std_error = std::sqrt(e.model_estimate * (1.0 - e.model_estimate) / n);
  return e;
}

void check_pair(const PathProbParams& p, int pair) {
  p.validate();
  if (pair < 1 || pair > p.depth - 3) {
    throw std::invalid_argument("layer pair must index two square hidden layers");
  }
}

}  // namespace

bool PathProbParams::in_theorem_regime() const {
  if (depth < 4) return false;
  std::int64_t worst = 0;
  for (int l = 1; l + 1 <= depth - 2; ++l) {
    worst = std::max(worst, nnz[static_cast<std::size_t>(l)] + nnz[static_cast<std::size_t>(l + 1)]);
  }
  return width > worst;
}

void PathProbParams::validate() const {
  if (width < 1) throw std::invalid_argument("width must be >= 1");
  if (depth < 4) throw std::invalid_argument("depth must be >= 4");
  if (static_cast<int>(nnz.size()) != depth) {
    throw std::invalid_argument("need one nonzero count per layer");
  }
  for (int l = 0; l < depth; ++l) {
    const auto [rows, cols] = layer_shape(*this, l);
    const auto n = nnz[static_cast<std::size_t>(l)];
    if (n < 0 || n > static_cast<std::int64_t>(rows) * cols) {
      throw std::invalid_argument("layer " + std::to_string(l + 1) +
                                  " nonzero count out of range");
    }
  }
}

Rational path_prob_exact_rational(const PathProbParams& p, int pair) {
  check_pair(p, pair);
  const std::int64_t w = p.width;
  const std::int64_t n1 = p.nnz[static_cast<std::size_t>(pair)];
  const std::int64_t n2 = p.nnz[static_cast<std::size_t>(pair + 1)];
  if (n1 == 0 || n2 == 0) return Rational(1);
  const cpp_int d1 = binom(w * w, n1);
  const cpp_int d2 = binom(w * w, n2);
  std::vector<cpp_int> rows2(static_cast<std::size_t>(n2) + 1);
  for (std::int64_t r = 1; r <= std::min(n2, w); ++r) rows2[static_cast<std::size_t>(r)] = exact_rows(w, r, n2);

  Rational total = 0;
  for (std::int64_t k = 1; k <= std::min(n1, w); ++k) {
    const cpp_int outer = binom(w, k) * exact_rows(w, k, n1);
    cpp_int inner = 0;
    for (std::int64_t r = 1; r <= std::min(n2, w - k); ++r) {
      inner += binom(w - k, r) * rows2[static_cast<std::size_t>(r)];
    }
    total += Rational(outer, d1) * Rational(inner, d2);
  }
  return total;
}

double path_prob_exact(const PathProbParams& p, int pair) {
  return static_cast<double>(path_prob_exact_rational(p, pair));
}

double path_prob_bound_diagnostic(const PathProbParams& p, int pair) {
  check_pair(p, pair);
  const double w = p.width;
  const double n1 = static_cast<double>(p.nnz[static_cast<std::size_t>(pair)]);
  const double n2 = static_cast<double>(p.nnz[static_cast<std::size_t>(pair + 1)]);
  return std::pow((w - n1 + 1.0 - n2) / w, n1 - 1.0);
}

MonteCarloEstimate path_prob_monte_carlo_serial(const PathProbParams& p, int pair,
                                                std::int64_t trials,
                                                std::uint64_t root_seed) {
  check_pair(p, pair);
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::int64_t pair_hits = 0, model_hits = 0;
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::int64_t t = 0; t < trials; ++t) {
    const auto o = run_trial(p, pair, derive_seed(root_seed, static_cast<std::uint64_t>(t)), masks);
    pair_hits += o.pair_disconnected;
    model_hits += o.model_disconnected;
  }
  return finish(trials, pair_hits, model_hits);
}

MonteCarloEstimate path_prob_monte_carlo(const PathProbParams& p, int pair,
                                         std::int64_t trials, std::uint64_t root_seed) {
  check_pair(p, pair);
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::int64_t pair_hits = 0, model_hits = 0;
#pragma omp parallel reduction(+ : pair_hits, model_hits)
  {
    std::vector<std::vector<std::uint8_t>> masks;
#pragma omp for schedule(static)
    for (std::int64_t t = 0; t < trials; ++t) {
      const auto o =
          run_trial(p, pair, derive_seed(root_seed, static_cast<std::uint64_t>(t)), masks);
      pair_hits += o.pair_disconnected;
      model_hits += o.model_disconnected;
    }
  }
  return finish(trials, pair_hits, model_hits);
}

}  // namespace sparsest
