#include <cmath>
#include <functional>

#include "doctest.h"
#include "sparsest/analysis.hpp"
#include "sparsest/path_prob.hpp"
#include "sparsest/rng.hpp"

using namespace sparsest;

namespace {

ModelMask random_mask(int width, Rng& rng) {
  ModelMask mm = empty_mask(width);
  const double density = rng.uniform(0.1, 0.9);
  for (auto& L : mm.weights) {
    for (int r = 0; r < L.rows(); ++r) {
      for (int c = 0; c < L.cols(); ++c) L.set(r, c, rng.uniform() < density);
    }
  }
  return mm;
}

// Marks every weight on an explicit input-to-output path.
std::array<LayerMask, kDepth> dfs_paths(const ModelMask& mm) {
  std::array<LayerMask, kDepth> on_path;
  for (int l = 0; l < kDepth; ++l) on_path[l] = LayerMask(mm.weights[l].rows(), mm.weights[l].cols());
  std::vector<std::pair<int, int>> stack;  // (row, col) per layer
  std::function<void(int, int)> walk = [&](int layer, int node) {
    if (layer == kDepth) {
      for (int l = 0; l < kDepth; ++l) on_path[l].set(stack[l].first, stack[l].second, true);
      return;
    }
    const LayerMask& W = mm.weights[layer];
    for (int r = 0; r < W.rows(); ++r) {
      if (!W(r, node)) continue;
      stack.push_back({r, node});
      walk(layer + 1, r);
      stack.pop_back();
    }
  };
  for (int i = 0; i < kInputDim; ++i) walk(0, i);
  return on_path;
}

bool dominated(const ParetoPoint& p, const ParetoPoint& q) {
  return q.nnz <= p.nnz && q.accuracy >= p.accuracy && (q.nnz < p.nnz || q.accuracy > p.accuracy);
}

// Exhaustive probability that no neuron links a random n1-subset of one w x w
// layer (its rows) to a random n2-subset of the next (its columns).
double enumerate_pair(int w, int n1, int n2) {
  const int cells = w * w;
  std::int64_t hits = 0, total = 0;
  std::vector<std::uint32_t> subsets1, subsets2;
  for (std::uint32_t v = 0; v < (1u << cells); ++v) {
    const int pc = __builtin_popcount(v);
    if (pc == n1) subsets1.push_back(v);
    if (pc == n2) subsets2.push_back(v);
  }
  for (auto a : subsets1) {
    std::uint32_t rows = 0;
    for (int i = 0; i < cells; ++i) {
      if (a >> i & 1) rows |= 1u << (i / w);
    }
    for (auto b : subsets2) {
      std::uint32_t cols = 0;
      for (int i = 0; i < cells; ++i) {
        if (b >> i & 1) cols |= 1u << (i % w);
      }
      ++total;
      hits += (rows & cols) == 0;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

PathProbParams params(int w, std::vector<std::int64_t> n) {
  PathProbParams p;
  p.width = w;
  p.depth = static_cast<int>(n.size());
  p.nnz = std::move(n);
  return p;
}

}  // namespace

TEST_CASE("effective mask of a single chain is unchanged") {
  ModelMask mm = empty_mask(4);
  mm.weights[0].set(2, 1, true);
  mm.weights[1].set(0, 2, true);
  mm.weights[2].set(3, 0, true);
  mm.weights[3].set(0, 3, true);
  const EffectiveMask em = effective_mask(mm);
  for (int l = 0; l < kDepth; ++l) CHECK(em.weights[l] == mm.weights[l]);
  CHECK(em.effective_nnz == 4);
  CHECK(em.disconnected_weight_count == 0);
}

TEST_CASE("a row feeding a dead column is removed") {
  ModelMask mm = dense_mask(8);
  for (int r = 0; r < 8; ++r) mm.weights[2].set(r, 5, false);
  const EffectiveMask em = effective_mask(mm);
  for (int c = 0; c < 8; ++c) CHECK_FALSE(em.weights[1](5, c));
  CHECK(em.disconnected_weight_count == 8);
  CHECK(em.dead_neurons[1] == std::vector<int>{5});
  CHECK(em.dead_neurons[0].empty());
}

TEST_CASE("effective mask matches explicit path enumeration") {
  Rng rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const int w = 1 + static_cast<int>(rng.below(5));
    const ModelMask mm = random_mask(w, rng);
    const auto want = dfs_paths(mm);
    const EffectiveMask em = effective_mask(mm);
    std::int64_t count = 0;
    for (int l = 0; l < kDepth; ++l) {
      CHECK(em.weights[l] == want[l]);
      count += want[l].popcount();
    }
    CHECK(em.effective_nnz == count);
    CHECK(em.disconnected_weight_count == weight_nnz(mm) - count);
  }
}

TEST_CASE("flops") {
  std::vector<FlopsInterval> dense = {{609, 2500000}};
  CHECK(flops(dense) == 1.5225e9);
  CHECK(flops(dense, FlopsMode::forward_backward) == 3 * 1.5225e9);
  CHECK(flops(std::vector<FlopsInterval>{}) == 0.0);
  std::vector<FlopsInterval> sparse = {{55 + 10, 2500000}};
  CHECK(flops(sparse) == 65.0 * 2.5e6);
  std::vector<FlopsInterval> split = {{609, 1000}, {100, 4000}};
  CHECK(flops(split) == 609000.0 + 400000.0);
}

TEST_CASE("pareto frontier") {
  std::vector<ParetoPoint> one = {{30, 0.9, 0}};
  CHECK(pareto_frontier(one) == one);
  std::vector<ParetoPoint> two = {{30, 0.96, 0}, {44, 0.95, 1}};
  const auto f = pareto_frontier(two);
  REQUIRE(f.size() == 1);
  CHECK(f[0].nnz == 30);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ParetoPoint> pts;
    for (std::size_t i = 0; i < 100; ++i) {
      pts.push_back({static_cast<std::int64_t>(rng.below(40)), static_cast<double>(rng.below(30)) / 30.0, i});
    }
    std::vector<ParetoPoint> want;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool keep = true;
      for (std::size_t j = 0; j < pts.size() && keep; ++j) {
        if (dominated(pts[i], pts[j])) keep = false;
        if (j < i && pts[j].nnz == pts[i].nnz && pts[j].accuracy == pts[i].accuracy) keep = false;
      }
      if (keep) want.push_back(pts[i]);
    }
    std::sort(want.begin(), want.end(), [](auto& a, auto& b) { return a.nnz < b.nnz; });
    const auto got = pareto_frontier(pts);
    CHECK(got == want);
    for (std::size_t i = 1; i < got.size(); ++i) {
      CHECK(got[i].nnz > got[i - 1].nnz);
      CHECK(got[i].accuracy > got[i - 1].accuracy);
    }
  }
}

TEST_CASE("exact disconnection probability") {
  CHECK(path_prob_exact_rational(params(4, {1, 1, 1, 1}), 1) == Rational(3, 4));
  CHECK(path_prob_exact_rational(params(10, {1, 1, 1, 1}), 1) == Rational(9, 10));
  CHECK(path_prob_exact(params(4, {8, 16, 3, 3}), 1) == 0.0);
  for (int w = 2; w <= 4; ++w) {
    for (int n1 = 1; n1 <= 3; ++n1) {
      for (int n2 = 1; n2 <= 3; ++n2) {
        if (w == 4 && n1 + n2 > 5) continue;
        CAPTURE(w);
        CAPTURE(n1);
        CAPTURE(n2);
        const double e = path_prob_exact(params(w, {1, n1, n2, 1}), 1);
        CHECK(e == doctest::Approx(enumerate_pair(w, n1, n2)).epsilon(1e-12));
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
      }
    }
  }
  // Deeper nets: the second middle pair uses n[2], n[3].
  CHECK(path_prob_exact(params(4, {3, 2, 1, 1, 2}), 2) ==
        doctest::Approx(enumerate_pair(4, 1, 1)));
}

TEST_CASE("pair index and parameter validation") {
  CHECK_THROWS(path_prob_exact(params(4, {1, 1, 1, 1}), 0));
  CHECK_THROWS(path_prob_exact(params(4, {1, 1, 1, 1}), 2));
  CHECK_THROWS(params(4, {1, 1, 1}).validate());
  CHECK_THROWS(params(4, {1, 17, 1, 1}).validate());
  CHECK(params(16, {4, 4, 4, 4}).in_theorem_regime());
  CHECK_FALSE(params(6, {4, 4, 4, 4}).in_theorem_regime());
  CHECK(path_prob_bound_diagnostic(params(8, {1, 1, 1, 1}), 1) == 1.0);
}

TEST_CASE("monte carlo") {
  const auto full = path_prob_monte_carlo(params(4, {8, 16, 16, 4}), 1, 1000, 1);
  CHECK(full.pair_estimate == 0.0);
  CHECK(full.model_estimate == 0.0);

  const auto p = params(4, {1, 1, 1, 1});
  const auto mc = path_prob_monte_carlo(p, 1, 100000, 7);
  CHECK(std::abs(mc.pair_estimate - 0.75) <= 3 * mc.pair_std_error);
  CHECK(mc.trials == 100000);

  const auto serial = path_prob_monte_carlo_serial(p, 1, 5000, 3);
  const auto parallel = path_prob_monte_carlo(p, 1, 5000, 3);
  CHECK(serial.pair_hits == parallel.pair_hits);
  CHECK(serial.model_hits == parallel.model_hits);

  double prev = -1.0;
  for (int w : {8, 16, 32, 64}) {
    const auto e = path_prob_monte_carlo(params(w, {4, 4, 4, 4}), 1, 20000, 11);
    CHECK(e.pair_estimate > prev);
    prev = e.pair_estimate;
  }
}
