#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "sparsest/analysis.hpp"
#include "sparsest/bytes.hpp"
#include "sparsest/checkpoint.hpp"
#include "sparsest/mask.hpp"
#include "sparsest/path_prob.hpp"
#include "sparsest/pruners.hpp"
#include "sparsest/rng.hpp"
#include "sparsest/viz.hpp"

using namespace sparsest;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const std::filesystem::path kData = SPARSEST_TEST_DATA;

Outcome mask_counts() {
  const BigInt a = count_model_masks({3, 3, 3});
  const BigInt b = count_model_masks({7, 3, 3});
  const bool layers = count_eligible(2, 3) == 8 && count_eligible(3, 3) == 57 &&
                      count_eligible(3, 1) == 1 && count_eligible(7, 3) == 137257 &&
                      count_eligible(2, 7) == 34;
  std::ostringstream os;
  os << "(3,3,3)=" << a << " (7,3,3)=" << b;
  return {layers && a == 25992 && b == 266004066, os.str()};
}

std::vector<std::uint64_t> orbit_key(const LayerMask& m) {
  std::vector<std::uint64_t> rows;
  for (int r = 0; r < m.rows(); ++r) rows.push_back(m.row_value(r));
  std::sort(rows.begin(), rows.end());
  return rows;
}

Outcome canonical_enumeration() {
  int shapes = 0;
  for (int d_in = 1; d_in <= 12; ++d_in) {
    for (int d_out = 1; d_in * d_out <= 12; ++d_out) {
      ++shapes;
      const auto masks = eligible_masks(d_in, d_out);
      if (masks.size() != count_eligible(d_in, d_out)) {
        return {false, "length mismatch at " + std::to_string(d_in) + "x" + std::to_string(d_out)};
      }
      std::set<std::vector<std::uint64_t>> keys;
      for (const auto& m : masks) {
        if (!keys.insert(orbit_key(m)).second) return {false, "duplicate orbit"};
      }
      // Brute force: every zero-row/zero-column-free matrix lies in some orbit,
      // and every orbit is hit.
      std::set<std::vector<std::uint64_t>> hit;
      const int bits = d_in * d_out;
      for (std::uint64_t v = 0; v < (std::uint64_t{1} << bits); ++v) {
        LayerMask m(d_out, d_in);
        for (int i = 0; i < bits; ++i) m.set(i / d_in, i % d_in, (v >> i) & 1);
        bool ok = true;
        for (int r = 0; r < d_out && ok; ++r) ok = m.row_any(r);
        for (int c = 0; c < d_in && ok; ++c) ok = m.col_any(c);
        if (!ok) continue;
        const auto key = orbit_key(m);
        if (!keys.count(key)) return {false, "uncovered matrix"};
        hit.insert(key);
      }
      if (hit.size() != keys.size()) return {false, "orbit without members"};
    }
  }
  return {true, std::to_string(shapes) + " shapes"};
}

// Logit by straight matrix products; `kink` receives the smallest |hidden
// pre-activation| seen.
double oracle_logit(const MaskedMlp& m, Point2 x, double* kink = nullptr) {
  std::vector<double> h = {x.x, x.y};
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    std::vector<double> out(L.rows);
    for (int r = 0; r < L.rows; ++r) {
      double s = L.b[r];
      for (int c = 0; c < L.cols; ++c) s += L.w[r * L.cols + c] * h[c];
      if (kink && l + 1 < kDepth) *kink = std::min(*kink, std::abs(s));
      out[r] = l + 1 < kDepth ? std::max(0.0, s) : s;
    }
    h = out;
  }
  return h[0];
}

double oracle_loss(const MaskedMlp& m, const Dataset& d, const std::vector<std::size_t>& idx) {
  double total = 0.0;
  for (auto i : idx) {
    const double z = oracle_logit(m, d.xs[i]);
    total += std::max(z, 0.0) - z * d.ys[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(idx.size());
}

Outcome gradients() {
  SpiralSpec s;
  s.points_total = 1000;
  const Dataset d = generate(s);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    MaskedMlp m = init(MlpArch{4}, seed);
    Rng rng(derive_seed(seed, 1));
    for (auto& L : m.params) {
      for (auto& v : L.w) v = rng.uniform(-1.0, 1.0);
      for (auto& v : L.b) v = rng.uniform(-0.5, 0.5);
    }
    // Central differences are only valid away from ReLU kinks, so samples
    // with a hidden pre-activation near zero are redrawn.
    std::vector<std::size_t> batch;
    while (batch.size() < 32) {
      const std::size_t i = rng.below(d.size());
      double kink = 1.0;
      oracle_logit(m, d.xs[i], &kink);
      if (kink > 1e-3) batch.push_back(i);
    }
    const auto g = flatten(loss_and_grad(m, d, batch).grads);
    const auto w = flatten(m.params);
    for (std::size_t i = 0; i < w.size(); ++i) {
      MaskedMlp p = m, q = m;
      auto wp = w, wq = w;
      wp[i] += 1e-5;
      wq[i] -= 1e-5;
      unflatten(wp, p.params);
      unflatten(wq, q.params);
      const double fd = (oracle_loss(p, d, batch) - oracle_loss(q, d, batch)) / 2e-5;
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
  }
  std::ostringstream os;
  os << "max relative error " << worst;
  return {worst < 1e-5, os.str()};
}

Outcome accuracy_regime() {
  const Dataset data = generate(SpiralSpec{});
  constexpr int kSeeds = 20;
  // Best accuracy per config; stops early once the target is met.
  const auto best_of = [&](const NeuronConfig& cfg, double stop_at, int& runs) {
    double best = 0.0;
    runs = 0;
    for (double lr : {0.05, 0.1}) {
      for (auto sched : {Scheduler::constant, Scheduler::cosine, Scheduler::step_15_30}) {
        for (int seed = 0; seed < kSeeds; ++seed) {
          MaskedMlp m = init(MlpArch{16}, static_cast<std::uint64_t>(seed), structured_mask(cfg, 16),
                             FanInMode::dense);
          TrainConfig c;
          c.lr = lr;
          c.scheduler = sched;
          c.seed = static_cast<std::uint64_t>(seed);
          best = std::max(best, accuracy(train(m, data, c).model, data));
          ++runs;
          if (best >= stop_at) return best;
        }
      }
    }
    return best;
  };
  int r333 = 0, r733 = 0, r111 = 0;
  const double a333 = best_of({3, 3, 3}, 0.95, r333);
  const double a733 = best_of({7, 3, 3}, 0.995, r733);
  const double a111 = best_of({1, 1, 1}, 0.95, r111);
  std::ostringstream os;
  os << "(3,3,3) best " << a333 << " in " << r333 << " runs; (7,3,3) best " << a733 << " in "
     << r733 << " runs; (1,1,1) best " << a111 << " over " << r111 << " runs";
  return {a333 >= 0.95 && a733 >= 0.995 && a111 < 0.95, os.str()};
}

Outcome disconnected_paths() {
  Rng rng(17);
  for (int t = 0; t < 1000; ++t) {
    const int w = 1 + static_cast<int>(rng.below(5));
    ModelMask mm = empty_mask(w);
    const double density = rng.uniform(0.1, 0.9);
    for (auto& L : mm.weights) {
      for (int r = 0; r < L.rows(); ++r) {
        for (int c = 0; c < L.cols(); ++c) L.set(r, c, rng.uniform() < density);
      }
    }
    std::array<LayerMask, kDepth> want;
    for (int l = 0; l < kDepth; ++l) want[l] = LayerMask(mm.weights[l].rows(), mm.weights[l].cols());
    std::vector<std::pair<int, int>> stack;
    std::function<void(int, int)> walk = [&](int layer, int node) {
      if (layer == kDepth) {
        for (int l = 0; l < kDepth; ++l) want[l].set(stack[l].first, stack[l].second, true);
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
    const EffectiveMask em = effective_mask(mm);
    for (int l = 0; l < kDepth; ++l) {
      if (!(em.weights[l] == want[l])) return {false, "mismatch on mask " + std::to_string(t)};
    }
  }
  return {true, "1000 masks"};
}

Outcome path_probability() {
  PathProbParams p;
  p.width = 4;
  p.depth = 4;
  p.nnz = {1, 1, 1, 1};
  const Rational exact = path_prob_exact_rational(p, 1);
  // Enumeration: a weight in each of two 4x4 layers; disconnected when the
  // first one's row differs from the second one's column.
  int hits = 0;
  for (int a = 0; a < 16; ++a) {
    for (int b = 0; b < 16; ++b) hits += (a / 4) != (b % 4);
  }
  bool ok = exact == Rational(3, 4) && Rational(hits, 256) == exact;
  std::ostringstream os;
  os << "exact " << exact << ";";

  Rng rng(2026);
  int agree = 0;
  for (int t = 0; t < 10; ++t) {
    PathProbParams q;
    q.width = 2 + static_cast<int>(rng.below(15));
    q.depth = 4;
    // Layer shapes: w x 2, w x w, w x w, 1 x w.
    const std::int64_t w = q.width;
    for (std::int64_t cells : {2 * w, w * w, w * w, w}) {
      q.nnz.push_back(1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(std::min<std::int64_t>(6, cells)))));
    }
    const double e = path_prob_exact(q, 1);
    const auto mc = path_prob_monte_carlo(q, 1, 100000, 100 + static_cast<std::uint64_t>(t));
    agree += std::abs(mc.pair_estimate - e) <= 3 * mc.pair_std_error + 1e-15;
  }
  ok = ok && agree == 10;
  os << " MC agreement " << agree << "/10;";

  double prev = -1.0;
  bool monotone = true;
  for (int w : {8, 16, 32, 64}) {
    PathProbParams q;
    q.width = w;
    q.depth = 4;
    q.nnz = {4, 4, 4, 4};
    const double e = path_prob_monte_carlo(q, 1, 100000, 5).pair_estimate;
    monotone = monotone && e > prev;
    os << " w" << w << "=" << e;
    prev = e;
  }
  return {ok && monotone, os.str()};
}

Outcome flops_calibration() {
  const Dataset data = generate(SpiralSpec{});
  TrainConfig c;
  c.epochs = 50;
  const TrainResult tr = train(init(MlpArch{16}, 0), data, c);
  const double f = flops(tr.history.trace);
  std::ostringstream os;
  os << "dense flops " << f;
  return {f == 1.5225e9 && std::abs(f - 1.5e9) / 1.5e9 <= 0.05, os.str()};
}

Outcome pruner_budgets() {
  SpiralSpec s;
  s.points_total = 256;
  const Dataset d = generate(s);
  const MaskedMlp m = init(MlpArch{16}, 1);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 64;
  c.scheduler = Scheduler::cosine;
  PruneOptions opt;
  opt.synflow_rounds = 10;
  opt.gmp_events = 3;
  opt.rigl_delta_t = 2;
  std::vector<PruneMethod> methods = benchmarked_methods();
  methods.push_back(PruneMethod::random);
  int runs = 0;
  for (auto method : methods) {
    for (std::int64_t budget : benchmark_budgets()) {
      const PruneResult r = run_pruner(method, m, d, c, {budget, LayerPolicy::global}, opt);
      ++runs;
      if (weight_nnz(r.mask) != budget || r.record.weight_nnz != budget) {
        return {false, to_string(method) + " missed budget " + std::to_string(budget)};
      }
    }
  }
  bool ok = gmp_sparsity(0.9, 0) == 0.0 && gmp_sparsity(0.9, 199) == 0.9 &&
            rigl_drop_fraction(0.3, 0, 1000) == 0.3 && rigl_drop_fraction(0.3, 1000, 1000) == 0.0;

  // Smoke training per method with default options; GMP and RigL mask events
  // are observed along the way.
  SpiralSpec s2;
  s2.points_total = 2000;
  const Dataset d2 = generate(s2);
  TrainConfig c2;
  c2.epochs = 3;
  std::vector<std::int64_t> gmp_nnz, rigl_nnz;
  PruneOptions watch;
  watch.observer = [&](const std::string& ev, std::int64_t, const ModelMask& mm) {
    if (ev == "gmp") gmp_nnz.push_back(weight_nnz(mm));
    if (ev == "rigl" || ev == "rigl_init") rigl_nnz.push_back(weight_nnz(mm));
  };
  watch.rigl_delta_t = 10;
  for (auto method : methods) {
    const PruneResult r = run_pruner(method, m, d2, c2, {44, LayerPolicy::global}, watch);
    ok = ok && weight_nnz(r.mask) == 44 && r.model.is_projected();
  }
  ok = ok && gmp_nnz.size() == 199 && gmp_nnz.back() == 44 && rigl_nnz.size() > 2 &&
       std::all_of(rigl_nnz.begin(), rigl_nnz.end(), [](auto v) { return v == 44; });
  std::ostringstream os;
  os << runs << " budget runs; gmp events " << gmp_nnz.size() << "; rigl events " << rigl_nnz.size();
  return {ok, os.str()};
}

Outcome overparameterization() {
  SpiralSpec s;
  s.points_total = 2000;
  const Dataset d = generate(s);
  TrainConfig c;
  c.epochs = 2;
  PruneOptions opt;
  opt.rigl_delta_t = 10;
  std::ostringstream os;
  bool ok = true;
  for (auto method : {PruneMethod::random, PruneMethod::rigl}) {
    double prev = -1.0;
    os << to_string(method) << ":";
    for (int w : {16, 64, 256}) {
      double total = 0.0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelMask mm;
        if (method == PruneMethod::random) {
          mm = random_prune(MlpArch{w}, 44, seed);
        } else {
          mm = run_pruner(method, init(MlpArch{w}, seed), d, c, {44, LayerPolicy::global}, opt).mask;
        }
        total += static_cast<double>(effective_mask(mm).disconnected_weight_count);
      }
      const double mean = total / 20.0;
      ok = ok && mean >= prev;
      os << " w" << w << "=" << mean;
      prev = mean;
    }
    os << ";";
  }
  return {ok, os.str()};
}

Outcome visualization() {
  const Checkpoint ck = load_checkpoint(kData / "golden_model.ckpt");
  VizSpec spec;
  spec.grid = 24;
  RenderStats st;
  const std::string a = render(ck.model, spec, &st);
  const std::string b = render(ck.model, spec);
  const std::string golden = read_file_text(kData / "golden_model.svg");
  std::size_t edges = 0;
  for (auto p = a.find("class=\"edge\""); p != std::string::npos; p = a.find("class=\"edge\"", p + 1)) ++edges;
  const auto live = effective_mask(ck.model.mask).effective_nnz;
  VizSpec all = spec;
  all.include_dead = true;
  RenderStats st_all;
  render(ck.model, all, &st_all);
  std::ostringstream os;
  os << "edges " << edges << " effective nnz " << live << "; with dead " << st_all.edges
     << " weight nnz " << weight_nnz(ck.model.mask);
  const bool ok = live > 0 && a == b && a == golden && static_cast<std::int64_t>(edges) == live &&
                  st.edges == live && st_all.edges == weight_nnz(ck.model.mask);
  return {ok, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"mask-count reproduction", mask_counts},
      {"canonical enumeration oracle", canonical_enumeration},
      {"gradient correctness", gradients},
      {"accuracy regime", accuracy_regime},
      {"disconnected-path oracle", disconnected_paths},
      {"path-probability agreement", path_probability},
      {"flops calibration", flops_calibration},
      {"pruner budgets and schedules", pruner_budgets},
      {"overparameterization trend", overparameterization},
      {"visualization determinism", visualization},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu %s: %s (%s) [%.1fs]\n", i + 1, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
