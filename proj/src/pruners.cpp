#include "sparsest/pruners.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sparsest/analysis.hpp"
#include "sparsest/rng.hpp"

namespace sparsest {
namespace {

constexpr std::uint64_t kTagEpoch = 0x65706f6368;
constexpr std::uint64_t kTagRandom = 0x72616e64;
constexpr std::uint64_t kTagRigl = 0x7269676c;

struct Candidate {
  double score;
  double tie;
  int layer;
  std::int64_t index;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tie != b.tie) return a.tie > b.tie;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.index < b.index;
}

std::array<std::int64_t, kDepth> allowed_counts(const MlpArch& arch, const ModelMask* allowed) {
  std::array<std::int64_t, kDepth> out{};
  for (int l = 0; l < kDepth; ++l) {
    out[l] = allowed ? allowed->weights[l].popcount()
                     : static_cast<std::int64_t>(arch.rows(l)) * arch.cols(l);
  }
  return out;
}

std::vector<Candidate> candidates(const Saliency& scores, const MlpArch& arch, int layer,
                                  const Saliency* tiebreak, const ModelMask* allowed) {
  std::vector<Candidate> out;
  const auto size = static_cast<std::int64_t>(arch.rows(layer)) * arch.cols(layer);
  if (static_cast<std::int64_t>(scores[layer].size()) != size) {
    throw std::invalid_argument("saliency shape does not match the architecture");
  }
  for (std::int64_t i = 0; i < size; ++i) {
    if (allowed && !allowed->weights[layer].bits()[static_cast<std::size_t>(i)]) continue;
    const double s = scores[layer][static_cast<std::size_t>(i)];
    if (std::isnan(s)) throw NumericError("NaN saliency score");
    const double t = tiebreak ? (*tiebreak)[layer][static_cast<std::size_t>(i)] : 0.0;
    out.push_back({s, t, layer, i});
  }
  return out;
}

ModelMask mask_from_selection(const MlpArch& arch, const std::vector<Candidate>& chosen) {
  ModelMask mm = empty_mask(arch.width);
  for (const auto& c : chosen) {
    const int cols = arch.cols(c.layer);
    mm.weights[c.layer].set(static_cast<int>(c.index / cols), static_cast<int>(c.index % cols),
                            true);
  }
  return bias_mask_pruning(std::move(mm));
}

ModelMask select_top_k(const Saliency& scores, const MlpArch& arch, std::int64_t k,
                       LayerPolicy policy, const Saliency* tiebreak,
                       const ModelMask* allowed) {
  if (k < 0) throw BudgetError("k must be nonnegative");
  std::vector<Candidate> chosen;
  if (policy == LayerPolicy::global) {
    std::vector<Candidate> all;
    for (int l = 0; l < kDepth; ++l) {
      auto c = candidates(scores, arch, l, tiebreak, allowed);
      all.insert(all.end(), c.begin(), c.end());
    }
    if (k > static_cast<std::int64_t>(all.size())) {
      throw BudgetError("k = " + std::to_string(k) + " exceeds the " +
                        std::to_string(all.size()) + " selectable weights");
    }
    std::partial_sort(all.begin(), all.begin() + k, all.end(), ranks_before);
    chosen.assign(all.begin(), all.begin() + k);
  } else {
    const auto quotas = layer_quotas(arch, k, policy, allowed_counts(arch, allowed));
    for (int l = 0; l < kDepth; ++l) {
      auto c = candidates(scores, arch, l, tiebreak, allowed);
      const auto q = quotas[l];
      std::partial_sort(c.begin(), c.begin() + q, c.end(), ranks_before);
      chosen.insert(chosen.end(), c.begin(), c.begin() + q);
    }
  }
  return mask_from_selection(arch, chosen);
}

Saliency empty_saliency(const MlpArch& arch) {
  Saliency s;
  for (int l = 0; l < kDepth; ++l) {
    s[l].assign(static_cast<std::size_t>(arch.rows(l)) * arch.cols(l), 0.0);
  }
  return s;
}

Saliency magnitude_scores(const MaskedMlp& m) {
  Saliency s = empty_saliency(m.arch);
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = m.mask.weights[l].bits();
    for (std::size_t i = 0; i < s[l].size(); ++i) {
      s[l][i] = bits[i] ? std::abs(m.params[l].w[i]) : kMaskedScore;
    }
  }
  return s;
}

void zero_outside(Params& p, const ModelMask& mm) {
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = mm.weights[l].bits();
    for (std::size_t i = 0; i < p[l].w.size(); ++i) {
      if (!bits[i]) p[l].w[i] = 0.0;
    }
    for (std::size_t i = 0; i < p[l].b.size(); ++i) {
      if (!mm.bias[l][i]) p[l].b[i] = 0.0;
    }
  }
}

bool has_empty_layer(const ModelMask& mm) {
  return std::any_of(mm.weights.begin(), mm.weights.end(),
                     [](const LayerMask& w) { return w.popcount() == 0; });
}

/// Batches of the first epoch, in the order train() visits them.
class EpochZeroBatches {
 public:
  EpochZeroBatches(const Dataset& data, const TrainConfig& cfg) : batch_(cfg.batch_size) {
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng rng(derive_seed(cfg.seed, kTagEpoch, 0));
      rng.shuffle(std::span<std::size_t>(order_));
    }
    count_ = steps_per_epoch(data.size(), cfg.batch_size);
  }

  std::span<const std::size_t> operator[](std::int64_t b) const {
    b %= count_;
    const std::size_t lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(batch_);
    const std::size_t hi = std::min(order_.size(), lo + static_cast<std::size_t>(batch_));
    return {order_.data() + lo, hi - lo};
  }

 private:
  std::vector<std::size_t> order_;
  int batch_;
  std::int64_t count_ = 1;
};

struct Run {
  const MaskedMlp& init;
  const Dataset& data;
  const TrainConfig& cfg;
  const PruneOptions& opt;
  ModelMask base;
  std::int64_t dense_count = 0;
  std::vector<FlopsInterval> trace;
  bool collapse = false;

  void note(const std::string& event, std::int64_t step, const ModelMask& mm) const {
    if (opt.observer) opt.observer(event, step, mm);
  }

  void overhead(const ModelMask& mm, std::int64_t samples) {
    trace.push_back({nnz(mm, true), samples});
  }

  MaskedMlp start(const ModelMask& mm) const {
    MaskedMlp m = init;
    m.set_mask(mm);
    return m;
  }

  void append_trace(const std::vector<FlopsInterval>& t) {
    for (const auto& iv : t) {
      if (iv.samples > 0) trace.push_back(iv);
    }
  }
};

PruneResult finish(Run& run, PruneMethod method, MaskedMlp model, const TrainHistory* hist,
                   std::int64_t budget) {
  PruneResult res;
  res.mask = model.mask;
  RunRecord& r = res.record;
  r.method = to_string(method);
  r.width = model.arch.width;
  r.budget = budget;
  r.lr = run.cfg.lr;
  r.scheduler = to_string(run.cfg.scheduler);
  r.seed = run.init.seed;
  r.init_ref = "seed:" + std::to_string(run.init.seed);
  r.accuracy = accuracy(model, run.data);
  if (hist) {
    if (!hist->epochs.empty()) r.final_loss = hist->epochs.back().loss;
    r.diverged = hist->diverged;
  }
  r.weight_nnz = weight_nnz(res.mask);
  r.total_nnz = nnz(res.mask, true);
  r.effective_nnz = effective_mask(res.mask).effective_nnz;
  r.flops = flops(run.trace);
  r.layer_collapse = run.collapse || has_empty_layer(res.mask);
  r.status = r.diverged ? "diverged" : "ok";
  r.mask = format_mask_line(res.mask);
  if (method == PruneMethod::prospr) r.meta_gradient = "first_order_approx";
  res.trace = run.trace;
  res.model = std::move(model);
  return res;
}

PruneResult train_final(Run& run, PruneMethod method, const ModelMask& mm,
                        std::int64_t budget) {
  MaskedMlp m = run.start(mm);
  run.note("final", 0, m.mask);
  if (run.opt.mask_only) return finish(run, method, std::move(m), nullptr, budget);
  TrainResult tr = train(std::move(m), run.data, run.cfg);
  run.append_trace(tr.history.trace);
  return finish(run, method, std::move(tr.model), &tr.history, budget);
}

PruneResult run_gmp(Run& run, std::int64_t budget) {
  const int events = run.opt.gmp_events;
  const double sf = 1.0 - static_cast<double>(budget) / static_cast<double>(run.dense_count);
  int next = 1;
  const auto keep_at = [&](int t) {
    if (t >= events) return budget;
    const double keep = static_cast<double>(run.dense_count) * (1.0 - gmp_sparsity(sf, t, events));
    return std::clamp<std::int64_t>(std::llround(keep), budget, run.dense_count);
  };
  const auto prune = [&](MaskedMlp& m, int t, std::int64_t step) {
    // Pruned weights are zero but stay selectable; score by |w| on the clamp.
    Saliency s = empty_saliency(m.arch);
    for (int l = 0; l < kDepth; ++l) {
      const auto& bits = run.base.weights[l].bits();
      for (std::size_t i = 0; i < s[l].size(); ++i) {
        s[l][i] = bits[i] ? std::abs(m.params[l].w[i]) : kMaskedScore;
      }
    }
    m.set_mask(select_top_k(s, m.arch, keep_at(t), LayerPolicy::global, nullptr, &run.base));
    run.collapse = run.collapse || has_empty_layer(m.mask);
    run.note("gmp", step, m.mask);
  };
  StepHook hook = [&](MaskedMlp& m, StepContext& ctx) {
    bool changed = false;
    while (next <= events && gmp_event_step(next, ctx.total_steps, events) <= ctx.step) {
      prune(m, next, ctx.step);
      ++next;
      changed = true;
    }
    return changed;
  };
  TrainResult tr = train(run.start(run.base), run.data, run.cfg, hook);
  run.append_trace(tr.history.trace);
  MaskedMlp model = std::move(tr.model);
  if (next <= events) {
    prune(model, events, tr.history.steps);
    run.overhead(model.mask, 0);
  }
  return finish(run, PruneMethod::gmp, std::move(model), &tr.history, budget);
}

PruneResult run_lth(Run& run, std::int64_t budget) {
  const int rounds = run.opt.lth_rounds;
  ModelMask mm = run.base;
  TrainHistory last;
  for (int r = 1; r <= rounds; ++r) {
    TrainResult tr = train(run.start(mm), run.data, run.cfg);
    run.append_trace(tr.history.trace);
    const auto keep = exponential_keep(run.dense_count, budget, r, rounds);
    mm = select_top_k(magnitude_scores(tr.model), tr.model.arch, keep, LayerPolicy::global,
                      nullptr, &mm);
    run.collapse = run.collapse || has_empty_layer(mm);
    run.note("lth_rewind", r, mm);
  }
  return train_final(run, PruneMethod::lth, mm, budget);
}

PruneResult run_iterative(Run& run, std::int64_t budget, bool regrow) {
  const int rounds = run.opt.iter_rounds;
  const EpochZeroBatches batches(run.data, run.cfg);
  ModelMask mm = run.base;
  for (int r = 1; r <= rounds; ++r) {
    MaskedMlp m = run.start(mm);
    const auto batch = batches[r - 1];
    const LossGrad lg = loss_and_grad(m, run.data, batch);
    run.overhead(mm, static_cast<std::int64_t>(batch.size()));
    Saliency s = empty_saliency(m.arch);
    for (int l = 0; l < kDepth; ++l) {
      const auto& cur = mm.weights[l].bits();
      for (std::size_t i = 0; i < s[l].size(); ++i) {
        // FORCE scores the shadow (initial) value so pruned weights can return.
        const double w = regrow ? run.init.params[l].w[i] : m.params[l].w[i];
        s[l][i] = (regrow || cur[i]) ? std::abs(lg.grads[l].w[i] * w) : kMaskedScore;
      }
    }
    const auto keep = exponential_keep(run.dense_count, budget, r, rounds);
    mm = select_top_k(s, m.arch, keep, LayerPolicy::global, nullptr, regrow ? &run.base : &mm);
    run.collapse = run.collapse || has_empty_layer(mm);
    run.note(regrow ? "force" : "iter_snip", r, mm);
  }
  return train_final(run, regrow ? PruneMethod::force : PruneMethod::iter_snip, mm, budget);
}

PruneResult run_synflow(Run& run, std::int64_t budget) {
  const int rounds = run.opt.synflow_rounds;
  ModelMask mm = run.base;
  for (int r = 1; r <= rounds; ++r) {
    const MaskedMlp m = run.start(mm);
    const Saliency s = synflow_scores(m);
    run.overhead(mm, 1);
    const auto keep = exponential_keep(run.dense_count, budget, r, rounds);
    mm = select_top_k(s, m.arch, keep, LayerPolicy::global, nullptr, &mm);
    run.collapse = run.collapse || has_empty_layer(mm);
    run.note("synflow", r, mm);
  }
  return train_final(run, PruneMethod::synflow, mm, budget);
}

PruneResult run_rigl(Run& run, std::int64_t budget) {
  const MlpArch arch = run.init.arch;
  ModelMask start_mask =
      random_erk_mask(arch, budget, derive_seed(run.init.seed, kTagRigl), &run.base);
  const std::int64_t total = steps_per_epoch(run.data.size(), run.cfg.batch_size) * run.cfg.epochs;
  const auto t_stop = static_cast<std::int64_t>(
      std::floor(run.opt.rigl_stop_fraction * static_cast<double>(total)));
  run.note("rigl_init", 0, start_mask);

  StepHook hook = [&](MaskedMlp& m, StepContext& ctx) {
    if (ctx.step % run.opt.rigl_delta_t != 0 || ctx.step >= t_stop) return false;
    const double f = rigl_drop_fraction(run.opt.rigl_alpha, ctx.step, t_stop);
    const LossGrad lg = loss_and_grad(m, run.data, ctx.batch);
    run.overhead(dense_mask(arch.width), static_cast<std::int64_t>(ctx.batch.size()));
    ModelMask next = empty_mask(arch.width);
    for (int l = 0; l < kDepth; ++l) {
      const LayerMask& cur = m.mask.weights[l];
      const auto& allow = run.base.weights[l].bits();
      std::vector<std::int64_t> active;
      for (std::size_t i = 0; i < cur.bits().size(); ++i) {
        if (cur.bits()[i]) active.push_back(static_cast<std::int64_t>(i));
      }
      const auto n = static_cast<std::int64_t>(active.size());
      const auto drop = static_cast<std::int64_t>(std::floor(f * static_cast<double>(n)));
      const auto& w = m.params[l].w;
      std::stable_sort(active.begin(), active.end(), [&](std::int64_t a, std::int64_t b) {
        return std::abs(w[static_cast<std::size_t>(a)]) > std::abs(w[static_cast<std::size_t>(b)]);
      });
      std::vector<std::uint8_t> keep(cur.bits().size(), 0);
      for (std::int64_t i = 0; i < n - drop; ++i) keep[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] = 1;
      std::vector<std::int64_t> grow;
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i] && allow[i]) grow.push_back(static_cast<std::int64_t>(i));
      }
      const auto& g = lg.grads[l].w;
      std::stable_sort(grow.begin(), grow.end(), [&](std::int64_t a, std::int64_t b) {
        return std::abs(g[static_cast<std::size_t>(a)]) > std::abs(g[static_cast<std::size_t>(b)]);
      });
      for (std::int64_t i = 0; i < drop; ++i) {
        const auto pos = static_cast<std::size_t>(grow[static_cast<std::size_t>(i)]);
        keep[pos] = 1;
        // Regrown connections start from zero with fresh momentum.
        m.params[l].w[pos] = 0.0;
        ctx.momentum[l].w[pos] = 0.0;
      }
      const int cols = cur.cols();
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) next.weights[l].set(static_cast<int>(i) / cols, static_cast<int>(i) % cols, true);
      }
    }
    m.mask = bias_mask_pruning(std::move(next));
    run.note("rigl", ctx.step, m.mask);
    return true;
  };

  MaskedMlp m = run.start(start_mask);
  if (run.opt.mask_only) {
    return finish(run, PruneMethod::rigl, std::move(m), nullptr, budget);
  }
  TrainResult tr = train(std::move(m), run.data, run.cfg, hook);
  run.append_trace(tr.history.trace);
  return finish(run, PruneMethod::rigl, std::move(tr.model), &tr.history, budget);
}

PruneResult run_prospr(Run& run, std::int64_t budget) {
  const EpochZeroBatches batches(run.data, run.cfg);
  MaskedMlp m = run.start(run.base);
  Params momentum = zero_params(m.arch);
  const double lr = scheduled_lr(run.cfg, 0);
  for (int s = 1; s <= run.opt.prospr_steps; ++s) {
    const auto batch = batches[s];
    const LossGrad lg = loss_and_grad(m, run.data, batch);
    sgd_step(m, momentum, lg.grads, lr, run.cfg.momentum, run.cfg.weight_decay);
    run.overhead(m.mask, static_cast<std::int64_t>(batch.size()));
  }
  const auto batch = batches[0];
  const LossGrad lg = loss_and_grad(m, run.data, batch);
  run.overhead(m.mask, static_cast<std::int64_t>(batch.size()));
  Saliency s = empty_saliency(m.arch);
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = run.base.weights[l].bits();
    for (std::size_t i = 0; i < s[l].size(); ++i) {
      s[l][i] = bits[i] ? std::abs(lg.grads[l].w[i] * run.init.params[l].w[i]) : kMaskedScore;
    }
  }
  const ModelMask mm = select_top_k(s, m.arch, budget, LayerPolicy::global, nullptr, &run.base);
  return train_final(run, PruneMethod::prospr, mm, budget);
}

}  // namespace

std::string to_string(PruneMethod m) {
  switch (m) {
    case PruneMethod::dense: return "dense";
    case PruneMethod::gmp: return "gmp";
    case PruneMethod::lth: return "lth";
    case PruneMethod::snip: return "snip";
    case PruneMethod::iter_snip: return "iter_snip";
    case PruneMethod::force: return "force";
    case PruneMethod::synflow: return "synflow";
    case PruneMethod::grasp: return "grasp";
    case PruneMethod::rigl: return "rigl";
    case PruneMethod::prospr: return "prospr";
    case PruneMethod::random: return "random";
  }
  return "?";
}

PruneMethod parse_prune_method(const std::string& s) {
  static const PruneMethod all[] = {
      PruneMethod::dense, PruneMethod::gmp,     PruneMethod::lth,   PruneMethod::snip,
      PruneMethod::iter_snip, PruneMethod::force, PruneMethod::synflow, PruneMethod::grasp,
      PruneMethod::rigl,  PruneMethod::prospr,  PruneMethod::random};
  for (auto m : all) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown pruning method '" + s + "'");
}

const std::vector<PruneMethod>& benchmarked_methods() {
  static const std::vector<PruneMethod> v = {
      PruneMethod::gmp,   PruneMethod::lth,     PruneMethod::snip,
      PruneMethod::iter_snip, PruneMethod::force, PruneMethod::synflow,
      PruneMethod::grasp, PruneMethod::rigl,    PruneMethod::prospr};
  return v;
}

const std::vector<std::int64_t>& benchmark_budgets() {
  static const std::vector<std::int64_t> v = {15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26,
                                              30, 33, 37, 40, 44, 50, 53, 55, 57, 60, 65};
  return v;
}

std::array<std::int64_t, kDepth> layer_quotas(const MlpArch& arch, std::int64_t k,
                                              LayerPolicy policy,
                                              const std::array<std::int64_t, kDepth>& allowed) {
  if (policy == LayerPolicy::global) {
    throw std::invalid_argument("global ranking has no per-layer quotas");
  }
  const std::int64_t cap = std::accumulate(allowed.begin(), allowed.end(), std::int64_t{0});
  const auto nonempty = std::count_if(allowed.begin(), allowed.end(), [](auto a) { return a > 0; });
  if (k < nonempty || k > cap) {
    throw BudgetError("budget " + std::to_string(k) + " infeasible: need between " +
                      std::to_string(nonempty) + " and " + std::to_string(cap));
  }
  std::array<double, kDepth> raw{};
  for (int l = 0; l < kDepth; ++l) {
    const double fi = arch.cols(l), fo = arch.rows(l);
    raw[l] = policy == LayerPolicy::erk ? (fi + fo) / (fi * fo) : 1.0;
  }
  // Scale densities to hit k, saturating layers that would exceed density 1.
  std::array<bool, kDepth> full{};
  double eps = 0.0;
  for (bool changed = true; changed;) {
    changed = false;
    double rest = static_cast<double>(k), denom = 0.0;
    for (int l = 0; l < kDepth; ++l) {
      if (full[l]) {
        rest -= static_cast<double>(allowed[l]);
      } else {
        denom += raw[l] * static_cast<double>(allowed[l]);
      }
    }
    eps = denom > 0.0 ? rest / denom : 0.0;
    for (int l = 0; l < kDepth; ++l) {
      if (!full[l] && allowed[l] > 0 && eps * raw[l] >= 1.0) {
        full[l] = true;
        changed = true;
      }
    }
  }
  std::array<double, kDepth> target{};
  std::array<std::int64_t, kDepth> q{};
  for (int l = 0; l < kDepth; ++l) {
    target[l] = full[l] ? static_cast<double>(allowed[l]) : eps * raw[l] * static_cast<double>(allowed[l]);
    q[l] = std::min<std::int64_t>(allowed[l], static_cast<std::int64_t>(std::floor(target[l])));
    if (allowed[l] > 0) q[l] = std::max<std::int64_t>(q[l], 1);
  }
  // Largest remainder; ties to the lower layer.
  auto sum = [&] { return std::accumulate(q.begin(), q.end(), std::int64_t{0}); };
  while (sum() < k) {
    int best = -1;
    for (int l = 0; l < kDepth; ++l) {
      if (q[l] >= allowed[l]) continue;
      if (best < 0 || target[l] - q[l] > target[best] - q[best]) best = l;
    }
    ++q[best];
  }
  while (sum() > k) {
    int best = -1;
    for (int l = 0; l < kDepth; ++l) {
      if (q[l] <= 1) continue;
      if (best < 0 || target[l] - q[l] < target[best] - q[best]) best = l;
    }
    --q[best];
  }
  return q;
}

ModelMask keep_top_k(const Saliency& scores, const MlpArch& arch, std::int64_t k,
                     LayerPolicy policy, const Saliency* tiebreak) {
  return select_top_k(scores, arch, k, policy, tiebreak, nullptr);
}

double gmp_sparsity(double final_sparsity, int t, int events) {
  if (t <= 0) return 0.0;
  if (t >= events) return final_sparsity;
  const double u = 1.0 - static_cast<double>(t) / static_cast<double>(events);
  return final_sparsity * (1.0 - u * u * u);
}

std::int64_t gmp_event_step(int t, std::int64_t total_steps, int events) {
  return static_cast<std::int64_t>(t) * total_steps / (events + 1);
}

std::int64_t exponential_keep(std::int64_t dense, std::int64_t budget, int r, int rounds) {
  if (r <= 0) return dense;
  if (r >= rounds) return budget;
  const double ratio = static_cast<double>(budget) / static_cast<double>(dense);
  const double keep = static_cast<double>(dense) * std::pow(ratio, static_cast<double>(r) / rounds);
  return std::clamp<std::int64_t>(std::llround(keep), budget, dense);
}

double rigl_drop_fraction(double alpha, std::int64_t t, std::int64_t t_stop) {
  if (t >= t_stop) return 0.0;
  return alpha / 2.0 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_stop)));
}

Saliency snip_scores(const MaskedMlp& m, const Dataset& data, std::span<const std::size_t> batch) {
  const LossGrad lg = loss_and_grad(m, data, batch);
  Saliency s = empty_saliency(m.arch);
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = m.mask.weights[l].bits();
    for (std::size_t i = 0; i < s[l].size(); ++i) {
      s[l][i] = bits[i] ? std::abs(lg.grads[l].w[i] * m.params[l].w[i]) : kMaskedScore;
    }
  }
  return s;
}

Saliency synflow_scores(const MaskedMlp& m) {
  const MlpArch& a = m.arch;
  std::array<std::vector<double>, kDepth + 1> act;
  act[0].assign(kInputDim, 1.0);
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    act[l + 1].assign(static_cast<std::size_t>(L.rows), 0.0);
    for (int r = 0; r < L.rows; ++r) {
      double z = 0.0;
      for (int c = 0; c < L.cols; ++c) {
        if (m.mask.weights[l](r, c)) z += std::abs(L.at(r, c)) * act[l][static_cast<std::size_t>(c)];
      }
      act[l + 1][static_cast<std::size_t>(r)] = z;
    }
  }
  // Sensitivity of the summed output to each neuron.
  std::array<std::vector<double>, kDepth + 1> sens;
  sens[kDepth].assign(static_cast<std::size_t>(a.rows(kDepth - 1)), 1.0);
  for (int l = kDepth - 1; l >= 0; --l) {
    const Layer& L = m.params[l];
    sens[l].assign(static_cast<std::size_t>(L.cols), 0.0);
    for (int r = 0; r < L.rows; ++r) {
      for (int c = 0; c < L.cols; ++c) {
        if (m.mask.weights[l](r, c)) {
          sens[l][static_cast<std::size_t>(c)] += std::abs(L.at(r, c)) * sens[l + 1][static_cast<std::size_t>(r)];
        }
      }
    }
  }
  Saliency s = empty_saliency(a);
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    for (int r = 0; r < L.rows; ++r) {
      for (int c = 0; c < L.cols; ++c) {
        const auto i = static_cast<std::size_t>(r) * L.cols + c;
        s[l][i] = m.mask.weights[l](r, c)
                      ? sens[l + 1][static_cast<std::size_t>(r)] * std::abs(L.at(r, c)) *
                            act[l][static_cast<std::size_t>(c)]
                      : kMaskedScore;
      }
    }
  }
  return s;
}

std::vector<double> hessian_gradient_product(
    const std::function<std::vector<double>(std::span<const double>)>& grad,
    std::span<const double> w, double eps) {
  const std::vector<double> g = grad(w);
  if (g.size() != w.size()) throw std::invalid_argument("gradient size mismatch");
  double norm = 0.0;
  for (double v : g) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<double> hg(w.size(), 0.0);
  if (norm == 0.0) return hg;
  std::vector<double> wp(w.begin(), w.end()), wm(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    wp[i] += eps * g[i] / norm;
    wm[i] -= eps * g[i] / norm;
  }
  const std::vector<double> gp = grad(wp), gm = grad(wm);
  for (std::size_t i = 0; i < w.size(); ++i) hg[i] = (gp[i] - gm[i]) / (2.0 * eps) * norm;
  return hg;
}

double grasp_epsilon(std::span<const double> w) {
  double mx = 0.0;
  for (double v : w) mx = std::max(mx, std::abs(v));
  return 1e-4 * (1.0 + mx);
}

Saliency grasp_scores(const MaskedMlp& m, const Dataset& data, std::span<const std::size_t> batch) {
  const std::vector<double> w = flatten(m.params);
  const auto grad = [&](std::span<const double> x) {
    MaskedMlp t = m;
    unflatten(x, t.params);
    t.project();
    Params g = loss_and_grad(t, data, batch).grads;
    zero_outside(g, m.mask);
    return flatten(g);
  };
  const std::vector<double> hg = hessian_gradient_product(grad, w, grasp_epsilon(w));
  Params hp = zero_params(m.arch);
  unflatten(hg, hp);
  Saliency s = empty_saliency(m.arch);
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = m.mask.weights[l].bits();
    for (std::size_t i = 0; i < s[l].size(); ++i) {
      s[l][i] = bits[i] ? -m.params[l].w[i] * hp[l].w[i] : kMaskedScore;
    }
  }
  return s;
}

ModelMask random_prune(const MlpArch& arch, std::int64_t budget, std::uint64_t seed,
                       const ModelMask* base) {
  std::vector<std::pair<int, std::int64_t>> pos;
  for (int l = 0; l < kDepth; ++l) {
    const auto size = static_cast<std::int64_t>(arch.rows(l)) * arch.cols(l);
    for (std::int64_t i = 0; i < size; ++i) {
      if (!base || base->weights[l].bits()[static_cast<std::size_t>(i)]) pos.emplace_back(l, i);
    }
  }
  if (budget < 0 || budget > static_cast<std::int64_t>(pos.size())) {
    throw BudgetError("random budget " + std::to_string(budget) + " infeasible");
  }
  Rng rng(derive_seed(seed, kTagRandom));
  // Partial Fisher-Yates: the first `budget` slots are a uniform subset.
  for (std::int64_t i = 0; i < budget; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(pos.size() - static_cast<std::size_t>(i)));
    std::swap(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
  }
  ModelMask mm = empty_mask(arch.width);
  for (std::int64_t i = 0; i < budget; ++i) {
    const auto [l, idx] = pos[static_cast<std::size_t>(i)];
    const int cols = arch.cols(l);
    mm.weights[l].set(static_cast<int>(idx / cols), static_cast<int>(idx % cols), true);
  }
  return bias_mask_pruning(std::move(mm));
}

ModelMask random_erk_mask(const MlpArch& arch, std::int64_t budget, std::uint64_t seed,
                          const ModelMask* base) {
  const auto quotas = layer_quotas(arch, budget, LayerPolicy::erk, allowed_counts(arch, base));
  ModelMask mm = empty_mask(arch.width);
  for (int l = 0; l < kDepth; ++l) {
    std::vector<std::int64_t> pos;
    const auto size = static_cast<std::int64_t>(arch.rows(l)) * arch.cols(l);
    for (std::int64_t i = 0; i < size; ++i) {
      if (!base || base->weights[l].bits()[static_cast<std::size_t>(i)]) pos.push_back(i);
    }
    Rng rng(derive_seed(seed, kTagRandom, static_cast<std::uint64_t>(l)));
    for (std::int64_t i = 0; i < quotas[l]; ++i) {
      const auto j = i + static_cast<std::int64_t>(rng.below(pos.size() - static_cast<std::size_t>(i)));
      std::swap(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
      const int cols = arch.cols(l);
      const auto idx = pos[static_cast<std::size_t>(i)];
      mm.weights[l].set(static_cast<int>(idx / cols), static_cast<int>(idx % cols), true);
    }
  }
  return bias_mask_pruning(std::move(mm));
}

PruneResult run_pruner(PruneMethod method, const MaskedMlp& init, const Dataset& data,
                       const TrainConfig& cfg, const PruneBudget& budget,
                       const PruneOptions& options) {
  cfg.validate();
  Run run{init, data, cfg, options, {}, 0, {}, false};
  run.base = options.base ? bias_mask_pruning(*options.base) : dense_mask(init.arch.width);
  run.dense_count = weight_nnz(run.base);
  const std::int64_t k = budget.target_weight_nnz;
  if (method != PruneMethod::dense && (k < kDepth || k > run.dense_count)) {
    throw BudgetError("budget " + std::to_string(k) + " outside [" + std::to_string(kDepth) +
                      ", " + std::to_string(run.dense_count) + "]");
  }
  const auto started = std::chrono::steady_clock::now();
  PruneResult res;
  switch (method) {
    case PruneMethod::dense:
      res = train_final(run, method, run.base, run.dense_count);
      break;
    case PruneMethod::gmp:
      res = run_gmp(run, k);
      break;
    case PruneMethod::lth:
      res = run_lth(run, k);
      break;
    case PruneMethod::snip: {
      const EpochZeroBatches batches(data, cfg);
      const MaskedMlp m = run.start(run.base);
      run.overhead(m.mask, static_cast<std::int64_t>(batches[0].size()));
      const ModelMask mm = select_top_k(snip_scores(m, data, batches[0]), m.arch, k,
                                        budget.policy, nullptr, &run.base);
      res = train_final(run, method, mm, k);
      break;
    }
    case PruneMethod::iter_snip:
      res = run_iterative(run, k, false);
      break;
    case PruneMethod::force:
      res = run_iterative(run, k, true);
      break;
    case PruneMethod::synflow:
      res = run_synflow(run, k);
      break;
    case PruneMethod::grasp: {
      const EpochZeroBatches batches(data, cfg);
      const MaskedMlp m = run.start(run.base);
      run.overhead(m.mask, 3 * static_cast<std::int64_t>(batches[0].size()));
      Saliency s = grasp_scores(m, data, batches[0]);
      // Prune the largest scores: rank by the negated score.
      Saliency tie = empty_saliency(m.arch);
      for (int l = 0; l < kDepth; ++l) {
        for (std::size_t i = 0; i < s[l].size(); ++i) {
          if (s[l][i] != kMaskedScore) s[l][i] = -s[l][i];
          tie[l][i] = std::abs(m.params[l].w[i]);
        }
      }
      const ModelMask mm = select_top_k(s, m.arch, k, budget.policy, &tie, &run.base);
      res = train_final(run, method, mm, k);
      break;
    }
    case PruneMethod::rigl:
      res = run_rigl(run, k);
      break;
    case PruneMethod::prospr:
      res = run_prospr(run, k);
      break;
    case PruneMethod::random: {
      const ModelMask mm = random_prune(init.arch, k, init.seed, &run.base);
      res = train_final(run, method, mm, k);
      break;
    }
  }
  res.record.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

}  // namespace sparsest
