#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsest/mask.hpp"
#include "sparsest/mlp.hpp"
#include "sparsest/record.hpp"

namespace sparsest {

enum class PruneMethod {
  dense,
  gmp,
  lth,
  snip,
  iter_snip,
  force,
  synflow,
  grasp,
  rigl,
  prospr,
  random
};

std::string to_string(PruneMethod m);
PruneMethod parse_prune_method(const std::string& s);
const std::vector<PruneMethod>& benchmarked_methods();

/// Weight budgets of the pruning benchmark.
const std::vector<std::int64_t>& benchmark_budgets();

enum class LayerPolicy { global, erk, uniform };

struct PruneBudget {
  std::int64_t target_weight_nnz = 44;
  LayerPolicy policy = LayerPolicy::global;
};

/// Per-weight scores; -inf marks entries that must not be selected ahead of
/// any finite score.
using Saliency = std::array<std::vector<double>, kDepth>;

inline constexpr double kMaskedScore = -std::numeric_limits<double>::infinity();

class BudgetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-layer counts summing to k. `allowed` holds each layer's selectable
/// positions; erk and uniform give every layer at least one weight.
std::array<std::int64_t, kDepth> layer_quotas(
    const MlpArch& arch, std::int64_t k, LayerPolicy policy,
    const std::array<std::int64_t, kDepth>& allowed);

/// Highest-scoring k weights. Ties go to the larger `tiebreak` value when one
/// is given, then to (layer, row, col) ascending. Bias masks follow the
/// pruning rule.
ModelMask keep_top_k(const Saliency& scores, const MlpArch& arch,
                     std::int64_t k, LayerPolicy policy,
                     const Saliency* tiebreak = nullptr);

// Schedules.
/// Cubic sparsity after pruning event t of `events`.
double gmp_sparsity(double final_sparsity, int t, int events = 199);
/// Optimizer step after which GMP event t (1-based) fires.
std::int64_t gmp_event_step(int t, std::int64_t total_steps, int events = 199);
/// Weights kept after round r of `rounds` in an exponential schedule from
/// `dense` to `budget` (exact at both ends).
std::int64_t exponential_keep(std::int64_t dense, std::int64_t budget, int r,
                              int rounds);
/// RigL drop fraction at step t.
double rigl_drop_fraction(double alpha, std::int64_t t, std::int64_t t_stop);

// Saliency criteria, exposed for testing.
Saliency snip_scores(const MaskedMlp& m, const Dataset& data,
                     std::span<const std::size_t> batch);
/// Synaptic-flow scores on |params| with zero biases and an all-ones input.
Saliency synflow_scores(const MaskedMlp& m);
/// H*g by central differences of `grad` along the normalized gradient.
std::vector<double> hessian_gradient_product(
    const std::function<std::vector<double>(std::span<const double>)>& grad,
    std::span<const double> w, double eps);
double grasp_epsilon(std::span<const double> w);
Saliency grasp_scores(const MaskedMlp& m, const Dataset& data,
                      std::span<const std::size_t> batch);

ModelMask random_prune(const MlpArch& arch, std::int64_t budget,
                       std::uint64_t seed, const ModelMask* base = nullptr);
/// Random mask with erk per-layer quotas.
ModelMask random_erk_mask(const MlpArch& arch, std::int64_t budget,
                          std::uint64_t seed, const ModelMask* base = nullptr);

struct PruneOptions {
  /// Positions outside this mask are never selected (structured clamp).
  std::optional<ModelMask> base;
  int gmp_events = 199;
  int lth_rounds = 4;
  int iter_rounds = 10;
  int synflow_rounds = 100;
  int prospr_steps = 3;
  std::int64_t rigl_delta_t = 200;
  double rigl_alpha = 0.3;
  double rigl_stop_fraction = 0.75;
  /// Stop after mask selection; skip the final training (mask-level studies).
  bool mask_only = false;
  /// Observes every mask change (used by schedule/conservation checks).
  std::function<void(const std::string& event, std::int64_t step,
                     const ModelMask&)>
      observer;
};

struct PruneResult {
  RunRecord record;
  MaskedMlp model;
  ModelMask mask;
  std::vector<FlopsInterval> trace;
};

/// Runs one pruning method from `init` under the shared training protocol.
PruneResult run_pruner(PruneMethod method, const MaskedMlp& init,
                       const Dataset& data, const TrainConfig& cfg,
                       const PruneBudget& budget,
                       const PruneOptions& options = {});

}  // namespace sparsest
