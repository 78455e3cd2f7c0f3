#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparsest/mask.hpp"
#include "sparsest/mlp.hpp"

namespace sparsest {

/// Mask with every weight that lies on no input-to-output path removed.
struct EffectiveMask {
  std::array<LayerMask, kDepth> weights;
  std::int64_t effective_nnz = 0;
  // Hidden layers 1..3; neurons on no surviving path.
  std::array<std::vector<int>, kDepth - 1> dead_neurons;
  std::int64_t disconnected_weight_count = 0;
};

EffectiveMask effective_mask(const ModelMask& mm);

enum class FlopsMode { forward, forward_backward };

/// Sum over intervals of nonzero_params * samples; forward_backward reports
/// the same count times three.
double flops(std::span<const FlopsInterval> trace,
             FlopsMode mode = FlopsMode::forward);

struct ParetoPoint {
  std::int64_t nnz = 0;
  double accuracy = 0.0;
  std::size_t source = 0;  // index into the input
  friend bool operator==(const ParetoPoint&, const ParetoPoint&) = default;
};

/// Non-dominated points sorted by nnz; for exact duplicates the first
/// occurrence is kept.
std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points);

}  // namespace sparsest
