#include "sparsest/analysis.hpp"

#include <algorithm>

namespace sparsest {

EffectiveMask effective_mask(const ModelMask& mm) {
  // Neuron layers 0..4: inputs, three hidden layers, output.
  std::array<std::vector<std::uint8_t>, kDepth + 1> fwd, bwd;
  fwd[0].assign(static_cast<std::size_t>(mm.weights[0].cols()), 1);
  for (int l = 0; l < kDepth; ++l) {
    const LayerMask& w = mm.weights[l];
    fwd[l + 1].assign(static_cast<std::size_t>(w.rows()), 0);
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) {
        if (w(r, c) && fwd[l][static_cast<std::size_t>(c)]) {
          fwd[l + 1][static_cast<std::size_t>(r)] = 1;
          break;
        }
      }
    }
  }
  bwd[kDepth].assign(static_cast<std::size_t>(mm.weights[kDepth - 1].rows()), 1);
  for (int l = kDepth - 1; l >= 0; --l) {
    const LayerMask& w = mm.weights[l];
    bwd[l].assign(static_cast<std::size_t>(w.cols()), 0);
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) {
        if (w(r, c) && bwd[l + 1][static_cast<std::size_t>(r)]) {
          bwd[l][static_cast<std::size_t>(c)] = 1;
          break;
        }
      }
    }
  }

  EffectiveMask out;
  for (int l = 0; l < kDepth; ++l) {
    const LayerMask& w = mm.weights[l];
    out.weights[l] = LayerMask(w.rows(), w.cols());
    for (int r = 0; r < w.rows(); ++r) {
      if (!bwd[l + 1][static_cast<std::size_t>(r)]) continue;
      for (int c = 0; c < w.cols(); ++c) {
        if (w(r, c) && fwd[l][static_cast<std::size_t>(c)]) out.weights[l].set(r, c, true);
      }
    }
    out.effective_nnz += out.weights[l].popcount();
  }
  for (int l = 1; l < kDepth; ++l) {
    for (std::size_t i = 0; i < fwd[l].size(); ++i) {
      if (!(fwd[l][i] && bwd[l][i])) out.dead_neurons[l - 1].push_back(static_cast<int>(i));
    }
  }
  out.disconnected_weight_count = weight_nnz(mm) - out.effective_nnz;
  return out;
}

double flops(std::span<const FlopsInterval> trace, FlopsMode mode) {
  double total = 0.0;
  for (const auto& iv : trace) {
    total += static_cast<double>(iv.nonzero_params) * static_cast<double>(iv.samples);
  }
  return mode == FlopsMode::forward_backward ? 3.0 * total : total;
}

std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points) {
  // Sweep by nnz ascending, accuracy descending; keep strict accuracy records.
  std::vector<ParetoPoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.nnz != b.nnz) return a.nnz < b.nnz;
    return a.accuracy > b.accuracy;
  });
  std::vector<ParetoPoint> front;
  for (const auto& p : sorted) {
    if (front.empty() || p.accuracy > front.back().accuracy) {
      if (!front.empty() && front.back().nnz == p.nnz) continue;
      front.push_back(p);
    }
  }
  return front;
}

}  // namespace sparsest
