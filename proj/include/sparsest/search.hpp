#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sparsest/checkpoint.hpp"
#include "sparsest/config.hpp"
#include "sparsest/mask.hpp"
#include "sparsest/mlp.hpp"
#include "sparsest/record.hpp"

namespace sparsest {

struct SubsetFilter {
  std::optional<std::int64_t> layer2_first_k;
  std::optional<std::int64_t> max_model_nnz;  // weights + biases
  std::optional<double> single_lr;
};

struct SearchConfig {
  int width = 16;
  double rho = 0.95;
  std::vector<double> lrs = {0.05, 0.1};
  std::vector<Scheduler> schedulers = {Scheduler::constant, Scheduler::cosine,
                                       Scheduler::step_15_30};
  int seeds_per_mask = 1;
  SubsetFilter subset_filter;
  std::optional<Checkpoint> fixed_init;
  std::string fixed_init_ref;  // recorded as init_ref when fixed_init is set

  TrainConfig train;  // epochs, batch size, momentum, weight decay
  std::uint64_t root_seed = 0;
  FanInMode fan_in = FanInMode::dense;

  /// Phase-1 candidates; empty means all of {1..width}^3.
  std::vector<NeuronConfig> candidates;
  /// Visit phase-1 configs in ascending structured cost and stop once a cost
  /// level has a success. Gives the same winner with far fewer trainings.
  bool cost_ordered = false;
  /// Stop phase 2 after this many candidates (0 = no limit).
  std::int64_t phase2_limit = 0;
  /// Stop phase 2 after the block of 64 candidates holding the first success.
  bool stop_at_first_success = false;

  void validate() const;
};

struct Phase1Entry {
  NeuronConfig config;
  std::int64_t cost = 0;
  double best_accuracy = 0.0;
  double best_lr = 0.0;
  Scheduler best_scheduler = Scheduler::constant;
  std::uint64_t best_seed = 0;
};

struct Phase1Result {
  std::optional<NeuronConfig> winner;  // nullopt: infeasible at this width
  std::vector<Phase1Entry> table;
};

/// Lazy product of per-layer eligible masks. Candidate index i decomposes in
/// mixed radix with layer 1 slowest and layer 4 fastest.
class CandidateSpace {
 public:
  CandidateSpace(const NeuronConfig& winner, int width,
                 std::optional<std::int64_t> layer2_first_k = std::nullopt);

  std::int64_t size() const { return size_; }
  const std::vector<LayerMask>& layer(int l) const { return layers_[l]; }
  /// Weight masks padded to full width, bias masks by the search rule.
  ModelMask mask(std::int64_t index) const;
  std::int64_t total_nnz(std::int64_t index) const;

 private:
  int width_;
  std::array<std::vector<LayerMask>, kDepth> layers_;
  std::array<std::vector<std::int64_t>, kDepth> nnz_;  // weights + biases
  std::int64_t size_ = 0;
};

struct SearchResult {
  std::optional<NeuronConfig> winning_config;
  std::vector<Phase1Entry> phase1_table;
  std::vector<RunRecord> phase2_records;
  std::optional<Checkpoint> best_model;
  std::optional<ModelMask> best_mask;
  std::optional<RunRecord> best_record;
  std::int64_t best_nnz = -1;  // -1 when infeasible
  double best_failed_accuracy = 0.0;  // best accuracy when infeasible
  std::int64_t candidates_considered = 0;
  std::int64_t candidates_trained = 0;
  bool feasible() const { return best_nnz >= 0; }
};

/// Seed used for the fresh initialization of a (phase, key, seed index)
/// combination.
std::uint64_t search_init_seed(std::uint64_t root, int phase,
                               std::uint64_t key, int seed_index);

Phase1Result phase1(const SearchConfig& cfg, const Dataset& data,
                    Journal* journal = nullptr);

/// Trains every surviving candidate. Records already in `resume` (matched by
/// candidate index) are reused instead of retrained.
SearchResult phase2(const SearchConfig& cfg, const NeuronConfig& winner,
                    const Dataset& data, Journal* journal = nullptr,
                    const std::vector<RunRecord>& resume = {});

/// Phase 1 and phase 2 with every training started from `init`.
SearchResult fixed_init_rerun(SearchConfig cfg, const Checkpoint& init,
                              const Dataset& data, Journal* journal = nullptr);

/// Search settings read from a config file: [search], [train] and [data]
/// sections. search.winner names the phase-2 configuration ("d1,d2,d3");
/// search.fixed_init is a checkpoint path. SPARSEST_SEED overrides
/// search.root_seed.
struct SearchFile {
  SearchConfig config;
  SpiralSpec data;
  std::optional<NeuronConfig> winner;
};
SearchFile search_file_from_doc(const ConfigDoc& doc);

/// Full search: phase 1 then phase 2 on its winner.
SearchResult combinatorial_search(const SearchConfig& cfg, const Dataset& data,
                                  Journal* journal = nullptr);

}  // namespace sparsest
