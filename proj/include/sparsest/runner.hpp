#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsest/analysis.hpp"
#include "sparsest/checkpoint.hpp"
#include "sparsest/config.hpp"
#include "sparsest/pruners.hpp"
#include "sparsest/record.hpp"
#include "sparsest/spiral.hpp"

namespace sparsest {

/// Widths the pruning benchmark sweeps over.
const std::vector<int>& benchmark_widths();

struct SweepConfig {
  std::vector<int> widths = {16};
  std::vector<std::int64_t> budgets = {44};
  std::vector<PruneMethod> methods;
  std::vector<double> lrs = {0.1};
  std::vector<Scheduler> schedulers = {Scheduler::cosine};
  std::vector<std::uint64_t> seeds = {0};
  std::optional<std::filesystem::path> init_from;
  int structured_clamp = 0;  // 0 = none

  TrainConfig train;  // epochs, batch size, momentum, weight decay
  SpiralSpec data;
  std::uint64_t root_seed = 0;
  std::optional<std::filesystem::path> checkpoint_dir;

  /// Parses the [sweep], [train] and [data] sections. SPARSEST_SEED, when
  /// set, overrides root_seed.
  static SweepConfig from_doc(const ConfigDoc& doc);
  void validate() const;
};

struct SweepJob {
  PruneMethod method = PruneMethod::snip;
  int width = 16;
  std::int64_t budget = 44;
  double lr = 0.1;
  Scheduler scheduler = Scheduler::cosine;
  std::uint64_t seed = 0;
  std::string init_ref;
  int structured_clamp = 0;

  std::string job_id() const;
};

/// Cross product in deterministic job-id order. Throws ConfigError on
/// duplicate job ids.
std::vector<SweepJob> expand(const SweepConfig& sweep);

/// Seed used to initialize a job's model; depends only on (root, width, seed).
std::uint64_t job_init_seed(std::uint64_t root, int width, std::uint64_t seed);

/// Runs a single job. Failures become records with status "failed".
RunRecord run_job(const SweepJob& job, const SweepConfig& sweep,
                  const Dataset& data);

struct SweepSummary {
  std::int64_t planned = 0;
  std::int64_t skipped = 0;  // already in the journal
  std::int64_t executed = 0;
  std::int64_t failed = 0;
};

/// Runs every job not yet in the journal, `jobs` at a time, appending each
/// record as it completes.
SweepSummary expand_and_run(const SweepConfig& sweep, Journal& journal,
                            int jobs = 1);

struct SparsestSuccess {
  double threshold = 0.0;
  std::optional<std::int64_t> nnz;  // nullopt: no run reached the threshold
  std::optional<double> accuracy;
  std::string job_id;
};

struct Report {
  /// method -> (total nnz -> best accuracy)
  std::map<std::string, std::map<std::int64_t, double>> best_by_nnz;
  std::map<std::string, std::vector<ParetoPoint>> frontiers;
  /// method -> sparsest success per threshold
  std::map<std::string, std::vector<SparsestSuccess>> sparsest;
  /// method -> mean FLOPs over its runs
  std::map<std::string, double> flops;
};

inline const std::vector<double> kReportThresholds = {0.95, 0.995};

Report report(const std::vector<RunRecord>& journal);
/// Writes summary.csv, sparsest.csv, flops.csv and frontier_<method>.csv.
void write_report(const Report& r, const std::filesystem::path& dir);

/// Unmasked initialization of the sparsest comb-search success reaching
/// `rho`. Ties: higher accuracy, then lower seed.
Checkpoint best_init_extract(const std::vector<RunRecord>& journal, double rho,
                             int width);

}  // namespace sparsest
