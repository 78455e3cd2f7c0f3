#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sparsest {

inline constexpr int kRecordSchemaVersion = 1;

/// Outcome of one experiment; one JSONL line in a journal.
struct RunRecord {
  // identity
  std::string method;
  int width = 16;
  std::int64_t budget = 0;  // target weight nnz; 0 for comb search
  double lr = 0.0;
  std::string scheduler;
  std::uint64_t seed = 0;
  std::string init_ref;  // "seed:<n>" or "ckpt:<path>"
  int structured_clamp = 0;  // 0 = none
  std::string neuron_config;  // comb search only
  std::int64_t candidate = -1;  // comb search candidate index
  int phase = 0;

  // outcome
  double accuracy = 0.0;
  std::optional<double> eval_accuracy;
  double final_loss = 0.0;
  std::int64_t weight_nnz = 0;
  std::int64_t total_nnz = 0;
  std::int64_t effective_nnz = 0;
  double flops = 0.0;
  double wall_time_s = 0.0;

  // status
  std::string status = "ok";  // ok | diverged | failed
  bool diverged = false;
  bool layer_collapse = false;
  std::string meta_gradient;  // "first_order_approx" for ProsPr
  std::string error;
  std::string loss_fn = "bce_with_logits";
  std::string mask;  // mask line
  std::string checkpoint;

  /// Unique job key; identical keys are the same experiment.
  std::string job_id() const;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

/// Append-only JSONL journal. Each append writes one full line and flushes.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);

  void append(const RunRecord& r);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Reads every well-formed line; a truncated final line (from a crash) is
/// ignored.
std::vector<RunRecord> read_journal(const std::filesystem::path& path);

}  // namespace sparsest
