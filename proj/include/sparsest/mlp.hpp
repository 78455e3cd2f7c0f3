#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsest/mask.hpp"
#include "sparsest/spiral.hpp"

namespace sparsest {

struct MlpArch {
  int width = 16;

  int rows(int layer) const { return layer == kDepth - 1 ? kOutputDim : width; }
  int cols(int layer) const { return layer == 0 ? kInputDim : width; }
  std::int64_t weight_count() const;
  std::int64_t param_count() const;

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

struct Layer {
  int rows = 0;
  int cols = 0;
  std::vector<double> w;  // row-major rows x cols
  std::vector<double> b;  // rows

  double& at(int r, int c) { return w[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return w[static_cast<std::size_t>(r) * cols + c];
  }
  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Parameters (or gradients, or momentum buffers) of the four layers.
using Params = std::array<Layer, kDepth>;

Params zero_params(const MlpArch& arch);

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaskedMlp {
  MlpArch arch;
  Params params;
  ModelMask mask;
  std::uint64_t seed = 0;

  /// Installs `m` and zeroes every parameter outside it.
  void set_mask(ModelMask m);
  /// Re-zeroes masked entries.
  void project();
  bool is_projected() const;
  /// Count of nonzero parameter values (weights, plus biases if asked).
  std::int64_t nonzero_count(bool include_bias) const;
};

enum class FanInMode { dense, masked };

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, all-ones mask.
MaskedMlp init(const MlpArch& arch, std::uint64_t seed);

/// Draws from the same stream as init(), but bounds each row by its masked
/// fan-in, then applies `mask`.
MaskedMlp init(const MlpArch& arch, std::uint64_t seed, const ModelMask& mask,
               FanInMode mode);

struct ForwardResult {
  double logit = 0.0;
  std::array<std::vector<double>, kDepth - 1> hidden;
};

ForwardResult forward(const MaskedMlp& m, Point2 x);

/// Numerically stable mean binary cross-entropy with logits.
double bce_with_logits(double logit, std::uint8_t label);

struct LossGrad {
  double loss = 0.0;
  Params grads;
  std::int64_t correct = 0;  // predictions (logit > 0 <=> 1) matching labels
};

/// Dense reference backprop over the selected indices. Gradients of masked
/// entries are reported as computed; the caller applies the mask if needed.
LossGrad loss_and_grad(const MaskedMlp& m, const Dataset& data,
                       std::span<const std::size_t> batch);
LossGrad loss_and_grad(const MaskedMlp& m, const Dataset& data);

/// Flattened view helpers (weights then bias, layer by layer).
std::vector<double> flatten(const Params& p);
void unflatten(std::span<const double> flat, Params& p);

enum class Scheduler { constant, cosine, step_15_30 };

std::string to_string(Scheduler s);
Scheduler parse_scheduler(const std::string& s);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Scheduler scheduler = Scheduler::constant;
  std::uint64_t seed = 0;
  bool shuffle = true;

  /// Throws std::invalid_argument for negative rates or empty schedules.
  void validate() const;
};

/// Learning rate in effect during `epoch` (0-based).
double scheduled_lr(const TrainConfig& cfg, int epoch);

/// Optimizer steps in one epoch, the last partial batch included.
std::int64_t steps_per_epoch(std::size_t n, int batch_size);

/// Consecutive stretch of training at constant nonzero parameter count.
struct FlopsInterval {
  std::int64_t nonzero_params = 0;
  std::int64_t samples = 0;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;  // running accuracy over the epoch's batches
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::vector<FlopsInterval> trace;
  std::int64_t steps = 0;
  bool diverged = false;
};

/// State visible to a between-step hook.
struct StepContext {
  std::int64_t step = 0;  // optimizer steps completed so far
  std::int64_t total_steps = 0;
  int epoch = 0;
  std::span<const std::size_t> batch;  // the batch just used
  Params& momentum;
};

/// Called after every optimizer step. Returns true if it replaced the mask;
/// the trainer then re-projects parameters and momentum and rebuilds its
/// sparse kernel.
using StepHook = std::function<bool(MaskedMlp&, StepContext&)>;

struct TrainResult {
  MaskedMlp model;
  TrainHistory history;
  Params momentum;
};

/// SGD with momentum and L2 weight decay on unmasked entries. Parameters
/// outside the mask are re-zeroed after every step.
TrainResult train(MaskedMlp m, const Dataset& data, const TrainConfig& cfg,
                  const StepHook& hook = {});

/// Applies a single optimizer update to unmasked entries (used by train and
/// by the pruners that simulate short training runs).
void sgd_step(MaskedMlp& m, Params& momentum, const Params& grads, double lr,
              double momentum_coef, double weight_decay);

/// Fraction of points whose prediction (logit > 0 means 1) matches.
double accuracy(const MaskedMlp& m, const Dataset& data);
/// Single-threaded reference for accuracy().
double accuracy_serial(const MaskedMlp& m, const Dataset& data);

/// Negates the classifier layer and its bias.
MaskedMlp flip_labels(MaskedMlp m);

}  // namespace sparsest
