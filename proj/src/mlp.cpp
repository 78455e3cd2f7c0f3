#include "sparsest/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "sparsest/rng.hpp"

namespace sparsest {

std::int64_t MlpArch::weight_count() const {
  std::int64_t n = 0;
  for (int l = 0; l < kDepth; ++l) n += static_cast<std::int64_t>(rows(l)) * cols(l);
  return n;
}

std::int64_t MlpArch::param_count() const {
  std::int64_t n = weight_count();
  for (int l = 0; l < kDepth; ++l) n += rows(l);
  return n;
}

Params zero_params(const MlpArch& arch) {
  Params p;
  for (int l = 0; l < kDepth; ++l) {
    p[l].rows = arch.rows(l);
    p[l].cols = arch.cols(l);
    p[l].w.assign(static_cast<std::size_t>(p[l].rows) * p[l].cols, 0.0);
    p[l].b.assign(static_cast<std::size_t>(p[l].rows), 0.0);
  }
  return p;
}

namespace {

void project_params(Params& p, const ModelMask& mask) {
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = mask.weights[l].bits();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i]) p[l].w[i] = 0.0;
    }
    for (std::size_t i = 0; i < p[l].b.size(); ++i) {
      if (!mask.bias[l][i]) p[l].b[i] = 0.0;
    }
  }
}

void check_mask_shape(const MlpArch& arch, const ModelMask& mask) {
  for (int l = 0; l < kDepth; ++l) {
    if (mask.weights[l].rows() != arch.rows(l) ||
        mask.weights[l].cols() != arch.cols(l) ||
        static_cast<int>(mask.bias[l].size()) != arch.rows(l)) {
      throw MaskError("mask shape does not match width " +
                      std::to_string(arch.width));
    }
  }
}

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Dense forward pass with caller-owned buffers.
struct DenseWorkspace {
  std::array<std::vector<double>, kDepth> z;  // pre-activations
  std::array<std::vector<double>, kDepth> h;  // post-activations (h[3] unused)

  explicit DenseWorkspace(const MlpArch& arch) {
    for (int l = 0; l < kDepth; ++l) {
      z[l].assign(static_cast<std::size_t>(arch.rows(l)), 0.0);
      h[l].assign(static_cast<std::size_t>(arch.rows(l)), 0.0);
    }
  }
};

double dense_forward(const Params& p, Point2 x, DenseWorkspace& ws) {
  const double in[2] = {x.x, x.y};
  const double* prev = in;
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = p[l];
    for (int r = 0; r < L.rows; ++r) {
      double acc = L.b[static_cast<std::size_t>(r)];
      const double* row = L.w.data() + static_cast<std::size_t>(r) * L.cols;
      for (int c = 0; c < L.cols; ++c) acc += row[c] * prev[c];
      ws.z[l][static_cast<std::size_t>(r)] = acc;
      ws.h[l][static_cast<std::size_t>(r)] = relu(acc);
    }
    prev = ws.h[l].data();
  }
  return ws.z[kDepth - 1][0];
}

// Mask-aware kernel: visits only unmasked weights and rows that can be
// nonzero. Equivalent to the dense pass on a projected model.
struct SparseKernel {
  struct Row {
    int row;
    bool bias;
    std::vector<int> cols;
  };
  std::array<std::vector<Row>, kDepth> rows;
  std::array<std::vector<double>, kDepth> z, h, dz;
  std::vector<double> dh;

  SparseKernel(const MlpArch& arch, const ModelMask& mask) {
    for (int l = 0; l < kDepth; ++l) {
      const LayerMask& w = mask.weights[l];
      for (int r = 0; r < w.rows(); ++r) {
        Row row{r, mask.bias[l][static_cast<std::size_t>(r)] != 0, {}};
        for (int c = 0; c < w.cols(); ++c) {
          if (w(r, c)) row.cols.push_back(c);
        }
        if (row.bias || !row.cols.empty()) rows[l].push_back(std::move(row));
      }
      const auto n = static_cast<std::size_t>(arch.rows(l));
      z[l].assign(n, 0.0);
      h[l].assign(n, 0.0);
      dz[l].assign(n, 0.0);
    }
    dh.assign(static_cast<std::size_t>(arch.width), 0.0);
  }

  double forward(const Params& p, Point2 x) {
    const double in[2] = {x.x, x.y};
    const double* prev = in;
    for (int l = 0; l < kDepth; ++l) {
      const Layer& L = p[l];
      for (const Row& row : rows[l]) {
        const double* wr = L.w.data() + static_cast<std::size_t>(row.row) * L.cols;
        double acc = L.b[static_cast<std::size_t>(row.row)];
        for (int c : row.cols) acc += wr[c] * prev[c];
        z[l][static_cast<std::size_t>(row.row)] = acc;
        h[l][static_cast<std::size_t>(row.row)] = relu(acc);
      }
      prev = h[l].data();
    }
    return z[kDepth - 1][0];
  }

  // Accumulates d(loss)/d(params) for unmasked entries given dlogit.
  void backward(const Params& p, Point2 x, double dlogit, Params& g) {
    const double in[2] = {x.x, x.y};
    dz[kDepth - 1][0] = dlogit;
    for (int l = kDepth - 1; l >= 0; --l) {
      const Layer& L = p[l];
      Layer& G = g[l];
      const double* prev = l == 0 ? in : h[l - 1].data();
      if (l > 0) std::fill(dh.begin(), dh.end(), 0.0);
      for (const Row& row : rows[l]) {
        const auto r = static_cast<std::size_t>(row.row);
        const double d = dz[l][r];
        if (d == 0.0) continue;
        G.b[r] += d;
        const std::size_t base = r * static_cast<std::size_t>(L.cols);
        for (int c : row.cols) {
          G.w[base + static_cast<std::size_t>(c)] += d * prev[c];
          if (l > 0) dh[static_cast<std::size_t>(c)] += L.w[base + static_cast<std::size_t>(c)] * d;
        }
      }
      if (l > 0) {
        for (const Row& row : rows[l - 1]) {
          const auto r = static_cast<std::size_t>(row.row);
          dz[l - 1][r] = z[l - 1][r] > 0.0 ? dh[r] : 0.0;
        }
      }
    }
  }
};

void scale_params(Params& g, double s) {
  for (auto& L : g) {
    for (double& v : L.w) v *= s;
    for (double& v : L.b) v *= s;
  }
}

bool finite_params(const Params& p) {
  for (const auto& L : p) {
    for (double v : L.w) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : L.b) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

void MaskedMlp::set_mask(ModelMask m) {
  check_mask_shape(arch, m);
  mask = std::move(m);
  project();
}

void MaskedMlp::project() { project_params(params, mask); }

bool MaskedMlp::is_projected() const {
  for (int l = 0; l < kDepth; ++l) {
    const auto& bits = mask.weights[l].bits();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i] && params[l].w[i] != 0.0) return false;
    }
    for (std::size_t i = 0; i < params[l].b.size(); ++i) {
      if (!mask.bias[l][i] && params[l].b[i] != 0.0) return false;
    }
  }
  return true;
}

std::int64_t MaskedMlp::nonzero_count(bool include_bias) const {
  std::int64_t n = 0;
  for (const auto& L : params) {
    n += std::count_if(L.w.begin(), L.w.end(), [](double v) { return v != 0.0; });
    if (include_bias) {
      n += std::count_if(L.b.begin(), L.b.end(), [](double v) { return v != 0.0; });
    }
  }
  return n;
}

MaskedMlp init(const MlpArch& arch, std::uint64_t seed) {
  return init(arch, seed, dense_mask(arch.width), FanInMode::dense);
}

MaskedMlp init(const MlpArch& arch, std::uint64_t seed, const ModelMask& mask,
               FanInMode mode) {
  if (arch.width < 1) throw std::invalid_argument("width must be >= 1");
  check_mask_shape(arch, mask);
  MaskedMlp m;
  m.arch = arch;
  m.seed = seed;
  m.params = zero_params(arch);
  Rng rng(derive_seed(seed, 0x696e6974 /* "init" */));
  for (int l = 0; l < kDepth; ++l) {
    Layer& L = m.params[l];
    std::vector<double> bound(static_cast<std::size_t>(L.rows),
                              1.0 / std::sqrt(static_cast<double>(L.cols)));
    if (mode == FanInMode::masked) {
      for (int r = 0; r < L.rows; ++r) {
        const int fan = mask.weights[l].row_popcount(r);
        if (fan > 0) bound[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(static_cast<double>(fan));
      }
    }
    for (int r = 0; r < L.rows; ++r) {
      for (int c = 0; c < L.cols; ++c) {
        L.at(r, c) = rng.uniform(-1.0, 1.0) * bound[static_cast<std::size_t>(r)];
      }
    }
    for (int r = 0; r < L.rows; ++r) {
      L.b[static_cast<std::size_t>(r)] = rng.uniform(-1.0, 1.0) * bound[static_cast<std::size_t>(r)];
    }
  }
  m.mask = mask;
  m.project();
  return m;
}

ForwardResult forward(const MaskedMlp& m, Point2 x) {
  if (!finite_params(m.params)) throw NumericError("non-finite parameter");
  DenseWorkspace ws(m.arch);
  ForwardResult r;
  r.logit = dense_forward(m.params, x, ws);
  for (int l = 0; l < kDepth - 1; ++l) r.hidden[l] = ws.h[l];
  return r;
}

double bce_with_logits(double logit, std::uint8_t label) {
  // max(z, 0) - y z + log(1 + exp(-|z|))
  return std::max(logit, 0.0) - (label ? logit : 0.0) +
         std::log1p(std::exp(-std::abs(logit)));
}

LossGrad loss_and_grad(const MaskedMlp& m, const Dataset& data,
                       std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  LossGrad out;
  out.grads = zero_params(m.arch);
  DenseWorkspace ws(m.arch);
  std::vector<double> delta, next_delta;
  for (std::size_t idx : batch) {
    const Point2 x = data.xs[idx];
    const std::uint8_t y = data.ys[idx];
    const double z = dense_forward(m.params, x, ws);
    out.loss += bce_with_logits(z, y);
    out.correct += ((z > 0.0) == (y == 1)) ? 1 : 0;

    delta.assign(1, sigmoid(z) - static_cast<double>(y));
    for (int l = kDepth - 1; l >= 0; --l) {
      const Layer& L = m.params[l];
      Layer& G = out.grads[l];
      const double in[2] = {x.x, x.y};
      const double* prev = l == 0 ? in : ws.h[l - 1].data();
      for (int r = 0; r < L.rows; ++r) {
        const double d = delta[static_cast<std::size_t>(r)];
        G.b[static_cast<std::size_t>(r)] += d;
        for (int c = 0; c < L.cols; ++c) G.at(r, c) += d * prev[c];
      }
      if (l == 0) break;
      next_delta.assign(static_cast<std::size_t>(L.cols), 0.0);
      for (int c = 0; c < L.cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < L.rows; ++r) acc += L.at(r, c) * delta[static_cast<std::size_t>(r)];
        next_delta[static_cast<std::size_t>(c)] =
            ws.z[l - 1][static_cast<std::size_t>(c)] > 0.0 ? acc : 0.0;
      }
      delta.swap(next_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  scale_params(out.grads, inv);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

LossGrad loss_and_grad(const MaskedMlp& m, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(m, data, all);
}

std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  for (const auto& L : p) {
    out.insert(out.end(), L.w.begin(), L.w.end());
    out.insert(out.end(), L.b.begin(), L.b.end());
  }
  return out;
}

void unflatten(std::span<const double> flat, Params& p) {
  std::size_t k = 0;
  for (auto& L : p) {
    if (k + L.w.size() + L.b.size() > flat.size()) {
      throw std::invalid_argument("flat parameter vector too short");
    }
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), L.w.size(), L.w.begin());
    k += L.w.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), L.b.size(), L.b.begin());
    k += L.b.size();
  }
  if (k != flat.size()) throw std::invalid_argument("flat parameter vector too long");
}

std::string to_string(Scheduler s) {
  switch (s) {
    case Scheduler::constant: return "constant";
    case Scheduler::cosine: return "cosine";
    case Scheduler::step_15_30: return "step_15_30";
  }
  return "?";
}

Scheduler parse_scheduler(const std::string& s) {
  if (s == "constant") return Scheduler::constant;
  if (s == "cosine") return Scheduler::cosine;
  if (s == "step_15_30" || s == "step") return Scheduler::step_15_30;
  throw std::invalid_argument("unknown scheduler: " + s);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw std::invalid_argument("weight_decay must be >= 0");
  }
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  switch (cfg.scheduler) {
    case Scheduler::constant:
      return cfg.lr;
    case Scheduler::cosine:
      return cfg.lr * 0.5 *
             (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(cfg.epochs)));
    case Scheduler::step_15_30: {
      double lr = cfg.lr;
      if (epoch >= 15) lr *= 0.1;
      if (epoch >= 30) lr *= 0.1;
      return lr;
    }
  }
  return cfg.lr;
}

std::int64_t steps_per_epoch(std::size_t n, int batch_size) {
  return static_cast<std::int64_t>((n + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

void sgd_step(MaskedMlp& m, Params& momentum, const Params& grads, double lr,
              double momentum_coef, double weight_decay) {
  for (int l = 0; l < kDepth; ++l) {
    Layer& P = m.params[l];
    Layer& B = momentum[l];
    const Layer& G = grads[l];
    const auto& wbits = m.mask.weights[l].bits();
    for (std::size_t i = 0; i < P.w.size(); ++i) {
      if (!wbits[i]) {
        P.w[i] = 0.0;
        B.w[i] = 0.0;
        continue;
      }
      const double g = G.w[i] + weight_decay * P.w[i];
      B.w[i] = momentum_coef * B.w[i] + g;
      P.w[i] -= lr * B.w[i];
    }
    const auto& bbits = m.mask.bias[l];
    for (std::size_t i = 0; i < P.b.size(); ++i) {
      if (!bbits[i]) {
        P.b[i] = 0.0;
        B.b[i] = 0.0;
        continue;
      }
      const double g = G.b[i] + weight_decay * P.b[i];
      B.b[i] = momentum_coef * B.b[i] + g;
      P.b[i] -= lr * B.b[i];
    }
  }
}

TrainResult train(MaskedMlp m, const Dataset& data, const TrainConfig& cfg,
                  const StepHook& hook) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  check_mask_shape(m.arch, m.mask);
  m.project();

  TrainResult res;
  res.momentum = zero_params(m.arch);
  TrainHistory& hist = res.history;
  const std::int64_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const std::int64_t total_steps = spe * cfg.epochs;

  auto kernel = std::make_unique<SparseKernel>(m.arch, m.mask);
  Params grads = zero_params(m.arch);
  std::vector<std::size_t> order(data.size());

  hist.trace.push_back({nnz(m.mask, true), 0});

  for (int epoch = 0; epoch < cfg.epochs && !hist.diverged; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng rng(derive_seed(cfg.seed, 0x65706f6368 /* "epoch" */,
                          static_cast<std::uint64_t>(epoch)));
      rng.shuffle(std::span<std::size_t>(order));
    }
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    std::int64_t seen = 0;
    for (std::int64_t s = 0; s < spe; ++s) {
      const std::size_t lo = static_cast<std::size_t>(s) * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + lo, hi - lo);

      for (auto& L : grads) {
        std::fill(L.w.begin(), L.w.end(), 0.0);
        std::fill(L.b.begin(), L.b.end(), 0.0);
      }
      double batch_loss = 0.0;
      for (std::size_t idx : batch) {
        const Point2 x = data.xs[idx];
        const std::uint8_t y = data.ys[idx];
        const double z = kernel->forward(m.params, x);
        batch_loss += bce_with_logits(z, y);
        correct += ((z > 0.0) == (y == 1)) ? 1 : 0;
        kernel->backward(m.params, x, sigmoid(z) - static_cast<double>(y), grads);
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      batch_loss *= inv;
      hist.trace.back().samples += static_cast<std::int64_t>(batch.size());
      if (!std::isfinite(batch_loss)) {
        hist.diverged = true;
        break;
      }
      scale_params(grads, inv);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      seen += static_cast<std::int64_t>(batch.size());

      sgd_step(m, res.momentum, grads, lr, cfg.momentum, cfg.weight_decay);
      ++hist.steps;

      if (hook) {
        StepContext ctx{hist.steps, total_steps, epoch, batch, res.momentum};
        if (hook(m, ctx)) {
          check_mask_shape(m.arch, m.mask);
          m.project();
          project_params(res.momentum, m.mask);
          kernel = std::make_unique<SparseKernel>(m.arch, m.mask);
          const std::int64_t count = nnz(m.mask, true);
          if (count != hist.trace.back().nonzero_params) {
            hist.trace.push_back({count, 0});
          }
        }
      }
    }
    if (seen > 0) {
      hist.epochs.push_back({loss_sum / static_cast<double>(seen),
                             static_cast<double>(correct) / static_cast<double>(seen), lr});
    }
  }
  res.model = std::move(m);
  return res;
}

double accuracy_serial(const MaskedMlp& m, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  DenseWorkspace ws(m.arch);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double z = dense_forward(m.params, data.xs[i], ws);
    correct += ((z > 0.0) == (data.ys[i] == 1)) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double accuracy(const MaskedMlp& m, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto n = static_cast<std::int64_t>(data.size());
  std::int64_t correct = 0;
#pragma omp parallel reduction(+ : correct)
  {
    DenseWorkspace ws(m.arch);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double z = dense_forward(m.params, data.xs[k], ws);
      correct += ((z > 0.0) == (data.ys[k] == 1)) ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

MaskedMlp flip_labels(MaskedMlp m) {
  Layer& L = m.params[kDepth - 1];
  for (double& v : L.w) v = -v;
  for (double& v : L.b) v = -v;
  return m;
}

}  // namespace sparsest
