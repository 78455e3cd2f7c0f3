#include <cmath>

#include "doctest.h"
#include "sparsest/checkpoint.hpp"
#include "sparsest/mlp.hpp"
#include "sparsest/rng.hpp"

using namespace sparsest;

namespace {

MaskedMlp zero_model(int width) {
  MaskedMlp m = init(MlpArch{width}, 0);
  m.params = zero_params(m.arch);
  return m;
}

Dataset small_spiral(std::int64_t n = 400) {
  SpiralSpec s;
  s.points_total = n;
  return generate(s);
}

// Straight matrix products, written without the library's kernels.
double oracle_logit(const MaskedMlp& m, Point2 x) {
  std::vector<double> h = {x.x, x.y};
  for (int l = 0; l < kDepth; ++l) {
    const Layer& L = m.params[l];
    std::vector<double> out(L.rows);
    for (int r = 0; r < L.rows; ++r) {
      double s = L.b[r];
      for (int c = 0; c < L.cols; ++c) s += L.w[r * L.cols + c] * h[c];
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
    const double y = d.ys[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(idx.size());
}

MaskedMlp random_model(int width, std::uint64_t seed) {
  MaskedMlp m = init(MlpArch{width}, seed);
  Rng rng(derive_seed(seed, 99));
  for (auto& L : m.params) {
    for (auto& v : L.w) v = rng.uniform(-1.0, 1.0);
    for (auto& v : L.b) v = rng.uniform(-0.5, 0.5);
  }
  return m;
}

}  // namespace

TEST_CASE("init is deterministic and bounded") {
  const MaskedMlp a = init(MlpArch{16}, 7), b = init(MlpArch{16}, 7);
  CHECK(a.params == b.params);
  CHECK(init(MlpArch{16}, 8).params != a.params);
  for (double v : a.params[0].w) CHECK(std::abs(v) <= 1.0 / std::sqrt(2.0));
  for (double v : a.params[1].w) CHECK(std::abs(v) <= 0.25);
  CHECK(init(MlpArch{3}, 1).arch.param_count() == 37);
  CHECK(MlpArch{16}.param_count() == 609);
  CHECK(a.mask == dense_mask(16));
}

TEST_CASE("masked fan-in init bounds rows by their masked fan-in") {
  const ModelMask mm = structured_mask({3, 3, 3}, 16);
  const MaskedMlp m = init(MlpArch{16}, 4, mm, FanInMode::masked);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) CHECK(std::abs(m.params[1].at(r, c)) <= 1.0 / std::sqrt(3.0));
  }
  CHECK(m.is_projected());
  const MaskedMlp d = init(MlpArch{16}, 4, mm, FanInMode::dense);
  CHECK(d.params[0].w[0] == init(MlpArch{16}, 4).params[0].w[0]);
}

TEST_CASE("forward") {
  const MaskedMlp z = zero_model(16);
  CHECK(forward(z, {0.3, -1.2}).logit == 0.0);

  MaskedMlp chain = zero_model(4);
  chain.params[0].at(0, 0) = 1.0;
  chain.params[1].at(0, 0) = 1.0;
  chain.params[2].at(0, 0) = 1.0;
  chain.params[3].at(0, 0) = 1.0;
  CHECK(forward(chain, {1.0, 0.0}).logit == 1.0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MaskedMlp m = random_model(4, seed);
    Rng rng(seed);
    const Point2 x{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    CHECK(forward(m, x).logit == doctest::Approx(oracle_logit(m, x)).epsilon(1e-12));
  }

  MaskedMlp bad = random_model(4, 1);
  bad.params[2].b[0] = std::nan("");
  CHECK_THROWS_AS(forward(bad, {0.0, 0.0}), NumericError);
}

TEST_CASE("loss of the zero net is ln 2") {
  const Dataset d = small_spiral();
  CHECK(loss_and_grad(zero_model(16), d).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("gradients match central differences") {
  const Dataset d = small_spiral(200);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MaskedMlp m = random_model(4, seed);
    std::vector<std::size_t> batch;
    Rng rng(seed + 1000);
    for (int i = 0; i < 16; ++i) batch.push_back(rng.below(d.size()));
    const auto g = flatten(loss_and_grad(m, d, batch).grads);
    const auto w = flatten(m.params);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
      MaskedMlp p = m, q = m;
      auto wp = w, wq = w;
      wp[i] += eps;
      wq[i] -= eps;
      unflatten(wp, p.params);
      unflatten(wq, q.params);
      const double fd = (oracle_loss(p, d, batch) - oracle_loss(q, d, batch)) / (2 * eps);
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
      CHECK(std::abs(fd - g[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
  const Dataset d = small_spiral(100);
  const MaskedMlp m = random_model(6, 3);
  std::vector<std::size_t> once = {1, 5, 17, 60, 99}, twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  const LossGrad a = loss_and_grad(m, d, once), b = loss_and_grad(m, d, twice);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-15));
  const auto ga = flatten(a.grads), gb = flatten(b.grads);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == doctest::Approx(gb[i]).epsilon(1e-14));
}

TEST_CASE("schedulers") {
  TrainConfig c;
  c.lr = 0.1;
  c.epochs = 50;
  c.scheduler = Scheduler::constant;
  CHECK(scheduled_lr(c, 49) == 0.1);
  c.scheduler = Scheduler::step_15_30;
  CHECK(scheduled_lr(c, 14) == 0.1);
  CHECK(scheduled_lr(c, 15) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(scheduled_lr(c, 29) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(scheduled_lr(c, 30) == doctest::Approx(0.001).epsilon(1e-15));
  c.scheduler = Scheduler::cosine;
  CHECK(scheduled_lr(c, 0) == 0.1);
  CHECK(scheduled_lr(c, 25) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(scheduled_lr(c, 50) == doctest::Approx(0.0));
  for (auto s : {Scheduler::constant, Scheduler::cosine, Scheduler::step_15_30}) {
    CHECK(parse_scheduler(to_string(s)) == s);
  }
  CHECK(steps_per_epoch(50000, 128) == 391);
  CHECK(steps_per_epoch(256, 128) == 2);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lr = -0.1;
  CHECK_THROWS(c.validate());
  c.lr = 0.1;
  c.epochs = 0;
  CHECK_THROWS(c.validate());
  c.epochs = 1;
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("sgd step matches a hand calculation") {
  // Two live parameters: W1[0][0] and b1[0]; everything else masked.
  MaskedMlp m = init(MlpArch{1}, 0);
  ModelMask mm = empty_mask(1);
  mm.weights[0].set(0, 0, true);
  mm.bias[0][0] = 1;
  m.params[0].at(0, 0) = 0.5;
  m.params[0].b[0] = -0.2;
  m.set_mask(mm);
  Params mom = zero_params(m.arch), g = zero_params(m.arch);
  g[0].at(0, 0) = 0.3;
  g[0].b[0] = -0.1;
  g[1].at(0, 0) = 7.0;  // masked, must be ignored
  const double lr = 0.1, mu = 0.9, wd = 5e-4;

  double w = 0.5, b = -0.2, vw = 0.0, vb = 0.0;
  for (int step = 0; step < 3; ++step) {
    sgd_step(m, mom, g, lr, mu, wd);
    vw = mu * vw + (0.3 + wd * w);
    vb = mu * vb + (-0.1 + wd * b);
    w -= lr * vw;
    b -= lr * vb;
    CHECK(m.params[0].at(0, 0) == doctest::Approx(w).epsilon(1e-12));
    CHECK(m.params[0].b[0] == doctest::Approx(b).epsilon(1e-12));
    CHECK(m.params[1].at(0, 0) == 0.0);
    CHECK(mom[1].at(0, 0) == 0.0);
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Dataset d = small_spiral();
  const MaskedMlp m = init(MlpArch{8}, 2);
  TrainConfig c;
  c.lr = 0.0;
  c.epochs = 5;
  const TrainResult r = train(m, d, c);
  CHECK(r.model.params == m.params);
  CHECK(r.history.epochs.size() == 5);
}

TEST_CASE("fully masked model stays zero") {
  const Dataset d = small_spiral();
  MaskedMlp m = init(MlpArch{8}, 2);
  m.set_mask(empty_mask(8));
  TrainConfig c;
  c.epochs = 3;
  const TrainResult r = train(m, d, c);
  for (const auto& L : r.model.params) {
    for (double v : L.w) CHECK(v == 0.0);
    for (double v : L.b) CHECK(v == 0.0);
  }
  CHECK(accuracy(r.model, d) == 0.5);
}

TEST_CASE("training keeps masked entries at zero and is deterministic") {
  const Dataset d = small_spiral(1000);
  MaskedMlp m = init(MlpArch{16}, 5);
  m.set_mask(structured_mask({5, 4, 3}, 16));
  TrainConfig c;
  c.epochs = 4;
  c.seed = 11;
  const TrainResult a = train(m, d, c), b = train(m, d, c);
  CHECK(a.model.is_projected());
  CHECK(a.model.params == b.model.params);
  CHECK(a.model.nonzero_count(true) <= nnz(m.mask, true));
  CHECK(a.history.steps == 4 * steps_per_epoch(1000, 128));
  std::int64_t samples = 0;
  for (const auto& iv : a.history.trace) samples += iv.samples;
  CHECK(samples == 4000);
}

TEST_CASE("dense training separates a small spiral") {
  SpiralSpec s;
  s.points_total = 2000;
  const Dataset d = generate(s);
  TrainConfig c;
  c.epochs = 30;
  c.scheduler = Scheduler::cosine;
  const TrainResult r = train(init(MlpArch{16}, 0), d, c);
  CHECK(accuracy(r.model, d) > 0.9);
}

TEST_CASE("accuracy") {
  const Dataset d = small_spiral();
  CHECK(accuracy(zero_model(16), d) == 0.5);
  const MaskedMlp m = random_model(8, 4);
  CHECK(accuracy(m, d) + accuracy(flip_labels(m), d) == doctest::Approx(1.0));
  CHECK(accuracy(m, d) == accuracy_serial(m, d));
}

TEST_CASE("checkpoint round trips") {
  Checkpoint ck{random_model(16, 9), std::nullopt};
  ck.model.set_mask(structured_mask({3, 5, 2}, 16));
  ck.model.mask.provenance = "structured";
  const auto bytes = to_bytes(ck);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "MLPCKPT1");
  const Checkpoint back = from_bytes(bytes);
  CHECK(to_bytes(back) == bytes);
  CHECK(back.model.params == ck.model.params);
  CHECK(back.model.mask == ck.model.mask);

  ck.momentum = random_model(16, 10).params;
  const auto with_mom = to_bytes(ck);
  CHECK(to_bytes(from_bytes(with_mom)) == with_mom);
  CHECK(to_bytes(checkpoint_from_json(to_json(ck))) == with_mom);

  const auto path = std::filesystem::temp_directory_path() / "sparsest_test.ckpt";
  save_checkpoint(ck, path);
  CHECK(to_bytes(load_checkpoint(path)) == with_mom);
  std::filesystem::remove(path);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(from_bytes(bad));
  bad = bytes;
  bad.resize(bad.size() / 2);
  CHECK_THROWS(from_bytes(bad));
}
