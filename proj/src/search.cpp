#include "sparsest/search.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <map>
#include <unordered_map>

#include "sparsest/analysis.hpp"
#include "sparsest/rng.hpp"

namespace sparsest {
namespace {

constexpr std::int64_t kBlock = 64;

std::uint64_t config_key(const NeuronConfig& c) {
  return (static_cast<std::uint64_t>(c.d1) << 32) | (static_cast<std::uint64_t>(c.d2) << 16) |
         static_cast<std::uint64_t>(c.d3);
}

struct Job {
  ModelMask mask;
  NeuronConfig config;
  std::int64_t candidate = -1;
  int phase = 1;
  std::uint64_t seed = 0;
  double lr = 0.0;
  Scheduler scheduler = Scheduler::constant;
};

std::vector<double> effective_lrs(const SearchConfig& cfg) {
  if (cfg.subset_filter.single_lr) return {*cfg.subset_filter.single_lr};
  return cfg.lrs;
}

MaskedMlp job_init(const SearchConfig& cfg, const Job& job) {
  const MlpArch arch{cfg.width};
  if (cfg.fixed_init) {
    MaskedMlp m = cfg.fixed_init->model;
    m.set_mask(job.mask);
    return m;
  }
  return init(arch, job.seed, job.mask, cfg.fan_in);
}

RunRecord skeleton(const SearchConfig& cfg, const Job& job) {
  RunRecord r;
  r.method = "comb_search";
  r.width = cfg.width;
  r.lr = job.lr;
  r.scheduler = to_string(job.scheduler);
  r.seed = job.seed;
  r.init_ref = cfg.fixed_init ? cfg.fixed_init_ref : "seed:" + std::to_string(job.seed);
  r.neuron_config = to_string(job.config);
  r.candidate = job.candidate;
  r.phase = job.phase;
  return r;
}

std::pair<RunRecord, MaskedMlp> train_job(const SearchConfig& cfg, const Job& job,
                                          const Dataset& data) {
  const auto started = std::chrono::steady_clock::now();
  RunRecord r = skeleton(cfg, job);
  TrainConfig t = cfg.train;
  t.lr = job.lr;
  t.scheduler = job.scheduler;
  t.seed = job.seed;
  TrainResult tr = train(job_init(cfg, job), data, t);
  r.accuracy = accuracy(tr.model, data);
  if (!tr.history.epochs.empty()) r.final_loss = tr.history.epochs.back().loss;
  r.weight_nnz = weight_nnz(job.mask);
  r.total_nnz = nnz(job.mask, true);
  r.effective_nnz = effective_mask(job.mask).effective_nnz;
  r.flops = flops(tr.history.trace);
  r.diverged = tr.history.diverged;
  r.status = r.diverged ? "diverged" : "ok";
  r.mask = format_mask_line(job.mask);
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(r), std::move(tr.model)};
}

/// Trains the jobs in parallel and journals them in job order. Jobs whose id
/// appears in `done` are taken from there instead.
std::vector<RunRecord> run_jobs(const SearchConfig& cfg, const std::vector<Job>& jobs,
                                const Dataset& data, Journal* journal,
                                const std::unordered_map<std::string, RunRecord>& done) {
  std::vector<RunRecord> out(jobs.size());
  std::vector<std::uint8_t> fresh(jobs.size(), 0);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto it = done.find(skeleton(cfg, jobs[i]).job_id());
    if (it != done.end()) {
      out[i] = it->second;
    } else {
      fresh[i] = 1;
    }
  }
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (!fresh[u]) continue;
    try {
      out[u] = train_job(cfg, jobs[u], data).first;
    } catch (const std::exception& e) {
      RunRecord r = skeleton(cfg, jobs[u]);
      r.status = "failed";
      r.error = e.what();
      out[u] = std::move(r);
    }
  }
  if (journal) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (fresh[i]) journal->append(out[i]);
    }
  }
  return out;
}

bool better_success(const RunRecord& a, const RunRecord& b) {
  if (a.total_nnz != b.total_nnz) return a.total_nnz < b.total_nnz;
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  if (a.candidate != b.candidate) return a.candidate < b.candidate;
  return a.seed < b.seed;
}

}  // namespace

void SearchConfig::validate() const {
  if (width < 1) throw std::invalid_argument("width must be >= 1");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be positive");
  if (lrs.empty() && !subset_filter.single_lr) throw std::invalid_argument("no learning rates");
  if (schedulers.empty()) throw std::invalid_argument("no schedulers");
  if (seeds_per_mask < 1) throw std::invalid_argument("seeds_per_mask must be >= 1");
  if ((subset_filter.layer2_first_k && *subset_filter.layer2_first_k < 0) ||
      (subset_filter.max_model_nnz && *subset_filter.max_model_nnz < 0) ||
      (subset_filter.single_lr && *subset_filter.single_lr < 0.0) || phase2_limit < 0) {
    throw std::invalid_argument("subset filters must be nonnegative");
  }
  if (fixed_init && fixed_init->model.arch.width != width) {
    throw std::invalid_argument("fixed init width " +
                                std::to_string(fixed_init->model.arch.width) +
                                " does not match search width " + std::to_string(width));
  }
  for (const auto& c : candidates) {
    if (c.d1 < 1 || c.d2 < 1 || c.d3 < 1 || c.d1 > width || c.d2 > width || c.d3 > width) {
      throw std::invalid_argument("candidate " + to_string(c) + " outside {1.." +
                                  std::to_string(width) + "}^3");
    }
  }
  TrainConfig t = train;
  for (double lr : effective_lrs(*this)) {
    t.lr = lr;
    t.validate();
  }
}

std::uint64_t search_init_seed(std::uint64_t root, int phase, std::uint64_t key,
                               int seed_index) {
  return derive_seed(root, static_cast<std::uint64_t>(phase), key,
                     static_cast<std::uint64_t>(seed_index));
}

CandidateSpace::CandidateSpace(const NeuronConfig& winner, int width,
                               std::optional<std::int64_t> layer2_first_k)
    : width_(width) {
  const auto dims = winner.dims();
  size_ = 1;
  for (int l = 0; l < kDepth; ++l) {
    if (dims[l + 1] > width || (l > 0 && dims[l] > width)) {
      throw MaskError("neuron config " + to_string(winner) + " exceeds width");
    }
    layers_[l] = eligible_masks(dims[l], dims[l + 1]);
    if (l == 1 && layer2_first_k &&
        static_cast<std::int64_t>(layers_[l].size()) > *layer2_first_k) {
      layers_[l].resize(static_cast<std::size_t>(*layer2_first_k));
    }
    for (const auto& m : layers_[l]) nnz_[l].push_back(m.popcount() + dims[l + 1]);
    const auto n = static_cast<std::int64_t>(layers_[l].size());
    if (n != 0 && size_ > std::numeric_limits<std::int64_t>::max() / n) {
      throw std::overflow_error("candidate space too large");
    }
    size_ *= n;
  }
}

ModelMask CandidateSpace::mask(std::int64_t index) const {
  if (index < 0 || index >= size_) throw std::out_of_range("candidate index out of range");
  const auto shapes = layer_shapes(width_);
  ModelMask mm;
  for (int l = kDepth - 1; l >= 0; --l) {
    const auto n = static_cast<std::int64_t>(layers_[l].size());
    const auto& m = layers_[l][static_cast<std::size_t>(index % n)];
    index /= n;
    mm.weights[l] = m.padded(shapes[l].first, shapes[l].second);
  }
  for (int l = 0; l < kDepth; ++l) mm.bias[l].assign(static_cast<std::size_t>(shapes[l].first), 0);
  return bias_mask_search(std::move(mm));
}

std::int64_t CandidateSpace::total_nnz(std::int64_t index) const {
  if (index < 0 || index >= size_) throw std::out_of_range("candidate index out of range");
  std::int64_t total = 0;
  for (int l = kDepth - 1; l >= 0; --l) {
    const auto n = static_cast<std::int64_t>(layers_[l].size());
    total += nnz_[l][static_cast<std::size_t>(index % n)];
    index /= n;
  }
  return total;
}

Phase1Result phase1(const SearchConfig& cfg, const Dataset& data, Journal* journal) {
  cfg.validate();
  std::vector<NeuronConfig> configs = cfg.candidates;
  if (configs.empty()) {
    for (int a = 1; a <= cfg.width; ++a) {
      for (int b = 1; b <= cfg.width; ++b) {
        for (int c = 1; c <= cfg.width; ++c) configs.push_back({a, b, c});
      }
    }
  }
  std::sort(configs.begin(), configs.end());
  configs.erase(std::unique(configs.begin(), configs.end()), configs.end());
  if (cfg.cost_ordered) {
    std::stable_sort(configs.begin(), configs.end(), [](const auto& x, const auto& y) {
      return structured_cost(x) < structured_cost(y);
    });
  }

  Phase1Result res;
  const std::unordered_map<std::string, RunRecord> none;
  std::size_t pos = 0;
  while (pos < configs.size()) {
    // One batch: a whole cost level when cost ordered, else a fixed block.
    std::size_t end = pos;
    if (cfg.cost_ordered) {
      const auto cost = structured_cost(configs[pos]);
      while (end < configs.size() && structured_cost(configs[end]) == cost) ++end;
    } else {
      end = std::min(configs.size(), pos + static_cast<std::size_t>(kBlock));
    }
    std::vector<Job> jobs;
    for (std::size_t i = pos; i < end; ++i) {
      const NeuronConfig& c = configs[i];
      const ModelMask mask = structured_mask(c, cfg.width);
      for (int s = 0; s < cfg.seeds_per_mask; ++s) {
        const auto seed = search_init_seed(cfg.root_seed, 1, config_key(c), s);
        for (double lr : effective_lrs(cfg)) {
          for (Scheduler sch : cfg.schedulers) jobs.push_back({mask, c, -1, 1, seed, lr, sch});
        }
      }
    }
    const auto records = run_jobs(cfg, jobs, data, journal, none);
    bool level_success = false;
    std::size_t j = 0;
    for (std::size_t i = pos; i < end; ++i) {
      Phase1Entry e;
      e.config = configs[i];
      e.cost = structured_cost(configs[i]);
      e.best_accuracy = -1.0;
      for (; j < jobs.size() && jobs[j].config == configs[i]; ++j) {
        if (records[j].accuracy > e.best_accuracy) {
          e.best_accuracy = records[j].accuracy;
          e.best_lr = jobs[j].lr;
          e.best_scheduler = jobs[j].scheduler;
          e.best_seed = jobs[j].seed;
        }
      }
      level_success = level_success || e.best_accuracy > cfg.rho;
      res.table.push_back(e);
    }
    pos = end;
    if (cfg.cost_ordered && level_success) break;
  }

  for (const auto& e : res.table) {
    if (!(e.best_accuracy > cfg.rho)) continue;
    if (!res.winner || e.cost < structured_cost(*res.winner) ||
        (e.cost == structured_cost(*res.winner) && e.config < *res.winner)) {
      res.winner = e.config;
    }
  }
  return res;
}

SearchResult phase2(const SearchConfig& cfg, const NeuronConfig& winner, const Dataset& data,
                    Journal* journal, const std::vector<RunRecord>& resume) {
  cfg.validate();
  const CandidateSpace space(winner, cfg.width, cfg.subset_filter.layer2_first_k);
  std::unordered_map<std::string, RunRecord> done;
  for (const auto& r : resume) {
    if (r.phase == 2) done.emplace(r.job_id(), r);
  }

  SearchResult res;
  res.winning_config = winner;
  std::vector<Job> jobs;
  bool stop = false;
  const auto flush = [&] {
    auto records = run_jobs(cfg, jobs, data, journal, done);
    for (auto& r : records) {
      if (r.accuracy > cfg.rho && r.status != "failed") stop = stop || cfg.stop_at_first_success;
      res.phase2_records.push_back(std::move(r));
    }
    res.candidates_trained += static_cast<std::int64_t>(jobs.size());
    jobs.clear();
  };

  std::int64_t block = 0;
  for (std::int64_t idx = 0; idx < space.size() && !stop; ++idx) {
    if (cfg.phase2_limit > 0 && res.candidates_considered >= cfg.phase2_limit) break;
    if (cfg.subset_filter.max_model_nnz && space.total_nnz(idx) > *cfg.subset_filter.max_model_nnz) {
      continue;
    }
    ++res.candidates_considered;
    const ModelMask mask = space.mask(idx);
    for (int s = 0; s < cfg.seeds_per_mask; ++s) {
      const auto seed = search_init_seed(cfg.root_seed, 2, static_cast<std::uint64_t>(idx), s);
      for (double lr : effective_lrs(cfg)) {
        for (Scheduler sch : cfg.schedulers) jobs.push_back({mask, winner, idx, 2, seed, lr, sch});
      }
    }
    if (++block == kBlock) {
      flush();
      block = 0;
    }
  }
  if (!jobs.empty()) flush();

  const RunRecord* best = nullptr;
  for (const auto& r : res.phase2_records) {
    if (r.status == "failed") continue;
    res.best_failed_accuracy = std::max(res.best_failed_accuracy, r.accuracy);
    if (r.accuracy > cfg.rho && (!best || better_success(r, *best))) best = &r;
  }
  if (best) {
    res.best_record = *best;
    res.best_nnz = best->total_nnz;
    const ModelMask mask = space.mask(best->candidate);
    Job job{mask, winner, best->candidate, 2, best->seed, best->lr,
            parse_scheduler(best->scheduler)};
    auto trained = train_job(cfg, job, data);
    res.best_model = Checkpoint{std::move(trained.second), std::nullopt};
    res.best_mask = mask;
  }
  return res;
}

SearchResult combinatorial_search(const SearchConfig& cfg, const Dataset& data,
                                  Journal* journal) {
  const Phase1Result p1 = phase1(cfg, data, journal);
  if (!p1.winner) {
    SearchResult res;
    res.phase1_table = p1.table;
    for (const auto& e : p1.table) {
      res.best_failed_accuracy = std::max(res.best_failed_accuracy, e.best_accuracy);
    }
    return res;
  }
  SearchResult res = phase2(cfg, *p1.winner, data, journal);
  res.phase1_table = p1.table;
  return res;
}

SearchResult fixed_init_rerun(SearchConfig cfg, const Checkpoint& init, const Dataset& data,
                              Journal* journal) {
  if (init.model.arch.width != cfg.width) {
    throw std::invalid_argument("init width " + std::to_string(init.model.arch.width) +
                                " does not match search width " + std::to_string(cfg.width));
  }
  cfg.fixed_init = init;
  // The stored initialization is used unmasked; the search mask goes on top.
  cfg.fixed_init->model.mask = dense_mask(cfg.width);
  if (cfg.fixed_init_ref.empty()) cfg.fixed_init_ref = "ckpt:inline";
  return combinatorial_search(cfg, data, journal);
}

SearchFile search_file_from_doc(const ConfigDoc& doc) {
  SearchFile f;
  SearchConfig& c = f.config;
  c.width = static_cast<int>(doc.get_int("search.width", c.width));
  c.rho = doc.get_double("search.rho", c.rho);
  if (doc.has("search.lrs")) c.lrs = doc.get_doubles("search.lrs");
  if (doc.has("search.schedulers")) {
    c.schedulers.clear();
    for (const auto& n : doc.get_strings("search.schedulers")) c.schedulers.push_back(parse_scheduler(n));
  }
  c.seeds_per_mask = static_cast<int>(doc.get_int("search.seeds_per_mask", c.seeds_per_mask));
  if (doc.has("search.layer2_first_k")) c.subset_filter.layer2_first_k = doc.get_int("search.layer2_first_k");
  if (doc.has("search.max_model_nnz")) c.subset_filter.max_model_nnz = doc.get_int("search.max_model_nnz");
  if (doc.has("search.single_lr")) c.subset_filter.single_lr = doc.get_double("search.single_lr");
  const std::int64_t root = doc.get_int("search.root_seed", 0);
  if (root < 0) throw ConfigError("root_seed must be nonnegative");
  c.root_seed = static_cast<std::uint64_t>(root);
  const std::string fan_in = doc.get_string("search.fan_in", "dense");
  if (fan_in == "dense") {
    c.fan_in = FanInMode::dense;
  } else if (fan_in == "masked") {
    c.fan_in = FanInMode::masked;
  } else {
    throw ConfigError("fan_in must be dense or masked");
  }
  c.cost_ordered = doc.get_bool("search.cost_ordered", c.cost_ordered);
  c.phase2_limit = doc.get_int("search.phase2_limit", c.phase2_limit);
  c.stop_at_first_success = doc.get_bool("search.stop_at_first_success", c.stop_at_first_success);
  if (doc.has("search.fixed_init")) {
    const std::string path = doc.get_string("search.fixed_init");
    c.fixed_init = load_checkpoint(path);
    c.fixed_init_ref = "ckpt:" + path;
  }
  if (doc.has("search.winner")) f.winner = parse_neuron_config(doc.get_string("search.winner"));

  c.train.epochs = static_cast<int>(doc.get_int("train.epochs", c.train.epochs));
  c.train.batch_size = static_cast<int>(doc.get_int("train.batch_size", c.train.batch_size));
  c.train.momentum = doc.get_double("train.momentum", c.train.momentum);
  c.train.weight_decay = doc.get_double("train.weight_decay", c.train.weight_decay);

  f.data.variant = parse_spiral_variant(doc.get_string("data.variant", to_string(f.data.variant)));
  f.data.points_total = doc.get_int("data.points", f.data.points_total);

  if (const char* env = std::getenv("SPARSEST_SEED"); env && *env) {
    try {
      c.root_seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SPARSEST_SEED is not an unsigned integer: ") + env);
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return f;
}

}  // namespace sparsest
