#include "sparsest/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <unordered_set>

#include "sparsest/bytes.hpp"
#include "sparsest/rng.hpp"

namespace sparsest {
namespace {

constexpr std::uint64_t kTagJobInit = 0x6a6f62;

RunRecord identity(const SweepJob& job) {
  RunRecord r;
  r.method = to_string(job.method);
  r.width = job.width;
  r.budget = job.budget;
  r.lr = job.lr;
  r.scheduler = to_string(job.scheduler);
  r.seed = job.seed;
  r.init_ref = job.init_ref;
  r.structured_clamp = job.structured_clamp;
  return r;
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_text(path, text);
}

}  // namespace

const std::vector<int>& benchmark_widths() {
  static const std::vector<int> v = {3, 4, 5, 6, 7, 8, 16, 32, 64, 128, 256};
  return v;
}

SweepConfig SweepConfig::from_doc(const ConfigDoc& doc) {
  SweepConfig s;
  if (doc.has("sweep.widths")) {
    s.widths.clear();
    for (auto w : doc.get_ints("sweep.widths")) s.widths.push_back(static_cast<int>(w));
  }
  if (doc.has("sweep.budgets")) s.budgets = doc.get_ints("sweep.budgets");
  if (doc.has("sweep.methods")) {
    for (const auto& m : doc.get_strings("sweep.methods")) s.methods.push_back(parse_prune_method(m));
  }
  if (doc.has("sweep.lrs")) s.lrs = doc.get_doubles("sweep.lrs");
  if (doc.has("sweep.schedulers")) {
    s.schedulers.clear();
    for (const auto& n : doc.get_strings("sweep.schedulers")) s.schedulers.push_back(parse_scheduler(n));
  }
  if (doc.has("sweep.seeds")) {
    s.seeds.clear();
    for (auto v : doc.get_ints("sweep.seeds")) {
      if (v < 0) throw ConfigError("seeds must be nonnegative");
      s.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (doc.has("sweep.init_from")) s.init_from = doc.get_string("sweep.init_from");
  s.structured_clamp = static_cast<int>(doc.get_int("sweep.structured_clamp", 0));
  s.root_seed = static_cast<std::uint64_t>(doc.get_int("sweep.root_seed", 0));
  if (doc.has("sweep.checkpoint_dir")) s.checkpoint_dir = doc.get_string("sweep.checkpoint_dir");

  s.train.epochs = static_cast<int>(doc.get_int("train.epochs", s.train.epochs));
  s.train.batch_size = static_cast<int>(doc.get_int("train.batch_size", s.train.batch_size));
  s.train.momentum = doc.get_double("train.momentum", s.train.momentum);
  s.train.weight_decay = doc.get_double("train.weight_decay", s.train.weight_decay);

  s.data.variant = parse_spiral_variant(doc.get_string("data.variant", to_string(s.data.variant)));
  s.data.points_total = doc.get_int("data.points", s.data.points_total);

  if (const char* env = std::getenv("SPARSEST_SEED"); env && *env) {
    try {
      s.root_seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SPARSEST_SEED is not an unsigned integer: ") + env);
    }
  }
  s.validate();
  return s;
}

void SweepConfig::validate() const {
  for (int w : widths) {
    if (w < 1) throw ConfigError("widths must be >= 1");
  }
  for (auto b : budgets) {
    if (b < 0) throw ConfigError("budgets must be nonnegative");
  }
  if (structured_clamp < 0) throw ConfigError("structured_clamp must be nonnegative");
  TrainConfig t = train;
  for (double lr : lrs) {
    t.lr = lr;
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

std::string SweepJob::job_id() const { return identity(*this).job_id(); }

std::uint64_t job_init_seed(std::uint64_t root, int width, std::uint64_t seed) {
  return derive_seed(root, kTagJobInit, static_cast<std::uint64_t>(width), seed);
}

std::vector<SweepJob> expand(const SweepConfig& sweep) {
  sweep.validate();
  std::vector<SweepJob> jobs;
  std::set<std::string> seen;
  for (PruneMethod m : sweep.methods) {
    for (int w : sweep.widths) {
      for (auto b : sweep.budgets) {
        for (double lr : sweep.lrs) {
          for (Scheduler s : sweep.schedulers) {
            for (auto seed : sweep.seeds) {
              SweepJob j;
              j.method = m;
              j.width = w;
              // Dense training ignores the budget.
              j.budget = m == PruneMethod::dense ? 0 : b;
              j.lr = lr;
              j.scheduler = s;
              j.seed = seed;
              j.init_ref = sweep.init_from ? "ckpt:" + sweep.init_from->string()
                                           : "seed:" + std::to_string(job_init_seed(sweep.root_seed, w, seed));
              j.structured_clamp = sweep.structured_clamp;
              const std::string id = j.job_id();
              if (!seen.insert(id).second) {
                if (m == PruneMethod::dense && b != sweep.budgets.front()) continue;
                throw ConfigError("duplicate job " + id);
              }
              jobs.push_back(j);
            }
          }
        }
      }
    }
  }
  std::sort(jobs.begin(), jobs.end(),
            [](const SweepJob& a, const SweepJob& b) { return a.job_id() < b.job_id(); });
  return jobs;
}

RunRecord run_job(const SweepJob& job, const SweepConfig& sweep, const Dataset& data) {
  try {
    const MlpArch arch{job.width};
    MaskedMlp start;
    if (sweep.init_from) {
      start = load_checkpoint(*sweep.init_from).model;
      if (start.arch.width != job.width) {
        throw std::invalid_argument("init checkpoint width " + std::to_string(start.arch.width) +
                                    " does not match job width " + std::to_string(job.width));
      }
      start.set_mask(dense_mask(job.width));
    } else {
      start = init(arch, job_init_seed(sweep.root_seed, job.width, job.seed));
    }
    TrainConfig cfg = sweep.train;
    cfg.lr = job.lr;
    cfg.scheduler = job.scheduler;
    cfg.seed = job_init_seed(sweep.root_seed, job.width, job.seed);
    PruneOptions opt;
    if (job.structured_clamp > 0 && job.structured_clamp < job.width) {
      const int c = job.structured_clamp;
      opt.base = structured_mask({c, c, c}, job.width);
    }
    PruneResult res = run_pruner(job.method, start, data, cfg, {job.budget, LayerPolicy::global}, opt);
    RunRecord r = res.record;
    const RunRecord id = identity(job);
    r.method = id.method;
    r.width = id.width;
    r.budget = id.budget;
    r.seed = id.seed;
    r.init_ref = id.init_ref;
    r.structured_clamp = id.structured_clamp;
    if (sweep.checkpoint_dir) {
      const auto path = *sweep.checkpoint_dir / (file_safe(r.job_id()) + ".ckpt");
      save_checkpoint({res.model, std::nullopt}, path);
      r.checkpoint = path.string();
    }
    return r;
  } catch (const std::exception& e) {
    RunRecord r = identity(job);
    r.status = "failed";
    r.error = e.what();
    return r;
  }
}

SweepSummary expand_and_run(const SweepConfig& sweep, Journal& journal, int jobs) {
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  const auto all = expand(sweep);
  std::unordered_set<std::string> done;
  for (const auto& r : read_journal(journal.path())) done.insert(r.job_id());

  SweepSummary sum;
  sum.planned = static_cast<std::int64_t>(all.size());
  std::vector<SweepJob> pending;
  for (const auto& j : all) {
    if (done.count(j.job_id())) {
      ++sum.skipped;
    } else {
      pending.push_back(j);
    }
  }
  if (pending.empty()) return sum;
  const Dataset data = generate(sweep.data);

  // Waves of `jobs` workers; records are journaled in job order after each wave.
  for (std::size_t lo = 0; lo < pending.size(); lo += static_cast<std::size_t>(jobs)) {
    const std::size_t hi = std::min(pending.size(), lo + static_cast<std::size_t>(jobs));
    std::vector<RunRecord> out(hi - lo);
    const auto n = static_cast<std::int64_t>(hi - lo);
#pragma omp parallel for num_threads(jobs) schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] = run_job(pending[lo + static_cast<std::size_t>(i)], sweep, data);
    }
    for (const auto& r : out) {
      journal.append(r);
      ++sum.executed;
      if (r.status == "failed") ++sum.failed;
    }
  }
  return sum;
}

Report report(const std::vector<RunRecord>& journal) {
  Report rep;
  std::map<std::string, std::vector<ParetoPoint>> points;
  std::map<std::string, std::pair<double, std::int64_t>> flops_sum;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < journal.size(); ++i) {
    const RunRecord& r = journal[i];
    if (r.status == "failed") continue;
    // Re-ingesting the same job twice must not change the report.
    if (!seen.insert(r.job_id()).second) continue;
    auto& best = rep.best_by_nnz[r.method];
    auto it = best.find(r.total_nnz);
    if (it == best.end() || r.accuracy > it->second) best[r.total_nnz] = r.accuracy;
    points[r.method].push_back({r.total_nnz, r.accuracy, i});
    auto& f = flops_sum[r.method];
    f.first += r.flops;
    ++f.second;
  }
  for (const auto& [method, pts] : points) {
    rep.frontiers[method] = pareto_frontier(pts);
    std::vector<SparsestSuccess> rows;
    for (double th : kReportThresholds) {
      SparsestSuccess s;
      s.threshold = th;
      const RunRecord* best = nullptr;
      for (const auto& p : pts) {
        const RunRecord& r = journal[p.source];
        if (r.accuracy < th) continue;
        if (!best || r.total_nnz < best->total_nnz ||
            (r.total_nnz == best->total_nnz && r.accuracy > best->accuracy)) {
          best = &r;
        }
      }
      if (best) {
        s.nnz = best->total_nnz;
        s.accuracy = best->accuracy;
        s.job_id = best->job_id();
      }
      rows.push_back(s);
    }
    rep.sparsest[method] = rows;
    const auto& f = flops_sum[method];
    rep.flops[method] = f.first / static_cast<double>(f.second);
  }
  return rep;
}

void write_report(const Report& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> summary = {"method,nnz,best_accuracy"};
  for (const auto& [method, rows] : r.best_by_nnz) {
    for (const auto& [n, acc] : rows) {
      summary.push_back(method + "," + std::to_string(n) + "," + exact_decimal(acc));
    }
  }
  write_lines(dir / "summary.csv", summary);

  std::vector<std::string> sparsest = {"method,threshold,nnz,accuracy,job_id"};
  for (const auto& [method, rows] : r.sparsest) {
    for (const auto& s : rows) {
      sparsest.push_back(method + "," + exact_decimal(s.threshold) + "," +
                         (s.nnz ? std::to_string(*s.nnz) : "none") + "," +
                         (s.accuracy ? exact_decimal(*s.accuracy) : "none") + "," + s.job_id);
    }
  }
  write_lines(dir / "sparsest.csv", sparsest);

  std::vector<std::string> fl = {"method,mean_flops"};
  for (const auto& [method, v] : r.flops) fl.push_back(method + "," + exact_decimal(v));
  write_lines(dir / "flops.csv", fl);

  for (const auto& [method, front] : r.frontiers) {
    std::vector<std::string> rows = {"nnz,accuracy"};
    for (const auto& p : front) rows.push_back(std::to_string(p.nnz) + "," + exact_decimal(p.accuracy));
    write_lines(dir / ("frontier_" + file_safe(method) + ".csv"), rows);
  }
}

Checkpoint best_init_extract(const std::vector<RunRecord>& journal, double rho, int width) {
  const RunRecord* best = nullptr;
  for (const auto& r : journal) {
    if (r.method != "comb_search" || r.width != width || r.status != "ok") continue;
    if (!(r.accuracy > rho)) continue;
    if (!best || r.total_nnz < best->total_nnz ||
        (r.total_nnz == best->total_nnz &&
         (r.accuracy > best->accuracy || (r.accuracy == best->accuracy && r.seed < best->seed)))) {
      best = &r;
    }
  }
  if (!best) {
    throw std::runtime_error("no comb-search success above " + exact_decimal(rho) +
                             " at width " + std::to_string(width));
  }
  const std::string& ref = best->init_ref;
  Checkpoint ck;
  if (ref.rfind("seed:", 0) == 0) {
    ck.model = init(MlpArch{width}, std::stoull(ref.substr(5)));
  } else if (ref.rfind("ckpt:", 0) == 0 && std::filesystem::exists(ref.substr(5))) {
    ck.model = load_checkpoint(ref.substr(5)).model;
    ck.model.mask = dense_mask(width);
  } else {
    throw std::runtime_error("cannot resolve init reference '" + ref + "'");
  }
  ck.model.mask.provenance = best->job_id();
  return ck;
}

}  // namespace sparsest
