#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sparsest/analysis.hpp"
#include "sparsest/bytes.hpp"
#include "sparsest/checkpoint.hpp"
#include "sparsest/parallel.hpp"
#include "sparsest/path_prob.hpp"
#include "sparsest/pruners.hpp"
#include "sparsest/runner.hpp"
#include "sparsest/search.hpp"
#include "sparsest/viz.hpp"

using namespace sparsest;

namespace {

bool has_extension(const std::string& path, const std::string& ext) {
  return std::filesystem::path(path).extension() == ext;
}

Dataset load_data(const std::string& path) {
  if (path.empty()) return generate(SpiralSpec{});
  return has_extension(path, ".bin") ? read_binary(path) : read_csv(path);
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("bad integer list: " + s);
    out.push_back(v);
  }
  return out;
}

void print_phase1(const Phase1Result& r, double rho, int width) {
  std::printf("config,cost,best_accuracy,lr,scheduler,seed\n");
  for (const auto& e : r.table) {
    std::printf("%s,%lld,%.4f,%g,%s,%llu\n", to_string(e.config).c_str(),
                static_cast<long long>(e.cost), e.best_accuracy, e.best_lr,
                to_string(e.best_scheduler).c_str(),
                static_cast<unsigned long long>(e.best_seed));
  }
  if (r.winner) {
    std::printf("winner %s cost %lld\n", to_string(*r.winner).c_str(),
                static_cast<long long>(structured_cost(*r.winner)));
  } else {
    std::printf("infeasible at width %d for rho %g\n", width, rho);
  }
}

void print_search(const SearchResult& r) {
  std::printf("candidates considered %lld, trained %lld\n",
              static_cast<long long>(r.candidates_considered),
              static_cast<long long>(r.candidates_trained));
  if (r.feasible()) {
    std::printf("best nnz %lld accuracy %.4f candidate %lld\n",
                static_cast<long long>(r.best_nnz), r.best_record->accuracy,
                static_cast<long long>(r.best_record->candidate));
    std::printf("mask %s\n", r.best_record->mask.c_str());
  } else {
    std::printf("infeasible; best accuracy %.4f\n", r.best_failed_accuracy);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse MLP search, pruning and analysis on spiral data"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

  // spiral gen
  auto* spiral = app.add_subcommand("spiral", "Spiral datasets")->require_subcommand(1);
  auto* gen = spiral->add_subcommand("gen", "Generate a spiral dataset");
  std::string variant = "cubist";
  SpiralSpec spec;
  std::string gen_out;
  gen->add_option("--variant", variant, "cubist or classic");
  gen->add_option("--n", spec.points_total, "Total points");
  gen->add_option("--quarter-turns", spec.quarter_turns);
  gen->add_option("--radius-step", spec.radius_step);
  gen->add_option("--inner-radius", spec.inner_radius);
  gen->add_option("--out", gen_out, "Output path (.bin for binary, else CSV)")->required();

  // search
  auto* search = app.add_subcommand("search", "Combinatorial search")->require_subcommand(1);
  auto* p1 = search->add_subcommand("phase1", "Structured neuron grid search");
  SearchConfig p1_cfg;
  std::string p1_data, p1_journal;
  int p1_max_neurons = 0;
  p1->add_option("--width", p1_cfg.width);
  p1->add_option("--rho", p1_cfg.rho);
  p1->add_option("--seeds", p1_cfg.seeds_per_mask, "Seeds per (config, lr, scheduler)");
  p1->add_option("--epochs", p1_cfg.train.epochs);
  p1->add_option("--root-seed", p1_cfg.root_seed);
  p1->add_option("--max-neurons", p1_max_neurons, "Restrict each layer to 1..n");
  p1->add_flag("--cost-ordered", p1_cfg.cost_ordered,
               "Visit configs by cost and stop at the first succeeding level");
  p1->add_option("--data", p1_data, "Dataset file (default: generated spiral)");
  p1->add_option("--journal", p1_journal, "Append run records here");

  auto* p2 = search->add_subcommand("phase2", "Unstructured mask sweep");
  std::string p2_config, p2_journal, p2_data, p2_winner, p2_out;
  p2->add_option("--config", p2_config, "Search config (TOML)")->required();
  p2->add_option("--resume", p2_journal, "Journal to append to and resume from")->required();
  p2->add_option("--winner", p2_winner, "Neuron config d1,d2,d3 (overrides search.winner)");
  p2->add_option("--data", p2_data);
  p2->add_option("--out", p2_out, "Checkpoint for the best model");

  // prune run
  auto* prune = app.add_subcommand("prune", "Pruning baselines")->require_subcommand(1);
  auto* prun = prune->add_subcommand("run", "Run one pruning method");
  std::string method = "gmp", sched = "cosine", init_from, prune_data, prune_journal,
              prune_out, policy = "global";
  int prune_width = 16, clamp = 0;
  std::int64_t budget = 44;
  std::uint64_t prune_seed = 0;
  TrainConfig prune_train;
  prun->add_option("--method", method);
  prun->add_option("--budget", budget, "Target weight nnz");
  prun->add_option("--width", prune_width);
  prun->add_option("--seed", prune_seed);
  prun->add_option("--lr", prune_train.lr);
  prun->add_option("--sched", sched, "constant, cosine or step_15_30");
  prun->add_option("--epochs", prune_train.epochs);
  prun->add_option("--policy", policy, "global, erk or uniform");
  prun->add_option("--clamp", clamp, "Restrict to a structured c,c,c block");
  prun->add_option("--init-from", init_from, "Initialization checkpoint");
  prun->add_option("--data", prune_data);
  prun->add_option("--journal", prune_journal, "Append the record here (default: stdout)");
  prun->add_option("--out", prune_out, "Final checkpoint path");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Model analysis")->require_subcommand(1);
  auto* paths = analyze->add_subcommand("paths", "Effective mask of a checkpoint");
  std::string paths_ckpt;
  paths->add_option("--ckpt", paths_ckpt)->required();
  auto* pareto = analyze->add_subcommand("pareto", "Pareto frontier of a journal");
  std::string pareto_in, pareto_out, pareto_method;
  pareto->add_option("--in", pareto_in)->required();
  pareto->add_option("--out", pareto_out)->required();
  pareto->add_option("--method", pareto_method, "Only records of this method");

  // theory
  auto* theory = app.add_subcommand("theory", "Random pruning theory")->require_subcommand(1);
  auto* pp = theory->add_subcommand("path-prob", "Probability of a disconnected layer pair");
  PathProbParams pp_params;
  std::string pp_nnz = "4,4,4,4";
  int pp_pair = 1;
  std::int64_t pp_trials = 100000;
  std::uint64_t pp_seed = 0;
  pp->add_option("--width", pp_params.width);
  pp->add_option("--nnz", pp_nnz, "Per-layer nnz, comma separated");
  pp->add_option("--pair", pp_pair, "Layer pair index (0-based)");
  pp->add_option("--trials", pp_trials);
  pp->add_option("--seed", pp_seed);

  // viz
  auto* viz = app.add_subcommand("viz", "Visualization")->require_subcommand(1);
  auto* vexp = viz->add_subcommand("export", "Render a checkpoint");
  std::string viz_ckpt, viz_out, viz_overlay, viz_data;
  VizSpec vspec;
  vexp->add_option("--ckpt", viz_ckpt)->required();
  vexp->add_option("--out", viz_out)->required();
  vexp->add_option("--grid", vspec.grid, "Heatmap resolution");
  vexp->add_flag("--html", vspec.html);
  vexp->add_flag("--include-dead", vspec.include_dead);
  vexp->add_option("--overlay", viz_overlay, "Also write a decision-region SVG here");
  vexp->add_option("--data", viz_data, "Dataset for the overlay");

  // run
  auto* run = app.add_subcommand("run", "Experiment sweeps")->require_subcommand(1);
  auto* sweep = run->add_subcommand("sweep", "Expand and run a sweep config");
  std::string sweep_config, sweep_journal = "runs.jsonl";
  int jobs = 1;
  sweep->add_option("--config", sweep_config)->required();
  sweep->add_option("--jobs", jobs);
  sweep->add_option("--journal", sweep_journal);
  auto* rep = run->add_subcommand("report", "Summarize a journal");
  std::string rep_journal = "runs.jsonl", rep_out = "report";
  rep->add_option("--journal", rep_journal);
  rep->add_option("--out", rep_out);
  auto* bi = run->add_subcommand("best-init", "Extract the best search initialization");
  std::string bi_journal, bi_out;
  double bi_rho = 0.95;
  int bi_width = 16;
  bi->add_option("--journal", bi_journal)->required();
  bi->add_option("--rho", bi_rho);
  bi->add_option("--width", bi_width);
  bi->add_option("--out", bi_out)->required();

  CLI11_PARSE(app, argc, argv);
  set_threads(threads);

  try {
    if (gen->parsed()) {
      spec.variant = parse_spiral_variant(variant);
      const Dataset d = generate(spec);
      if (has_extension(gen_out, ".bin")) {
        write_binary(d, gen_out);
      } else {
        write_csv(d, gen_out);
      }
      std::printf("wrote %zu points to %s\n", d.size(), gen_out.c_str());
    } else if (p1->parsed()) {
      if (p1_max_neurons > 0) {
        for (int a = 1; a <= p1_max_neurons; ++a)
          for (int b = 1; b <= p1_max_neurons; ++b)
            for (int c = 1; c <= p1_max_neurons; ++c) p1_cfg.candidates.push_back({a, b, c});
      }
      const Dataset data = load_data(p1_data);
      std::optional<Journal> journal;
      if (!p1_journal.empty()) journal.emplace(p1_journal);
      const Phase1Result r = phase1(p1_cfg, data, journal ? &*journal : nullptr);
      print_phase1(r, p1_cfg.rho, p1_cfg.width);
    } else if (p2->parsed()) {
      SearchFile f = search_file_from_doc(ConfigDoc::load(p2_config));
      if (!p2_winner.empty()) f.winner = parse_neuron_config(p2_winner);
      if (!f.winner) throw ConfigError("phase 2 needs search.winner or --winner");
      const Dataset data = p2_data.empty() ? generate(f.data) : load_data(p2_data);
      const auto resume = read_journal(p2_journal);
      Journal journal(p2_journal);
      const SearchResult r = phase2(f.config, *f.winner, data, &journal, resume);
      print_search(r);
      if (!p2_out.empty() && r.best_model) save_checkpoint(*r.best_model, p2_out);
    } else if (prun->parsed()) {
      prune_train.scheduler = parse_scheduler(sched);
      prune_train.seed = prune_seed;
      const PruneMethod m = parse_prune_method(method);
      PruneBudget pb;
      pb.target_weight_nnz = budget;
      if (policy == "global") {
        pb.policy = LayerPolicy::global;
      } else if (policy == "erk") {
        pb.policy = LayerPolicy::erk;
      } else if (policy == "uniform") {
        pb.policy = LayerPolicy::uniform;
      } else {
        throw std::invalid_argument("unknown policy " + policy);
      }
      PruneOptions opts;
      if (clamp > 0) opts.base = structured_mask({clamp, clamp, clamp}, prune_width);
      MaskedMlp init_model;
      std::string init_ref;
      if (init_from.empty()) {
        init_model = init(MlpArch{prune_width}, job_init_seed(0, prune_width, prune_seed));
        init_ref = "seed:" + std::to_string(prune_seed);
      } else {
        init_model = load_checkpoint(init_from).model;
        init_model.set_mask(dense_mask(init_model.arch.width));
        init_ref = "ckpt:" + init_from;
      }
      const Dataset data = load_data(prune_data);
      PruneResult r = run_pruner(m, init_model, data, prune_train, pb, opts);
      r.record.init_ref = init_ref;
      r.record.structured_clamp = clamp;
      if (!prune_out.empty()) {
        save_checkpoint({r.model, std::nullopt}, prune_out);
        r.record.checkpoint = prune_out;
      }
      if (prune_journal.empty()) {
        std::cout << to_json(r.record).dump() << "\n";
      } else {
        Journal(prune_journal).append(r.record);
        std::printf("%s accuracy %.4f weight nnz %lld\n", r.record.method.c_str(),
                    r.record.accuracy, static_cast<long long>(r.record.weight_nnz));
      }
    } else if (paths->parsed()) {
      const Checkpoint ck = load_checkpoint(paths_ckpt);
      const EffectiveMask em = effective_mask(ck.model.mask);
      std::printf("weight nnz %lld\n", static_cast<long long>(weight_nnz(ck.model.mask)));
      std::printf("effective nnz %lld\n", static_cast<long long>(em.effective_nnz));
      std::printf("disconnected weights %lld\n",
                  static_cast<long long>(em.disconnected_weight_count));
      for (int l = 0; l < kDepth - 1; ++l) {
        std::printf("dead neurons layer %d:", l + 1);
        for (int n : em.dead_neurons[l]) std::printf(" %d", n);
        std::printf("\n");
      }
    } else if (pareto->parsed()) {
      const auto records = read_journal(pareto_in);
      std::vector<ParetoPoint> pts;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.status != "ok" || (!pareto_method.empty() && r.method != pareto_method)) continue;
        pts.push_back({r.total_nnz, r.accuracy, i});
      }
      std::ostringstream os;
      os << "nnz,accuracy,job_id\n";
      for (const auto& p : pareto_frontier(pts)) {
        os << p.nnz << ',' << exact_decimal(p.accuracy) << ',' << records[p.source].job_id()
           << '\n';
      }
      write_file_text(pareto_out, os.str());
    } else if (pp->parsed()) {
      pp_params.nnz = parse_int_list(pp_nnz);
      pp_params.depth = static_cast<int>(pp_params.nnz.size());
      pp_params.validate();
      const double exact = path_prob_exact(pp_params, pp_pair);
      const MonteCarloEstimate mc =
          path_prob_monte_carlo(pp_params, pp_pair, pp_trials, pp_seed);
      std::printf("exact pair disconnection %.10f\n", exact);
      std::printf("monte carlo pair %.6f +- %.6f\n", mc.pair_estimate, mc.pair_std_error);
      std::printf("monte carlo model %.6f +- %.6f\n", mc.model_estimate, mc.model_std_error);
      std::printf("in theorem regime %s\n", pp_params.in_theorem_regime() ? "yes" : "no");
    } else if (vexp->parsed()) {
      const Checkpoint ck = load_checkpoint(viz_ckpt);
      RenderStats stats;
      write_file_text(viz_out, render(ck.model, vspec, &stats));
      std::printf("tiles %d/%d/%d edges %lld\n", stats.input_tiles, stats.hidden_tiles,
                  stats.output_tiles, static_cast<long long>(stats.edges));
      if (!viz_overlay.empty()) {
        write_file_text(viz_overlay,
                        render_dataset_overlay(ck.model, load_data(viz_data), vspec));
      }
    } else if (sweep->parsed()) {
      const SweepConfig cfg = SweepConfig::from_doc(ConfigDoc::load(sweep_config));
      Journal journal(sweep_journal);
      const SweepSummary s = expand_and_run(cfg, journal, jobs);
      std::printf("planned %lld skipped %lld executed %lld failed %lld\n",
                  static_cast<long long>(s.planned), static_cast<long long>(s.skipped),
                  static_cast<long long>(s.executed), static_cast<long long>(s.failed));
    } else if (rep->parsed()) {
      write_report(report(read_journal(rep_journal)), rep_out);
      std::printf("report written to %s\n", rep_out.c_str());
    } else if (bi->parsed()) {
      save_checkpoint(best_init_extract(read_journal(bi_journal), bi_rho, bi_width), bi_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
