#include <fstream>
#include <set>

#include "doctest.h"
#include "sparsest/search.hpp"

using namespace sparsest;

namespace {

Dataset tiny_spiral() {
  SpiralSpec s;
  s.points_total = 200;
  return generate(s);
}

SearchConfig quick_config(int width = 4) {
  SearchConfig c;
  c.width = width;
  c.lrs = {0.1};
  c.schedulers = {Scheduler::constant};
  c.train.epochs = 2;
  c.train.batch_size = 50;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sparsest_search_" + name);
  std::filesystem::remove(p);
  return p;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("candidate space sizes") {
  CHECK(CandidateSpace({3, 3, 3}, 16).size() == 25992);
  CHECK(CandidateSpace({1, 1, 1}, 16).size() == 1);
  CHECK(CandidateSpace({2, 2, 1}, 4).size() == 16);
  // Keeping 3 second-layer masks: 34 * 3 * 57 * 1.
  CHECK(CandidateSpace({7, 3, 3}, 16, 3).size() == 34 * 3 * 57);
  CHECK(CandidateSpace({7, 3, 3}, 16, 0).size() == 0);
}

TEST_CASE("candidate index is mixed radix with layer 1 slowest") {
  const CandidateSpace space({2, 2, 2}, 4);
  const std::int64_t n1 = static_cast<std::int64_t>(space.layer(0).size());
  const std::int64_t n2 = static_cast<std::int64_t>(space.layer(1).size());
  const std::int64_t n3 = static_cast<std::int64_t>(space.layer(2).size());
  const std::int64_t n4 = static_cast<std::int64_t>(space.layer(3).size());
  REQUIRE(space.size() == n1 * n2 * n3 * n4);
  std::set<std::string> seen;
  for (std::int64_t i = 0; i < space.size(); ++i) {
    const ModelMask m = space.mask(i);
    const std::int64_t digits[4] = {i / (n2 * n3 * n4), (i / (n3 * n4)) % n2, (i / n4) % n3, i % n4};
    for (int l = 0; l < kDepth; ++l) {
      const LayerMask& want = space.layer(l)[static_cast<std::size_t>(digits[l])];
      CHECK(m.weights[l] == want.padded(m.weights[l].rows(), m.weights[l].cols()));
    }
    CHECK(m == bias_mask_search(m));
    CHECK(space.total_nnz(i) == nnz(m, true));
    CHECK(seen.insert(format_mask_line(m)).second);
  }
}

TEST_CASE("candidates have no empty row or column in their active block") {
  const NeuronConfig cfg{3, 2, 2};
  const CandidateSpace space(cfg, 16);
  const auto dims = cfg.dims();
  for (std::int64_t i = 0; i < space.size(); i += 7) {
    const ModelMask m = space.mask(i);
    for (int l = 0; l < kDepth; ++l) {
      for (int r = 0; r < dims[l + 1]; ++r) CHECK(m.weights[l].row_any(r));
      for (int c = 0; c < dims[l]; ++c) CHECK(m.weights[l].col_any(c));
    }
    CHECK(space.total_nnz(i) <= structured_cost(cfg));
  }
}

TEST_CASE("search seeds") {
  CHECK(search_init_seed(0, 1, 5, 0) == search_init_seed(0, 1, 5, 0));
  std::set<std::uint64_t> seeds;
  for (int phase : {1, 2}) {
    for (std::uint64_t key = 0; key < 20; ++key) {
      for (int s = 0; s < 3; ++s) seeds.insert(search_init_seed(9, phase, key, s));
    }
  }
  CHECK(seeds.size() == 120);
}

TEST_CASE("config validation") {
  SearchConfig c = quick_config();
  CHECK_NOTHROW(c.validate());
  c.rho = 0.0;
  CHECK_THROWS(c.validate());
  c = quick_config();
  c.seeds_per_mask = 0;
  CHECK_THROWS(c.validate());
  c = quick_config();
  c.subset_filter.max_model_nnz = -1;
  CHECK_THROWS(c.validate());
  c = quick_config();
  c.candidates = {{5, 1, 1}};
  CHECK_THROWS(c.validate());
  c = quick_config();
  c.fixed_init = Checkpoint{init(MlpArch{8}, 0), std::nullopt};
  CHECK_THROWS(c.validate());
}

TEST_CASE("phase 1 picks the cheapest success") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.candidates = {{2, 2, 2}, {1, 1, 1}, {1, 2, 1}};
  c.rho = 0.4;  // every run beats this
  const Phase1Result r = phase1(c, d);
  REQUIRE(r.winner.has_value());
  CHECK(*r.winner == NeuronConfig{1, 1, 1});
  CHECK(r.table.size() == 3);

  c.cost_ordered = true;
  const Phase1Result fast = phase1(c, d);
  CHECK(fast.winner == r.winner);
  CHECK(fast.table.size() == 1);
}

TEST_CASE("unreachable targets are infeasible") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config(2);
  c.rho = 1.01;
  const Phase1Result r = phase1(c, d);
  CHECK_FALSE(r.winner.has_value());
  CHECK(r.table.size() == 8);
  const SearchResult s = combinatorial_search(c, d);
  CHECK_FALSE(s.feasible());
  CHECK(s.best_failed_accuracy >= 0.5);
}

TEST_CASE("a zero nnz filter leaves no candidates") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.subset_filter.max_model_nnz = 0;
  const SearchResult r = phase2(c, {2, 2, 1}, d);
  CHECK(r.candidates_considered == 0);
  CHECK_FALSE(r.feasible());
}

TEST_CASE("phase 2 finds the sparsest success") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.rho = 0.4;
  const SearchResult r = phase2(c, {2, 2, 1}, d);
  REQUIRE(r.feasible());
  CHECK(r.candidates_considered == 16);
  std::int64_t min_nnz = 1 << 30;
  for (const auto& rec : r.phase2_records) {
    CHECK(rec.phase == 2);
    CHECK(rec.neuron_config == "2,2,1");
    CHECK(rec.method == "comb_search");
    if (rec.accuracy > c.rho) min_nnz = std::min(min_nnz, rec.total_nnz);
  }
  CHECK(r.best_nnz == min_nnz);
  CHECK(r.best_nnz <= structured_cost({2, 2, 1}));
  REQUIRE(r.best_model.has_value());
  CHECK(accuracy(r.best_model->model, d) == r.best_record->accuracy);
  CHECK(r.best_model->model.mask == *r.best_mask);
}

TEST_CASE("phase 2 filters") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.subset_filter.max_model_nnz = 9;
  const SearchResult r = phase2(c, {2, 2, 1}, d);
  const CandidateSpace space({2, 2, 1}, 4);
  std::int64_t want = 0;
  for (std::int64_t i = 0; i < space.size(); ++i) want += space.total_nnz(i) <= 9;
  CHECK(r.candidates_considered == want);

  c = quick_config();
  c.lrs = {0.05, 0.1};
  c.subset_filter.single_lr = 0.05;
  const SearchResult single = phase2(c, {1, 1, 1}, d);
  REQUIRE(single.phase2_records.size() == 1);
  CHECK(single.phase2_records[0].lr == 0.05);

  c = quick_config();
  c.rho = 0.4;
  c.stop_at_first_success = true;
  // Candidates train in blocks of 64; the search stops after the block
  // holding the first success.
  CHECK(CandidateSpace({3, 3, 1}, 4).size() == 456);
  CHECK(phase2(c, {3, 3, 1}, d).phase2_records.size() == 64);
}

TEST_CASE("phase 2 resumes from its journal") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.rho = 0.4;
  const auto path = temp_path("resume.jsonl");
  Journal j(path);
  const SearchResult first = phase2(c, {2, 2, 1}, d, &j);
  CHECK(line_count(path) == 16);

  const auto records = read_journal(path);
  const SearchResult again = phase2(c, {2, 2, 1}, d, &j, records);
  CHECK(line_count(path) == 16);
  CHECK(again.best_nnz == first.best_nnz);
  CHECK(again.best_record->job_id() == first.best_record->job_id());

  // A partial journal trains only the missing candidates, with identical results.
  const std::vector<RunRecord> partial(records.begin(), records.begin() + 5);
  const auto path2 = temp_path("partial.jsonl");
  Journal j2(path2);
  const SearchResult resumed = phase2(c, {2, 2, 1}, d, &j2, partial);
  CHECK(line_count(path2) == 11);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(resumed.phase2_records[i].job_id() == first.phase2_records[i].job_id());
    CHECK(resumed.phase2_records[i].accuracy == first.phase2_records[i].accuracy);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("fixed initialization") {
  const Dataset d = tiny_spiral();
  SearchConfig c = quick_config();
  c.rho = 0.4;
  c.candidates = {{1, 1, 1}, {2, 1, 1}};
  const Checkpoint ck{init(MlpArch{4}, 77), std::nullopt};
  const SearchResult a = fixed_init_rerun(c, ck, d);
  const SearchResult b = fixed_init_rerun(c, ck, d);
  REQUIRE(a.feasible());
  CHECK(a.best_record->init_ref == "ckpt:inline");
  CHECK(a.best_record->accuracy == b.best_record->accuracy);
  CHECK(a.best_model->model.params == b.best_model->model.params);
  CHECK_THROWS(fixed_init_rerun(c, Checkpoint{init(MlpArch{8}, 0), std::nullopt}, d));
}

TEST_CASE("search config files") {
  const char* text = R"(
[search]
width = 8
rho = 0.995
lrs = [0.05]
schedulers = ["cosine", "step_15_30"]
layer2_first_k = 3
max_model_nnz = 49
single_lr = 0.05
winner = "7,3,3"
root_seed = 12

[train]
epochs = 10

[data]
points = 1000
)";
  const SearchFile f = search_file_from_doc(ConfigDoc::parse(text));
  CHECK(f.config.width == 8);
  CHECK(f.config.rho == 0.995);
  CHECK(f.config.schedulers == std::vector<Scheduler>{Scheduler::cosine, Scheduler::step_15_30});
  CHECK(f.config.subset_filter.layer2_first_k == 3);
  CHECK(f.config.subset_filter.max_model_nnz == 49);
  CHECK(f.config.subset_filter.single_lr == 0.05);
  CHECK(f.winner == NeuronConfig{7, 3, 3});
  CHECK(f.config.train.epochs == 10);
  CHECK(f.data.points_total == 1000);
  CHECK_THROWS_AS(search_file_from_doc(ConfigDoc::parse("[search]\nseeds_per_mask = 0\n")), ConfigError);
  CHECK_THROWS_AS(search_file_from_doc(ConfigDoc::parse("[search]\nfan_in = \"odd\"\n")), ConfigError);
}
