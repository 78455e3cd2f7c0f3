#include "sparsest/record.hpp"

#include <fstream>
#include <sstream>

#include "sparsest/bytes.hpp"

namespace sparsest {

std::string RunRecord::job_id() const {
  std::ostringstream os;
  os << method << '|' << width << '|' << budget << '|' << exact_decimal(lr) << '|'
     << scheduler << '|' << seed << '|' << init_ref << '|' << structured_clamp;
  if (phase != 0 || candidate >= 0) {
    os << '|' << phase << '|' << neuron_config << '|' << candidate;
  }
  return os.str();
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["schema"] = kRecordSchemaVersion;
  j["method"] = r.method;
  j["width"] = r.width;
  j["budget"] = r.budget;
  j["lr"] = r.lr;
  j["scheduler"] = r.scheduler;
  j["seed"] = r.seed;
  j["init_ref"] = r.init_ref;
  j["structured_clamp"] = r.structured_clamp;
  j["neuron_config"] = r.neuron_config;
  j["candidate"] = r.candidate;
  j["phase"] = r.phase;
  j["accuracy"] = r.accuracy;
  if (r.eval_accuracy) j["eval_accuracy"] = *r.eval_accuracy;
  j["final_loss"] = r.final_loss;
  j["weight_nnz"] = r.weight_nnz;
  j["total_nnz"] = r.total_nnz;
  j["effective_nnz"] = r.effective_nnz;
  j["flops"] = r.flops;
  j["wall_time_s"] = r.wall_time_s;
  j["status"] = r.status;
  j["diverged"] = r.diverged;
  j["layer_collapse"] = r.layer_collapse;
  if (!r.meta_gradient.empty()) j["meta_gradient"] = r.meta_gradient;
  if (!r.error.empty()) j["error"] = r.error;
  j["loss_fn"] = r.loss_fn;
  j["mask"] = r.mask;
  if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
  return j;
}

RunRecord record_from_json(const nlohmann::json& j) {
  const int schema = j.value("schema", 0);
  if (schema != kRecordSchemaVersion) {
    throw FormatError("unsupported record schema " + std::to_string(schema));
  }
  RunRecord r;
  r.method = j.at("method").get<std::string>();
  r.width = j.at("width").get<int>();
  r.budget = j.at("budget").get<std::int64_t>();
  r.lr = j.at("lr").get<double>();
  r.scheduler = j.at("scheduler").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.init_ref = j.value("init_ref", "");
  r.structured_clamp = j.value("structured_clamp", 0);
  r.neuron_config = j.value("neuron_config", "");
  r.candidate = j.value("candidate", std::int64_t{-1});
  r.phase = j.value("phase", 0);
  r.accuracy = j.at("accuracy").get<double>();
  if (j.contains("eval_accuracy")) r.eval_accuracy = j["eval_accuracy"].get<double>();
  r.final_loss = j.value("final_loss", 0.0);
  r.weight_nnz = j.value("weight_nnz", std::int64_t{0});
  r.total_nnz = j.value("total_nnz", std::int64_t{0});
  r.effective_nnz = j.value("effective_nnz", std::int64_t{0});
  r.flops = j.value("flops", 0.0);
  r.wall_time_s = j.value("wall_time_s", 0.0);
  r.status = j.value("status", "ok");
  r.diverged = j.value("diverged", false);
  r.layer_collapse = j.value("layer_collapse", false);
  r.meta_gradient = j.value("meta_gradient", "");
  r.error = j.value("error", "");
  r.loss_fn = j.value("loss_fn", "bce_with_logits");
  r.mask = j.value("mask", "");
  r.checkpoint = j.value("checkpoint", "");
  return r;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // A crash can leave a partial last line; terminate it so the next append
  // starts on a fresh line and the fragment stays unparseable.
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    std::ifstream in(path_, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = 0;
    in.get(last);
    if (last != '\n') {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      out << '\n';
    }
  }
}

void Journal::append(const RunRecord& r) {
  const std::string line = to_json(r).dump() + "\n";
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open journal " + path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw std::runtime_error("journal write failed: " + path_.string());
}

std::vector<RunRecord> read_journal(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn write
    out.push_back(record_from_json(j));
  }
  return out;
}

}  // namespace sparsest
