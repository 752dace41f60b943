#include "steinflow/run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "steinflow/tensor_io.hpp"

namespace steinflow::run {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string indexed(const char* pattern, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, i);
  return buf;
}

// Refuse to write into a directory that holds something other than an
// earlier run; clear the artifacts of an earlier run.
void prepare_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    const auto manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
      json old;
      try {
        std::ifstream f(manifest);
        old = json::parse(f);
      } catch (const json::exception&) {
        throw ConfigError("output directory " + dir.string() + " has an unreadable manifest");
      }
      for (const auto& a : old.value("artifacts", json::array())) {
        if (a.contains("path")) fs::remove(dir / a["path"].get<std::string>());
      }
      fs::remove(manifest);
    }
    for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
      if (it->is_regular_file()) {
        throw ConfigError("output directory " + dir.string() + " is not empty and not a previous run");
      }
    }
  }
  fs::create_directories(dir);
}

json artifact(const fs::path& dir, const std::string& rel) {
  const auto p = dir / rel;
  return {{"path", rel}, {"sha256", io::sha256_file(p)}, {"bytes", fs::file_size(p)}};
}

json base_manifest(const std::string& command, const cfg::RunConfig& config) {
  return {{"software", kSoftware},
          {"command", command},
          {"config_hash", config.hash()},
          {"seed", config.seed()},
          {"config", config.tree},
          {"config_base_dir", config.base_dir.string()}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

class MetricsStream {
 public:
  explicit MetricsStream(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path.string());
  }
  void operator()(const StepRecord& r) {
    out_ << record_json(r).dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

json records_json(const std::vector<StepRecord>& records) {
  json out = json::array();
  for (const auto& r : records) out.push_back(record_json(r));
  return out;
}

}  // namespace

json record_json(const StepRecord& r) {
  return {{"t", r.t},
          {"tau", r.tau},
          {"bandwidth", number_or_null(r.bandwidth)},
          {"mean_log_density", number_or_null(r.mean_log_density)},
          {"mean_pairwise_distance", number_or_null(r.mean_pairwise_distance)}};
}

fs::path output_dir(const std::string& command, const cfg::RunConfig& config, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  const auto& configured = config.tree["output"]["dir"];
  if (configured.is_string()) {
    fs::path p(configured.get<std::string>());
    return p.is_absolute() || config.base_dir.empty() ? p : config.base_dir / p;
  }
  const char* root = std::getenv("STEINFLOW_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (command + "-" + config.hash().substr(0, 12) + "-s" + std::to_string(config.seed()));
}

json cmd_sample(const cfg::RunConfig& config, const fs::path& dir) {
  const auto start = Clock::now();
  CompositeTarget target = cfg::build_target(config);
  const AnnealConfig anneal = config.anneal();
  prepare_dir(dir);
  MetricsStream metrics(dir / "metrics.jsonl");
  const auto result = anneal_sample(target, anneal, std::ref(metrics));

  json manifest = base_manifest("sample", config);
  json artifacts = json::array({artifact(dir, "metrics.jsonl")});
  for (int l = 0; l < result.ensemble.size(); ++l) {
    const auto rel = indexed("samples/particle_%03d.sft", l);
    io::write_tensor(dir / rel, result.ensemble.particle(l));
    artifacts.push_back(artifact(dir, rel));
  }
  manifest["artifacts"] = artifacts;
  manifest["records"] = records_json(result.records);
  manifest["wall_clock_seconds"] = seconds_since(start);
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

json cmd_extend(const cfg::RunConfig& config, const fs::path& dir) {
  const auto start = Clock::now();
  SegmentPlan plan = cfg::build_plan(config);
  const AnnealConfig anneal = config.anneal();
  prepare_dir(dir);
  std::vector<std::unique_ptr<MetricsStream>> streams;
  for (int s = 1; s <= plan.count(); ++s) {
    fs::create_directories(dir / indexed("segment_%02d", s));
    streams.push_back(std::make_unique<MetricsStream>(dir / indexed("segment_%02d/metrics.jsonl", s)));
  }
  const auto result = extend(std::move(plan), anneal, cfg::overlap_context(config),
                             [&](int segment, const StepRecord& r) { (*streams[std::size_t(segment - 1)])(r); });
  streams.clear();

  json manifest = base_manifest("extend", config);
  json artifacts = json::array();
  json segments = json::array();
  for (std::size_t s = 0; s < result.segments.size(); ++s) {
    const int idx = int(s) + 1;
    const auto& seg = result.segments[s];
    json seg_manifest{{"segment", idx},
                      {"overlap_error", seg.overlap_error},
                      {"records", records_json(seg.run.records)}};
    const auto rel = indexed("segment_%02d/manifest.json", idx);
    write_json(dir / rel, seg_manifest);
    artifacts.push_back(artifact(dir, rel));
    artifacts.push_back(artifact(dir, indexed("segment_%02d/metrics.jsonl", idx)));
    segments.push_back({{"segment", idx}, {"manifest", rel}, {"overlap_error", seg.overlap_error}});
  }
  io::write_tensor(dir / "sequence.sft", result.sequence);
  artifacts.push_back(artifact(dir, "sequence.sft"));
  manifest["artifacts"] = artifacts;
  manifest["segments"] = segments;
  manifest["total_frames"] = result.sequence.shape().n;
  manifest["wall_clock_seconds"] = seconds_since(start);
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

json cmd_invert(const cfg::RunConfig& config, const fs::path& dir) {
  const auto start = Clock::now();
  if (config.tree["context"]["source"] != "inversion") {
    throw ConfigError("invert needs context.source = \"inversion\"");
  }
  const CompositeTarget target = cfg::build_target(config);
  prepare_dir(dir);
  const auto& ctx = *target.context;
  json artifacts = json::array();
  for (int t = 0; t <= ctx.steps(); ++t) {
    const auto path = cfg::context_file(dir, t);
    io::write_tensor(path, ctx.at(t));
    artifacts.push_back(artifact(dir, path.filename().string()));
  }
  const LatticeField regenerated =
      rf_generate(ctx.at(ctx.steps()), cfg::context_velocity_field(config, target), target.ladder);
  json manifest = base_manifest("invert", config);
  manifest["artifacts"] = artifacts;
  manifest["steps"] = ctx.steps();
  manifest["roundtrip_relative_error"] = relative_l2(regenerated, ctx.reference());
  manifest["wall_clock_seconds"] = seconds_since(start);
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

json read_manifest(const fs::path& run_dir) {
  const auto p = run_dir / "manifest.json";
  if (!fs::exists(p)) throw NotARunError(run_dir.string() + " has no manifest.json");
  try {
    std::ifstream f(p);
    json j = json::parse(f);
    if (!j.is_object() || !j.contains("software") || !j.contains("artifacts")) {
      throw NotARunError(p.string() + " is not a run manifest");
    }
    return j;
  } catch (const json::exception& e) {
    throw NotARunError(p.string() + ": " + e.what());
  }
}

cfg::RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  fs::path base = path.parent_path();
  if (j.is_object() && j.contains("software") && j.contains("config")) {
    if (j.contains("config_base_dir")) base = j["config_base_dir"].get<std::string>();
    j = j["config"];
  }
  for (const auto& o : overrides) cfg::apply_override(j, o);
  return cfg::parse_config(j, base);
}

namespace {

struct Oracle {
  bool available = false;
  double mean = 0.0;
  double variance = 0.0;
};

Oracle product_oracle(const cfg::RunConfig& config) {
  const auto& experts = config.tree["experts"];
  std::vector<GmmExpert> gaussians;
  for (const auto& e : experts) {
    const bool plain = e.value("type", "gmm") == "gmm" && !e.contains("components") && e.value("weight", 1.0) == 1.0 &&
                       (!e.contains("mask") || e["mask"] == "full") &&
                       (!e.contains("region") || e["region"].is_null());
    if (!plain) return {};
    gaussians.push_back(GmmExpert::gaussian(
        cfg::resolve_field(e["mean"], config.shape(), config.base_dir, "experts.mean"), e["variance"].get<double>()));
  }
  if (config.tree["context"]["source"] != "none" || config.segment_count() > 1) return {};
  const auto m = product_oracle_moments(gaussians);
  return {true, m.mean.array().mean(), m.variance};
}

std::string csv_number(const json& v) {
  if (v.is_null()) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v.get<double>());
  return buf;
}

}  // namespace

json cmd_metrics(const std::vector<fs::path>& runs, const fs::path& dir) {
  if (runs.empty()) throw NotARunError("no run directories given");
  std::vector<json> rows;
  std::string trajectory = "run,t,tau,mean_log_density,bandwidth,mean_pairwise_distance\n";
  for (const auto& run : runs) {
    const json manifest = read_manifest(run);
    const auto config = cfg::parse_config(manifest.at("config"), manifest.value("config_base_dir", ""));
    std::vector<LatticeField> samples;
    for (const auto& a : manifest["artifacts"]) {
      const auto rel = a["path"].get<std::string>();
      if (rel.rfind("samples/", 0) == 0 || rel == "sequence.sft") samples.push_back(io::read_tensor(run / rel));
    }
    json row{{"run", run.string()}, {"command", manifest.value("command", "")}, {"seed", manifest.value("seed", 0)}};
    row["particles"] = samples.size();
    if (!samples.empty()) {
      Eigen::MatrixXd mat(Eigen::Index(samples.size()), samples.front().size());
      for (std::size_t l = 0; l < samples.size(); ++l) mat.row(Eigen::Index(l)) = samples[l].array().matrix().transpose();
      row["sample_mean"] = mat.mean();
      if (mat.rows() > 1) {
        const Eigen::RowVectorXd mu = mat.colwise().mean();
        row["sample_var"] = (mat.rowwise() - mu).array().square().colwise().mean().mean();
        row["diversity"] = mean_pairwise_distance(mat);
      } else {
        row["sample_var"] = (mat.array() - mat.mean()).square().mean();
        row["diversity"] = nullptr;
      }
    }
    const auto oracle = product_oracle(config);
    row["oracle_mean"] = oracle.available ? json(oracle.mean) : json(nullptr);
    row["oracle_var"] = oracle.available ? json(oracle.variance) : json(nullptr);
    double worst_overlap = std::numeric_limits<double>::quiet_NaN();
    json records = manifest.value("records", json::array());
    if (manifest.contains("segments")) {
      worst_overlap = 0.0;
      for (const auto& s : manifest["segments"]) worst_overlap = std::max(worst_overlap, s["overlap_error"].get<double>());
      const auto last = manifest["segments"].back()["manifest"].get<std::string>();
      std::ifstream f(run / last);
      records = json::parse(f).value("records", json::array());
    }
    row["overlap_error_max"] = number_or_null(worst_overlap);
    row["initial_log_density"] = records.empty() ? json(nullptr) : records.front()["mean_log_density"];
    row["final_log_density"] = records.empty() ? json(nullptr) : records.back()["mean_log_density"];
    for (const auto& r : records) {
      trajectory += run.string() + "," + std::to_string(r["t"].get<int>()) + "," + csv_number(r["tau"]) + "," +
                    csv_number(r["mean_log_density"]) + "," + csv_number(r["bandwidth"]) + "," +
                    csv_number(r["mean_pairwise_distance"]) + "\n";
    }
    rows.push_back(row);
  }

  static const char* const columns[] = {"run", "command", "seed", "particles", "sample_mean", "sample_var",
                                        "oracle_mean", "oracle_var", "diversity", "overlap_error_max",
                                        "initial_log_density", "final_log_density"};
  std::string summary;
  for (const char* c : columns) summary += std::string(summary.empty() ? "" : ",") + c;
  summary += "\n";
  for (const auto& row : rows) {
    std::string line;
    for (const char* c : columns) {
      const auto& v = row[c];
      std::string cell = v.is_string() ? v.get<std::string>() : v.is_number_float() ? csv_number(v) : v.is_null() ? "" : v.dump();
      line += (line.empty() && c == columns[0] ? "" : ",") + cell;
    }
    summary += line + "\n";
  }

  prepare_dir(dir);
  {
    std::ofstream(dir / "summary.csv", std::ios::trunc) << summary;
    std::ofstream(dir / "density_trajectory.csv", std::ios::trunc) << trajectory;
  }
  json manifest{{"software", kSoftware},
                {"command", "metrics"},
                {"runs", json::array()},
                {"rows", rows},
                {"artifacts", json::array({artifact(dir, "summary.csv"), artifact(dir, "density_trajectory.csv")})}};
  for (const auto& r : runs) manifest["runs"].push_back(r.string());
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace steinflow::run
