#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "steinflow/config.hpp"
#include "steinflow/remote.hpp"
#include "steinflow/run.hpp"

namespace {

using nlohmann::json;
using namespace steinflow;

enum Exit { kOk = 0, kUsage = 2, kRuntime = 3, kProtocol = 4 };

int report(const std::string& kind, const std::string& message, int code, json extra = json::object()) {
  json rec{{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  rec.update(extra);
  std::cerr << rec.dump() << std::endl;
  return code;
}

struct RunFlags {
  std::string config;
  std::string output;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool no_repulsion = false;
  bool no_context = false;

  void attach(CLI::App* app, bool ablations) {
    app->add_option("config", config, "Run config (JSON) or a manifest.json to re-run")->required();
    app->add_option("-o,--output", output, "Output directory");
    app->add_option("--set", overrides, "Override a config key: key.path=VALUE");
    app->add_option("--seed", seed, "Override the seed");
    app->add_option("--workers", workers, "Particle-parallel worker threads");
    if (ablations) {
      app->add_flag("--no-svgd-repulsion", no_repulsion, "Drop the kernel-gradient term of the SVGD step");
      app->add_flag("--no-context", no_context, "Skip the context projection step");
    }
  }

  cfg::RunConfig load() const {
    auto all = overrides;
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    if (workers) all.push_back("workers=" + std::to_string(*workers));
    if (no_repulsion) all.push_back("svgd.repulsion=false");
    if (no_context) all.push_back("ablation.context_projection=false");
    return run::load_run_config(config, all);
  }
};

void print_done(const std::filesystem::path& dir, const json& manifest) {
  json out{{"status", "ok"}, {"output", dir.string()}, {"artifacts", manifest["artifacts"].size()}};
  for (const char* key : {"config_hash", "wall_clock_seconds", "total_frames", "roundtrip_relative_error"}) {
    if (manifest.contains(key)) out[key] = manifest[key];
  }
  std::cout << out.dump() << std::endl;
}

struct StubFlags {
  std::string config;
  std::string expert;
  std::vector<double> gaussian;
  std::vector<int> shape;
  std::string schedule = "rectified_linear";
  std::string unix_path;
  bool stdio = false;
  std::string mode = "gmm";
  std::uint32_t max_frame = proto::kDefaultMaxFrame;
};

StubOptions stub_options(const StubFlags& f) {
  StubOptions o{GmmExpert::gaussian(LatticeField::Zero({}), 1.0), NoiseSchedule<double>(parse_schedule_kind(f.schedule))};
  if (!f.config.empty()) {
    const auto config = cfg::load_config(f.config);
    const auto target = cfg::build_target(config);
    o.sched = config.schedule();
    bool found = false;
    for (const auto& slot : target.experts) {
      if (slot.name != f.expert) continue;
      const auto gmm = std::dynamic_pointer_cast<const GmmScoreModel>(slot.model);
      if (!gmm) throw ConfigError("expert '" + f.expert + "' is not a gmm expert");
      o.expert = gmm->expert();
      found = true;
    }
    if (!found) throw ConfigError("no expert named '" + f.expert + "' in " + f.config);
  } else {
    if (f.gaussian.size() != 2 || f.shape.size() != 4) {
      throw ConfigError("stub-serve needs --config and --expert, or --gaussian MEAN,VAR and --shape H,W,N,C");
    }
    const LatticeShape shape{f.shape[0], f.shape[1], f.shape[2], f.shape[3]};
    if (!shape.valid()) throw ConfigError("invalid --shape");
    o.expert = GmmExpert::gaussian(LatticeField::Constant(shape, f.gaussian[0]), f.gaussian[1]);
  }
  if (f.mode == "zero") {
    o.mode = StubMode::zero;
  } else if (f.mode != "gmm") {
    throw ConfigError("--mode must be gmm or zero");
  }
  o.max_frame = f.max_frame;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annealed SVGD sampling from masked products of flow experts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(run::kSoftware));

  RunFlags sample_flags, extend_flags, invert_flags;
  auto* sample = app.add_subcommand("sample", "Run the annealed sampler and write L samples");
  sample_flags.attach(sample, true);
  auto* ext = app.add_subcommand("extend", "Segmented generation with pinned overlap frames");
  extend_flags.attach(ext, true);
  auto* invert = app.add_subcommand("invert", "Invert the context reference into per-step context tensors");
  invert_flags.attach(invert, false);

  std::vector<std::string> metric_runs;
  std::string metrics_output;
  auto* metrics = app.add_subcommand("metrics", "Summaries and density trajectories of completed runs");
  metrics->add_option("runs", metric_runs, "Run directories")->required();
  metrics->add_option("-o,--output", metrics_output, "Output directory (default RUN/../metrics-NAME)");

  StubFlags stub;
  auto* serve = app.add_subcommand("stub-serve", "Serve an analytic Gaussian(-mixture) expert over the wire protocol");
  serve->add_option("--config", stub.config, "Run config holding the expert");
  serve->add_option("--expert", stub.expert, "Name of the gmm expert to serve");
  serve->add_option("--gaussian", stub.gaussian, "MEAN,VAR of an isotropic Gaussian expert")->delimiter(',');
  serve->add_option("--shape", stub.shape, "H,W,N,C for --gaussian")->delimiter(',');
  serve->add_option("--schedule", stub.schedule, "rectified_linear or variance_preserving");
  serve->add_option("--mode", stub.mode, "gmm (analytic scores) or zero (echo zeros)");
  serve->add_option("--max-frame", stub.max_frame, "Largest accepted frame body in bytes");
  auto* unix_opt = serve->add_option("--unix", stub.unix_path, "Listen on a unix socket");
  auto* stdio_opt = serve->add_flag("--stdio", stub.stdio, "Serve one connection over stdin/stdout");
  unix_opt->excludes(stdio_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), kUsage);
  }

  try {
    if (sample->parsed() || ext->parsed() || invert->parsed()) {
      const bool is_sample = sample->parsed();
      const bool is_extend = ext->parsed();
      const RunFlags& flags = is_sample ? sample_flags : is_extend ? extend_flags : invert_flags;
      const std::string command = is_sample ? "sample" : is_extend ? "extend" : "invert";
      const auto config = flags.load();
      const auto dir = run::output_dir(command, config, flags.output);
      const json manifest = is_sample   ? run::cmd_sample(config, dir)
                            : is_extend ? run::cmd_extend(config, dir)
                                        : run::cmd_invert(config, dir);
      print_done(dir, manifest);
      return kOk;
    }
    if (metrics->parsed()) {
      std::filesystem::path dir = metrics_output;
      if (dir.empty()) {
        const std::filesystem::path first(metric_runs.front());
        dir = first.parent_path() / ("metrics-" + first.filename().string());
      }
      const json manifest = run::cmd_metrics({metric_runs.begin(), metric_runs.end()}, dir);
      std::ifstream summary(dir / "summary.csv");
      std::cout << summary.rdbuf();
      return kOk;
    }
    if (serve->parsed()) {
      if (stub.unix_path.empty() && !stub.stdio) throw ConfigError("stub-serve needs --unix PATH or --stdio");
      StubHandler handler(stub_options(stub));
      if (stub.stdio) {
        std::signal(SIGPIPE, SIG_IGN);
        proto::Stream stream(0, 1);
        handler.serve(stream);
        return kOk;
      }
      UnixStubServer server(stub.unix_path, std::move(handler));
      server.start();
      std::cerr << json{{"status", "listening"}, {"endpoint", "unix:" + stub.unix_path}}.dump() << std::endl;
      server.wait();
      return kOk;
    }
  } catch (const ConfigError& e) {
    return report("config", e.what(), kUsage);
  } catch (const NotARunError& e) {
    return report("not_a_run", e.what(), kUsage);
  } catch (const DivergenceError& e) {
    return report("divergence", e.what(), kRuntime, {{"t", e.t()}, {"particle", e.particle()}});
  } catch (const InversionDiverged& e) {
    return report("inversion_diverged", e.what(), kRuntime, {{"step", e.step()}});
  } catch (const SegmentError& e) {
    return report("segment", e.what(), kRuntime, {{"segment", e.segment()}});
  } catch (const ExpertError& e) {
    return report("expert", e.what(), kProtocol, {{"expert", e.expert()}});
  } catch (const ProtocolError& e) {
    return report("protocol", e.what(), kProtocol);
  } catch (const TransportError& e) {
    return report("transport", e.what(), kProtocol);
  } catch (const BackendError& e) {
    return report("backend", e.what(), kProtocol);
  } catch (const ContractViolation& e) {
    return report("contract", e.what(), kUsage);
  } catch (const DomainError& e) {
    return report("domain", e.what(), kUsage);
  } catch (const std::exception& e) {
    return report("runtime", e.what(), kRuntime);
  }
  return kOk;
}
