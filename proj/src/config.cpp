#include "steinflow/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "steinflow/flow.hpp"
#include "steinflow/remote.hpp"
#include "steinflow/tensor_io.hpp"

namespace steinflow::cfg {

using nlohmann::json;
namespace fs = std::filesystem;

const json& defaults() {
  static const json tree = json::parse(R"({
    "lattice": {"shape": [4, 4, 8, 1]},
    "schedule": {"kind": "rectified_linear", "eps_clamp": 0.001},
    "ladder": {"steps": 50, "mapping": "uniform"},
    "svgd": {"eta": 0.001, "particles": 64, "inner_iters": 1, "repulsion": true, "bandwidth_floor": 1e-8},
    "experts": [],
    "masks": {"fg": 0, "sim": 0, "context": null, "smooth": {"radius": 1, "sigma": 0.5}},
    "context": {"source": "none", "reference": 0, "path": null, "expert": null},
    "lambda": {"policy": "project_hard", "value": 0},
    "recon": {"enabled": false, "step_size": 0.1, "every": 1},
    "refine": {"enabled": false, "every": 5, "threshold": null, "decay": 0.8},
    "segments": {"count": 1, "overlap": 3, "context": "inversion", "per_segment": []},
    "seed": 0,
    "workers": 1,
    "output": {"dir": null},
    "ablation": {"context_projection": true}
  })");
  return tree;
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

// Keys whose values are free-form (validated by their own parser).
bool opaque(const std::string& path) {
  static const char* const keys[] = {"experts", "masks.fg", "masks.sim", "masks.context", "masks.smooth",
                                     "context.reference", "segments.per_segment"};
  for (const char* k : keys)
    if (path == k) return true;
  return false;
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) fail(path.empty() ? "config" : path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) fail(sub, "unknown key");
    json& slot = base[key];
    if (!opaque(sub) && slot.is_object()) {
      merge(slot, value, sub);
    } else {
      slot = value;
    }
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "must be finite");
  return v;
}

double positive(const json& j, const std::string& where) {
  const double v = number(j, where);
  if (!(v > 0.0)) fail(where, "must be positive");
  return v;
}

int integer(const json& j, const std::string& where, int lo) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < lo || v > (1 << 30)) fail(where, "must be an integer >= " + std::to_string(lo));
  return int(v);
}

bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected true or false");
  return j.get<bool>();
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(where + "." + key, "unknown key");
  }
}

void check_field_spec(const json& spec, const std::string& where) {
  if (spec.is_number() || spec.is_array()) return;
  if (spec.is_object()) {
    if (spec.contains("file")) {
      check_keys(spec, {"file"}, where);
      text(spec["file"], where + ".file");
      return;
    }
    if (spec.contains("box")) {
      check_keys(spec, {"box"}, where);
      check_keys(spec["box"], {"lo", "hi", "value", "background"}, where + ".box");
      return;
    }
  }
  fail(where, "field must be a number, a flat array, {\"file\": ...} or {\"box\": ...}");
}

void check_expert(const json& e, const std::string& where) {
  if (!e.is_object()) fail(where, "expected an object");
  const std::string type = e.contains("type") ? text(e["type"], where + ".type") : "gmm";
  if (type == "gmm") {
    check_keys(e, {"name", "type", "mask", "weight", "components", "mean", "variance", "region"}, where);
    if (e.contains("components") == (e.contains("mean") || e.contains("variance"))) {
      fail(where, "give either 'components' or 'mean' + 'variance'");
    }
    if (e.contains("components")) {
      if (!e["components"].is_array() || e["components"].empty()) fail(where + ".components", "expected a non-empty list");
      for (std::size_t k = 0; k < e["components"].size(); ++k) {
        const auto& c = e["components"][k];
        const std::string cw = where + ".components[" + std::to_string(k) + "]";
        check_keys(c, {"weight", "mean", "variance"}, cw);
        if (!c.contains("mean") || !c.contains("variance")) fail(cw, "needs 'mean' and 'variance'");
        check_field_spec(c["mean"], cw + ".mean");
        positive(c["variance"], cw + ".variance");
        if (c.contains("weight")) positive(c["weight"], cw + ".weight");
      }
    } else {
      if (!e.contains("mean") || !e.contains("variance")) fail(where, "needs 'mean' and 'variance'");
      check_field_spec(e["mean"], where + ".mean");
      positive(e["variance"], where + ".variance");
    }
    if (e.contains("region") && !e["region"].is_null()) check_field_spec(e["region"], where + ".region");
  } else if (type == "remote") {
    check_keys(e, {"name", "type", "mask", "weight", "endpoint", "kind", "conditioning", "timeout_ms", "dtype"}, where);
    if (!e.contains("endpoint")) fail(where, "remote expert needs 'endpoint'");
    text(e["endpoint"], where + ".endpoint");
    if (e.contains("kind")) {
      const auto k = text(e["kind"], where + ".kind");
      if (k != "score" && k != "velocity") fail(where + ".kind", "must be 'score' or 'velocity'");
    }
    if (e.contains("conditioning")) text(e["conditioning"], where + ".conditioning");
    if (e.contains("timeout_ms")) integer(e["timeout_ms"], where + ".timeout_ms", 1);
    if (e.contains("dtype")) {
      const auto d = text(e["dtype"], where + ".dtype");
      if (d != "f32" && d != "f64") fail(where + ".dtype", "must be 'f32' or 'f64'");
    }
  } else {
    fail(where + ".type", "must be 'gmm' or 'remote'");
  }
  if (e.contains("name")) text(e["name"], where + ".name");
  if (e.contains("weight")) {
    const double w = number(e["weight"], where + ".weight");
    if (w < 0.0) fail(where + ".weight", "must be nonnegative");
  }
  if (e.contains("mask")) {
    const auto& m = e["mask"];
    if (m.is_string()) {
      const auto s = m.get<std::string>();
      if (s != "full" && s != "fg" && s != "sim") fail(where + ".mask", "must be full, fg, sim or {\"custom\": field}");
    } else {
      check_keys(m, {"custom"}, where + ".mask");
      if (!m.contains("custom")) fail(where + ".mask", "expected {\"custom\": field}");
      check_field_spec(m["custom"], where + ".mask.custom");
    }
  }
}

void check_experts(const json& list, const std::string& where) {
  if (!list.is_array()) fail(where, "expected a list");
  for (std::size_t i = 0; i < list.size(); ++i) check_expert(list[i], where + "[" + std::to_string(i) + "]");
}

void validate(const json& t) {
  const auto& shape = t["lattice"]["shape"];
  if (!shape.is_array() || shape.size() != 4) fail("lattice.shape", "expected [H, W, N, C]");
  for (int i = 0; i < 4; ++i) integer(shape[i], "lattice.shape", 1);

  const auto kind = text(t["schedule"]["kind"], "schedule.kind");
  try {
    parse_schedule_kind(kind);
  } catch (const Error& e) {
    fail("schedule.kind", e.what());
  }
  const double eps = positive(t["schedule"]["eps_clamp"], "schedule.eps_clamp");
  if (eps >= 0.5) fail("schedule.eps_clamp", "must be below 0.5");
  integer(t["ladder"]["steps"], "ladder.steps", 1);
  try {
    parse_ladder_mapping(text(t["ladder"]["mapping"], "ladder.mapping"));
  } catch (const Error& e) {
    fail("ladder.mapping", e.what());
  }

  const auto& s = t["svgd"];
  positive(s["eta"], "svgd.eta");
  integer(s["particles"], "svgd.particles", 1);
  integer(s["inner_iters"], "svgd.inner_iters", 1);
  boolean(s["repulsion"], "svgd.repulsion");
  positive(s["bandwidth_floor"], "svgd.bandwidth_floor");

  check_experts(t["experts"], "experts");
  if (t["experts"].empty()) fail("experts", "at least one expert is required");

  const auto& m = t["masks"];
  check_field_spec(m["fg"], "masks.fg");
  check_field_spec(m["sim"], "masks.sim");
  if (!m["context"].is_null()) check_field_spec(m["context"], "masks.context");
  if (!m["smooth"].is_null()) {
    check_keys(m["smooth"], {"radius", "sigma"}, "masks.smooth");
    if (m["smooth"].contains("radius")) integer(m["smooth"]["radius"], "masks.smooth.radius", 0);
    if (m["smooth"].contains("sigma") && number(m["smooth"]["sigma"], "masks.smooth.sigma") < 0.0) {
      fail("masks.smooth.sigma", "must be nonnegative");
    }
  }

  const auto& c = t["context"];
  const auto source = text(c["source"], "context.source");
  if (source != "none" && source != "inversion" && source != "direct" && source != "file") {
    fail("context.source", "must be none, inversion, direct or file");
  }
  check_field_spec(c["reference"], "context.reference");
  if (source == "file" && !c["path"].is_string()) fail("context.path", "file context needs a directory path");
  if (!c["expert"].is_null()) text(c["expert"], "context.expert");

  const auto policy = text(t["lambda"]["policy"], "lambda.policy");
  if (policy != "project_hard" && policy != "soft") fail("lambda.policy", "must be project_hard or soft");
  if (number(t["lambda"]["value"], "lambda.value") < 0.0) fail("lambda.value", "must be nonnegative");

  boolean(t["recon"]["enabled"], "recon.enabled");
  positive(t["recon"]["step_size"], "recon.step_size");
  integer(t["recon"]["every"], "recon.every", 1);

  boolean(t["refine"]["enabled"], "refine.enabled");
  integer(t["refine"]["every"], "refine.every", 1);
  if (!t["refine"]["threshold"].is_null() && number(t["refine"]["threshold"], "refine.threshold") < 0.0) {
    fail("refine.threshold", "must be nonnegative");
  }
  const double decay = number(t["refine"]["decay"], "refine.decay");
  if (decay < 0.0 || decay > 1.0) fail("refine.decay", "must lie in [0, 1]");

  const auto& g = t["segments"];
  const int count = integer(g["count"], "segments.count", 1);
  integer(g["overlap"], "segments.overlap", 0);
  const auto mode = text(g["context"], "segments.context");
  if (mode != "inversion" && mode != "direct") fail("segments.context", "must be inversion or direct");
  if (!g["per_segment"].is_array()) fail("segments.per_segment", "expected a list");
  if (!g["per_segment"].empty() && int(g["per_segment"].size()) != count) {
    fail("segments.per_segment", "needs one entry per segment");
  }
  for (std::size_t i = 0; i < g["per_segment"].size(); ++i) {
    const auto& p = g["per_segment"][i];
    const std::string w = "segments.per_segment[" + std::to_string(i) + "]";
    check_keys(p, {"experts", "mean_shift"}, w);
    if (p.contains("experts")) check_experts(p["experts"], w + ".experts");
    if (p.contains("mean_shift")) number(p["mean_shift"], w + ".mean_shift");
  }

  if (!t["seed"].is_number_unsigned() && !(t["seed"].is_number_integer() && t["seed"].get<std::int64_t>() >= 0)) {
    fail("seed", "expected a nonnegative integer");
  }
  integer(t["workers"], "workers", 1);
  if (!t["output"]["dir"].is_null()) text(t["output"]["dir"], "output.dir");
  boolean(t["ablation"]["context_projection"], "ablation.context_projection");
}

fs::path resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_config(const json& user, fs::path base_dir) {
  json tree = defaults();
  merge(tree, user, "");
  validate(tree);
  return RunConfig{std::move(tree), std::move(base_dir)};
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &tree;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json user;
  try {
    user = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(user, o);
  return parse_config(user, path.parent_path());
}

LatticeShape RunConfig::shape() const {
  const auto& s = tree["lattice"]["shape"];
  return {s[0].get<int>(), s[1].get<int>(), s[2].get<int>(), s[3].get<int>()};
}

NoiseSchedule<double> RunConfig::schedule() const {
  return NoiseSchedule<double>(parse_schedule_kind(tree["schedule"]["kind"].get<std::string>()),
                               tree["schedule"]["eps_clamp"].get<double>());
}

AnnealLadder RunConfig::ladder() const {
  return AnnealLadder(tree["ladder"]["steps"].get<int>(), tree["schedule"]["eps_clamp"].get<double>(),
                      parse_ladder_mapping(tree["ladder"]["mapping"].get<std::string>()));
}

std::uint64_t RunConfig::seed() const { return tree["seed"].get<std::uint64_t>(); }

int RunConfig::segment_count() const { return tree["segments"]["count"].get<int>(); }

AnnealConfig RunConfig::anneal() const {
  AnnealConfig a;
  const auto& s = tree["svgd"];
  a.svgd.eta = s["eta"].get<double>();
  a.svgd.inner_iters = s["inner_iters"].get<int>();
  a.svgd.repulsion = s["repulsion"].get<bool>();
  a.svgd.bandwidth_floor = s["bandwidth_floor"].get<double>();
  a.particles = s["particles"].get<int>();
  a.seed = seed();
  a.workers = tree["workers"].get<int>();
  a.context_projection = tree["ablation"]["context_projection"].get<bool>();
  const auto& r = tree["refine"];
  a.refine.enabled = r["enabled"].get<bool>();
  a.refine.every = r["every"].get<int>();
  if (!r["threshold"].is_null()) a.refine.threshold = r["threshold"].get<double>();
  a.refine.decay = r["decay"].get<double>();
  return a;
}

std::string RunConfig::hash() const { return io::sha256_hex(tree.dump()); }

LatticeField resolve_field(const json& spec, const LatticeShape& shape, const fs::path& base_dir,
                           const std::string& where) {
  if (spec.is_number()) return LatticeField::Constant(shape, spec.get<double>());
  if (spec.is_array()) {
    if (Eigen::Index(spec.size()) != shape.size()) {
      fail(where, "array has " + std::to_string(spec.size()) + " entries, shape " + shape.str() + " needs " +
                      std::to_string(shape.size()));
    }
    LatticeField f(shape);
    for (std::size_t i = 0; i < spec.size(); ++i) f.array()[Eigen::Index(i)] = number(spec[i], where);
    return f;
  }
  if (spec.contains("file")) {
    LatticeField f = io::read_tensor(resolve_path(spec["file"].get<std::string>(), base_dir));
    if (!(f.shape() == shape)) fail(where, "file tensor shape " + f.shape().str() + " differs from " + shape.str());
    return f;
  }
  const auto& box = spec["box"];
  const double value = box.contains("value") ? number(box["value"], where + ".value") : 1.0;
  const double background = box.contains("background") ? number(box["background"], where + ".background") : 0.0;
  auto corner = [&](const char* key, std::array<int, 3> fallback) {
    if (!box.contains(key)) return fallback;
    const auto& c = box[key];
    if (!c.is_array() || c.size() != 3) fail(where, std::string(key) + " must be [h, w, n]");
    return std::array<int, 3>{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()};
  };
  const auto lo = corner("lo", {0, 0, 0});
  const auto hi = corner("hi", {shape.h, shape.w, shape.n});
  LatticeField f = LatticeField::Constant(shape, background);
  for (int h = std::max(lo[0], 0); h < std::min(hi[0], shape.h); ++h)
    for (int w = std::max(lo[1], 0); w < std::min(hi[1], shape.w); ++w)
      for (int n = std::max(lo[2], 0); n < std::min(hi[2], shape.n); ++n)
        for (int c = 0; c < shape.c; ++c) f(h, w, n, c) = value;
  return f;
}

namespace {

Mask resolve_mask(const json& spec, const LatticeShape& shape, const fs::path& base, const std::string& where,
                  MaskRole role) {
  Mask m{resolve_field(spec, shape.single_channel(), base, where), role};
  try {
    m.validate();
  } catch (const Error& e) {
    fail(where, e.what());
  }
  return m;
}

ExpertSlot build_expert(const json& e, std::size_t index, const RunConfig& config, double mean_shift) {
  const LatticeShape shape = config.shape();
  const std::string where = "experts[" + std::to_string(index) + "]";
  ExpertSlot slot;
  slot.name = e.value("name", "expert" + std::to_string(index));
  slot.weight = e.value("weight", 1.0);
  if (e.contains("mask")) {
    const auto& m = e["mask"];
    if (m.is_string()) {
      slot.binding = parse_mask_binding(m.get<std::string>());
    } else {
      slot.binding = MaskBinding::custom;
      slot.custom_mask = resolve_mask(m["custom"], shape, config.base_dir, where + ".mask", MaskRole::custom);
    }
  }
  const std::string type = e.value("type", "gmm");
  if (type == "remote") {
    RemoteOptions o;
    o.endpoint = e["endpoint"].get<std::string>();
    o.kind = e.value("kind", "score");
    o.conditioning = e.value("conditioning", "");
    o.timeout_ms = e.value("timeout_ms", 10000);
    o.dtype = proto::parse_dtype(e.value("dtype", "f32"));
    slot.model = std::make_shared<RemoteExpert>(std::move(o));
    return slot;
  }
  std::vector<GmmComponent> comps;
  auto component = [&](const json& c, const std::string& cw) {
    LatticeField mean = resolve_field(c["mean"], shape, config.base_dir, cw + ".mean");
    mean.array() += mean_shift;
    return GmmComponent{c.value("weight", 1.0), std::move(mean), c["variance"].get<double>()};
  };
  if (e.contains("components")) {
    double total = 0.0;
    for (std::size_t k = 0; k < e["components"].size(); ++k) {
      comps.push_back(component(e["components"][k], where + ".components[" + std::to_string(k) + "]"));
      total += comps.back().weight;
    }
    for (auto& c : comps) c.weight /= total;
  } else {
    comps.push_back(component(e, where));
  }
  std::optional<Mask> region;
  if (e.contains("region") && !e["region"].is_null()) {
    region = resolve_mask(e["region"], shape, config.base_dir, where + ".region", MaskRole::custom);
  }
  try {
    slot.model = std::make_shared<GmmScoreModel>(GmmExpert(std::move(comps), std::move(region)));
  } catch (const Error& err) {
    fail(where, err.what());
  }
  return slot;
}

VelocityField masked_velocity_field(const CompositeTarget& target) {
  // Copies the slots so the field stays valid independently of `target`.
  auto experts = target.experts;
  std::vector<Eigen::ArrayXd> masks;
  for (std::size_t i = 0; i < experts.size(); ++i) masks.push_back(target.expert_mask(i).broadcast(target.shape));
  const auto sched = target.sched;
  return [experts, masks, sched](const LatticeField& x, double tau) {
    LatticeField s(x.shape());
    for (std::size_t i = 0; i < experts.size(); ++i) {
      s.array() += experts[i].weight * masks[i] * experts[i].model->score(x, tau, sched).array();
    }
    return velocity_from_score(x, s, tau, sched);
  };
}

}  // namespace

VelocityField context_velocity_field(const RunConfig& config, const CompositeTarget& target) {
  const auto& name = config.tree["context"]["expert"];
  if (name.is_null()) return masked_velocity_field(target);
  for (const auto& slot : target.experts)
    if (slot.name == name.get<std::string>()) return expert_velocity_field(slot.model, target.sched);
  fail("context.expert", "no expert named '" + name.get<std::string>() + "'");
}

fs::path context_file(const fs::path& dir, int t) {
  char name[32];
  std::snprintf(name, sizeof(name), "context_t%03d.sft", t);
  return dir / name;
}

CompositeTarget build_target(const RunConfig& config, int segment) {
  const json& t = config.tree;
  CompositeTarget target;
  target.shape = config.shape();
  target.sched = config.schedule();
  target.ladder = config.ladder();

  const json* experts = &t["experts"];
  double shift = 0.0;
  const auto& per = t["segments"]["per_segment"];
  if (!per.empty()) {
    const auto& entry = per[std::size_t(segment)];
    if (entry.contains("experts")) experts = &entry["experts"];
    shift = entry.value("mean_shift", 0.0);
  }
  if (experts->empty()) fail("experts", "segment " + std::to_string(segment + 1) + " has no experts");
  for (std::size_t i = 0; i < experts->size(); ++i) target.experts.push_back(build_expert((*experts)[i], i, config, shift));

  const auto& m = t["masks"];
  std::optional<SmoothingParams> smoothing;
  if (!m["smooth"].is_null()) {
    smoothing = SmoothingParams{m["smooth"].value("radius", 1), m["smooth"].value("sigma", 0.5)};
  }
  target.masks = MaskSet(resolve_mask(m["fg"], target.shape, config.base_dir, "masks.fg", MaskRole::fg),
                         resolve_mask(m["sim"], target.shape, config.base_dir, "masks.sim", MaskRole::sim), smoothing);
  if (!m["context"].is_null()) {
    target.masks.override_context(
        resolve_mask(m["context"], target.shape, config.base_dir, "masks.context", MaskRole::context));
  }

  if (t["lambda"]["policy"] == "soft") target.lambda = LambdaPolicy::soft(t["lambda"]["value"].get<double>());
  if (t["recon"]["enabled"].get<bool>()) {
    target.recon = ReconStep{t["recon"]["step_size"].get<double>(), t["recon"]["every"].get<int>()};
  }

  const auto& c = t["context"];
  const auto source = c["source"].get<std::string>();
  if (source == "inversion" || source == "direct") {
    LatticeField reference = resolve_field(c["reference"], target.shape, config.base_dir, "context.reference");
    if (source == "direct") {
      const auto anneal = config.anneal();
      target.context = ContextConditionals::direct(std::move(reference),
                                                   standard_normal_fields(target.shape, anneal.particles,
                                                                          config.seed(), 1),
                                                   target.ladder, target.sched);
    } else {
      target.context = rf_invert(reference, context_velocity_field(config, target), target.ladder);
    }
  } else if (source == "file") {
    const fs::path dir = resolve_path(c["path"].get<std::string>(), config.base_dir);
    std::vector<LatticeField> z;
    for (int step = 0; step <= target.ladder.steps(); ++step) {
      const auto p = context_file(dir, step);
      if (!fs::exists(p)) fail("context.path", "missing " + p.string());
      z.push_back(io::read_tensor(p));
      if (!(z.back().shape() == target.shape)) fail("context.path", p.string() + " has shape " + z.back().shape().str());
    }
    target.context = ContextConditionals::from_sequence(std::move(z));
  }
  try {
    target.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return target;
}

SegmentPlan build_plan(const RunConfig& config) {
  SegmentPlan plan;
  plan.frames_per_segment = config.shape().n;
  plan.overlap = config.tree["segments"]["overlap"].get<int>();
  const int count = config.segment_count();
  try {
    extended_length(count, plan.frames_per_segment, plan.overlap);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("segments: ") + e.what());
  }
  for (int s = 0; s < count; ++s) plan.segments.push_back({build_target(config, s)});
  return plan;
}

OverlapContext overlap_context(const RunConfig& config) {
  OverlapContext o;
  o.source = parse_context_source(config.tree["segments"]["context"].get<std::string>());
  return o;
}

}  // namespace steinflow::cfg
