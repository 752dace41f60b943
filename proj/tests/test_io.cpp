#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "steinflow/config.hpp"
#include "steinflow/tensor_io.hpp"
#include "support.hpp"

using namespace steinflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {
fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("steinflow-io-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("tensor file layout") {
  auto f = LatticeField::Constant({1, 1, 1, 2}, 1.0);
  f.array()[1] = -2.0;
  auto b = io::encode_tensor(f);
  REQUIRE(b.size() == 8 + 4 + 4 + 16 + 8);
  CHECK(std::string(b.begin(), b.begin() + 8) == "SFTENSOR");
  CHECK(b[8] == 1);
  CHECK(b[12] == 0);
  CHECK(b[16] == 1);
  CHECK(b[28] == 2);
  const std::uint8_t payload[] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  CHECK(std::equal(std::begin(payload), std::end(payload), b.begin() + 32));
}

TEST_CASE("tensor round trip is bitwise for f32 values") {
  std::mt19937_64 rng(71);
  auto f = testutil::random_field({3, 2, 4, 2}, rng);
  f.array() = f.array().cast<float>().cast<double>();
  auto dir = scratch("tensor");
  io::write_tensor(dir / "x.sft", f);
  auto g = io::read_tensor(dir / "x.sft");
  CHECK(g.shape() == f.shape());
  CHECK(testutil::bitwise_equal(f, g));
  auto bytes = io::encode_tensor(f);
  bytes[0] = 'X';
  CHECK_THROWS_AS(io::decode_tensor(bytes), ContractViolation);
  auto trunc = io::encode_tensor(f);
  trunc.pop_back();
  CHECK_THROWS_AS(io::decode_tensor(trunc), ContractViolation);
  CHECK_THROWS(io::read_tensor(dir / "missing.sft"));
  fs::remove_all(dir);
}

TEST_CASE("sha256 known answers") {
  CHECK(io::sha256_hex(std::string("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("defaults parse and fill every section") {
  const json one = json::parse(R"({"experts": [{"name": "a", "mean": 0, "variance": 1}]})");
  auto c = cfg::parse_config(one);
  CHECK_THROWS_AS(cfg::parse_config(json::object()), ConfigError);
  CHECK(c.shape() == LatticeShape{4, 4, 8, 1});
  CHECK(c.ladder().steps() == 50);
  CHECK(c.anneal().particles == 64);
  CHECK(c.anneal().svgd.eta == 1e-3);
  CHECK(c.hash().size() == 64);
  CHECK(cfg::parse_config(one).hash() == c.hash());
  CHECK(cfg::parse_config(json{{"experts", one["experts"]}, {"seed", 3}}).hash() != c.hash());
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(cfg::parse_config(json{{"sedd", 1}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"svgd", {{"etaa", 1}}}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"svgd", {{"eta", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"svgd", {{"particles", 0}}}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"lattice", {{"shape", {1, 2, 3}}}}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"experts", {{{"name", "a"}, {"mean", 0}}}}}), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config(json{{"experts", {{{"name", "a"}, {"mean", 0}, {"variance", 1}, {"colour", 1}}}}}),
                  ConfigError);
}

TEST_CASE("overrides") {
  json tree = json::parse(R"({"experts": [{"name": "a", "mean": 0, "variance": 1}]})");
  cfg::apply_override(tree, "svgd.eta=0.01");
  cfg::apply_override(tree, "output.dir=out/x");
  cfg::apply_override(tree, "lattice.shape=[1,1,2,1]");
  CHECK(tree["svgd"]["eta"] == 0.01);
  CHECK(tree["output"]["dir"] == "out/x");
  auto c = cfg::parse_config(tree);
  CHECK(c.shape() == LatticeShape{1, 1, 2, 1});
  CHECK_THROWS_AS(cfg::apply_override(tree, "novalue"), ConfigError);
}

TEST_CASE("field specs") {
  const LatticeShape s{2, 2, 2, 1};
  auto dir = scratch("fields");
  CHECK(cfg::resolve_field(json(1.5), s, dir, "f").array().minCoeff() == 1.5);
  auto flat = cfg::resolve_field(json{0, 1, 2, 3, 4, 5, 6, 7}, s, dir, "f");
  CHECK(flat.array()[7] == 7.0);
  CHECK_THROWS_AS(cfg::resolve_field(json{0, 1}, s, dir, "f"), ConfigError);
  auto box = cfg::resolve_field(json{{"box", {{"lo", {0, 0, 0}}, {"hi", {1, 1, 2}}, {"value", 1}, {"background", 0}}}}, s,
                                dir, "f");
  CHECK(box(0, 0, 0) == 1.0);
  CHECK(box(0, 0, 1) == 1.0);
  CHECK(box(1, 0, 0) == 0.0);
  io::write_tensor(dir / "ref.sft", LatticeField::Constant(s, 0.25));
  CHECK(cfg::resolve_field(json{{"file", "ref.sft"}}, s, dir, "f").array().maxCoeff() == 0.25);
  CHECK_THROWS_AS(cfg::resolve_field(json{{"file", "ref.sft"}}, LatticeShape{1, 1, 1, 1}, dir, "f"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("targets from config") {
  json user = json::parse(R"({
    "lattice": {"shape": [1, 2, 4, 1]},
    "ladder": {"steps": 6},
    "experts": [{"name": "obj", "mean": 1, "variance": 0.5, "mask": "fg"},
                {"name": "scene", "mean": 0, "variance": 1}],
    "masks": {"fg": {"box": {"lo": [0, 0, 0], "hi": [1, 1, 4], "value": 1, "background": 0}}, "smooth": null},
    "context": {"source": "direct", "reference": 0.5},
    "lambda": {"policy": "soft", "value": 2.0},
    "recon": {"enabled": true, "step_size": 0.05, "every": 2}
  })");
  auto c = cfg::parse_config(user);
  auto t = cfg::build_target(c);
  CHECK(t.experts.size() == 2);
  CHECK(t.experts[0].binding == MaskBinding::fg);
  CHECK(t.context.has_value());
  CHECK(t.context->source() == ContextSource::direct);
  CHECK_FALSE(t.lambda.hard());
  CHECK(t.lambda.lambda == 2.0);
  REQUIRE(t.recon.has_value());
  CHECK(t.recon->every == 2);
  CHECK(t.masks.context().values(0, 0, 0) == 0.0);
  CHECK(t.masks.context().values(0, 1, 0) == 1.0);
  CHECK(t.context->at(0).array().maxCoeff() == 0.5);

  json bad = user;
  bad["segments"] = {{"count", 2}, {"overlap", 4}};
  CHECK_THROWS_AS(cfg::build_plan(cfg::parse_config(bad)), ConfigError);
}
