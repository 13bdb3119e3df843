#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "proxydml/error.hpp"
#include "proxydml/experiment.hpp"

using namespace pdml;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "proxydml_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config_error(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    return e.what();
  }
  FAIL("expected InvalidConfig for " << text);
  return {};
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallConfig = R"({
  "synth": {"num_classes": 4, "centers_per_class": 2, "samples_per_center": 8, "dim": 8},
  "train": {"epochs": 3, "batch_size": 16, "model": {"embedding_dim": 8}},
  "ks": [1, 2, 4]
})";

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty object uses defaults") {
    const auto cfg = parse_experiment_config("{}");
    REQUIRE(cfg.synth.has_value());
    CHECK(cfg.synth->num_classes == 8);
    CHECK(cfg.synth->centers_per_class == 3);
    CHECK(cfg.synth->dim == 16);
    CHECK(cfg.train.lr_decay_factor == 0.5);
    CHECK(cfg.train.lr_decay_every == 20);
    CHECK(cfg.ks == std::vector<std::size_t>{1, 2, 4, 8});
  }
  SUBCASE("fields are read") {
    const auto cfg = parse_experiment_config(
        R"({"train": {"loss": {"kind": "softtriple", "mode": "max", "proxies_per_class": 4},
            "optimizer": {"kind": "sgd"}, "epochs": 7}, "ks": [2, 5], "run_label": "x"})");
    CHECK(cfg.train.loss.kind == LossKind::SoftTriple);
    CHECK(cfg.train.loss.mode == SimilarityMode::Max);
    CHECK(cfg.train.loss.proxies_per_class == 4);
    CHECK(cfg.train.optimizer.kind == OptimizerKind::Sgd);
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.run_label == "x");
  }
  SUBCASE("errors cite the field") {
    CHECK(config_error(R"({"train": {"loss": {"gamma": -0.1}}})").find("train.loss.gamma") != std::string::npos);
    CHECK(config_error(R"({"train": {"epochs": "ten"}})").find("train.epochs") != std::string::npos);
    CHECK(config_error(R"({"train": {"loss": {"kind": "triplet"}}})").find("train.loss.kind") != std::string::npos);
    CHECK(config_error(R"({"synth": {"dim": 16, "colour": 1}})").find("synth.colour") != std::string::npos);
    CHECK(config_error(R"({"ks": [4, 2]})").find("ks") != std::string::npos);
    CHECK(config_error(R"({"ks": [0, 2]})").find("ks") != std::string::npos);
    CHECK(config_error(R"({"embeddings_path": "/nonexistent/e.csv"})").find("embeddings_path") != std::string::npos);
    CHECK(config_error(R"({"synth": {}, "embeddings_path": "/tmp"})").find("mutually exclusive") != std::string::npos);
    config_error("{not json");
  }
  SUBCASE("hash is stable and sensitive") {
    const auto a = parse_experiment_config("{}");
    const auto b = parse_experiment_config(R"({"train": {"seed": 0}})");
    const auto c = parse_experiment_config(R"({"train": {"seed": 1}})");
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(parse_experiment_config(to_json(c).dump()).train.seed == 1);
  }
}

TEST_CASE("run writes a deterministic report") {
  const auto cfg = parse_experiment_config(kSmallConfig);
  const auto d1 = scratch("run1"), d2 = scratch("run2");
  RunOptions o1;
  o1.out_dir = d1.string();
  o1.include_timestamp = false;
  RunOptions o2 = o1;
  o2.out_dir = d2.string();
  const auto a = run_experiment(cfg, o1);
  const auto b = run_experiment(cfg, o2);
  CHECK(a.passed);
  CHECK(read(d1 / "report.json") == read(d2 / "report.json"));
  CHECK(read(d1 / "train_log.csv") == read(d2 / "train_log.csv"));
  CHECK(fs::exists(d1 / "checkpoint_seed0.txt"));
  const auto& m = a.report["metrics"];
  for (const char* key : {"R@1", "nDCG@2", "nDCG@4", "MAP@R"}) CHECK(m.contains(key));
  CHECK(a.report["config_hash"] == config_hash(cfg));
  CHECK(a.report["per_seed"].size() == 1);
  CHECK(read(d1 / "train_log.csv").rfind("seed,epoch,loss_mean", 0) == 0);
}

TEST_CASE("repeated seeds and the parallel path agree") {
  auto cfg = parse_experiment_config(kSmallConfig);
  cfg.num_seeds = 3;
  RunOptions seq;
  seq.write_files = false;
  seq.include_timestamp = false;
  RunOptions par = seq;
  par.jobs = 3;
  const auto a = run_experiment(cfg, seq), b = run_experiment(cfg, par);
  CHECK(a.report == b.report);
  CHECK(a.report["per_seed"].size() == 3);
  std::set<std::uint64_t> seeds;
  for (const auto& p : a.report["per_seed"]) seeds.insert(p["seed"].get<std::uint64_t>());
  CHECK(seeds.size() == 3);
}

TEST_CASE("stage errors keep their code") {
  auto cfg = parse_experiment_config(kSmallConfig);
  cfg.synth->center_spread = 3.0;
  cfg.synth->max_attempts = 50;
  RunOptions o;
  o.write_files = false;
  try {
    run_experiment(cfg, o);
    FAIL("expected SpecInfeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpecInfeasible);
    CHECK(std::string(e.what()).find("stage data") != std::string::npos);
  }
}

TEST_CASE("proxy-count sweep") {
  auto cfg = parse_experiment_config(kSmallConfig);
  cfg.num_seeds = 2;
  const auto dir = scratch("ksweep");
  RunOptions o;
  o.out_dir = dir.string();
  o.jobs = 2;
  SUBCASE("duplicates are dropped with a warning") {
    const auto out = run_ksweep(cfg, {1, 3, 1}, o);
    CHECK(out.report["k_values"] == nlohmann::json::array({1, 3}));
    CHECK(out.report["warnings"].size() == 1);
    CHECK(out.summary.find("warning") != std::string::npos);
    std::istringstream csv(read(dir / "ksweep.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("K,seed,R@1", 0) == 0);
    int rows = 0;
    for (std::string line; std::getline(csv, line);) rows += !line.empty();
    CHECK(rows == 4);
    CHECK(fs::exists(dir / "ksweep_summary.json"));
  }
  SUBCASE("a single K gives one stratum") {
    const auto out = run_ksweep(cfg, {2}, o);
    CHECK(out.report["summary"].size() == 1);
  }
  SUBCASE("empty K list") {
    CHECK_THROWS_AS(run_ksweep(cfg, {}, o), Error);
  }
}

TEST_CASE("standalone evaluation") {
  const auto dir = scratch("eval");
  RunOptions o;
  o.out_dir = dir.string();
  SUBCASE("relevance file") {
    const auto path = dir / "rel.txt";
    std::ofstream(path) << "4 1010000000\n";
    const auto out = evaluate_relevance_source(path.string(), {10}, o);
    CHECK(std::abs(out.report["metrics"]["nDCG@10"].get<double>() - 58.6) <= 0.05);
    CHECK(fs::exists(dir / "report.json"));
  }
  SUBCASE("embedding file with two antipodal classes") {
    const auto path = dir / "emb.csv";
    std::ofstream(path) << "0,1,0.01\n0,1,-0.01\n0,0.99,0\n1,-1,0.01\n1,-1,-0.01\n1,-0.99,0\n";
    const auto out = evaluate_embeddings_source(path.string(), {1, 2}, o);
    CHECK(out.report["metrics"]["R@1"] == 100.0);
  }
  SUBCASE("missing file names the path") {
    try {
      evaluate_relevance_source("/nonexistent/rel.txt", {10}, o);
      FAIL("expected IoError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IoError);
      CHECK(std::string(e.what()).find("/nonexistent/rel.txt") != std::string::npos);
    }
  }
}

TEST_CASE("gradient audit") {
  SUBCASE("passes by default and covers K = 1") {
    const auto out = run_gradcheck(GradcheckOptions{});
    CHECK(out.passed);
    CHECK(out.report["instances"].get<std::size_t>() >= 20);
    CHECK(out.report["mpa_form_gap"].get<double>() <= 1e-10);
    for (const auto& e : out.report["entries"]) CHECK(e["max_relative_error"].get<double>() < 1e-4);
  }
  SUBCASE("fault injection is caught and attributed") {
    GradcheckOptions opts;
    opts.corrupt_mpa_positive = true;
    const auto out = run_gradcheck(opts);
    CHECK_FALSE(out.passed);
    CHECK(out.summary.find("MPA positive branch") != std::string::npos);
  }
  SUBCASE("relative error") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(relative_error(0.0, 0.0) == 0.0);
  }
}
