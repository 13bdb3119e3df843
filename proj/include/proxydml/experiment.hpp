#pragma once

// Reproducible experiment drivers behind the command-line tool: training
// runs, proxy-count sweeps, standalone evaluation, the reference metric
// table, and the finite-difference gradient audit.

#include <array>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "proxydml/loss.hpp"
#include "proxydml/metrics.hpp"
#include "proxydml/synth.hpp"
#include "proxydml/trainer.hpp"

namespace pdml {

struct SplitConfig {
  bool class_disjoint = false;
  double train_fraction = 0.5;
};

struct ExperimentConfig {
  /// Exactly one data source: a generator spec or an embedding file.
  std::optional<SynthSpec> synth;
  std::string embeddings_path;
  SplitConfig split;
  TrainConfig train;
  std::vector<std::size_t> ks{1, 2, 4, 8};
  std::string output_dir = "out";
  std::string run_label = "run";
  /// Repeats with consecutive seeds; unset means 1 for a run, 3 for a sweep.
  std::optional<std::size_t> num_seeds;
  /// Also advance the data seed with each repeat.
  bool vary_data_seed = true;

  /// Throws Error(InvalidConfig) naming the offending field.
  void validate() const;
};

/// Parses the JSON config; unknown keys and bad values raise InvalidConfig.
ExperimentConfig parse_experiment_config(const std::string& json_text);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

struct RunOptions {
  /// Overrides cfg.output_dir when non-empty.
  std::string out_dir;
  bool write_files = true;
  std::size_t jobs = 1;
  bool include_timestamp = true;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  MetricReport metrics;
  TrainResult training;
};

/// One training run for repeat index `repeat`: data, split, train, embed the
/// test split, rank it against itself, evaluate.
SeedRun run_single(const ExperimentConfig& cfg, std::size_t repeat);

struct Outcome {
  nlohmann::json report;
  std::string summary;
  bool passed = true;
};

Outcome run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// One run per (K, seed); writes ksweep.csv and ksweep_summary.json.
Outcome run_ksweep(const ExperimentConfig& cfg, std::vector<std::size_t> k_values,
                   const RunOptions& options = {});

Outcome evaluate_relevance_source(const std::string& path, const std::vector<std::size_t>& ks,
                                  const RunOptions& options = {});
Outcome evaluate_embeddings_source(const std::string& path, const std::vector<std::size_t>& ks,
                                   const RunOptions& options = {});

/// The five R = 4 reference rankings and their published values, columns
/// Recall@10, Precision@10, MAP@R, MAP@10, nDCG@10.
struct ReferenceRow {
  std::array<std::uint8_t, 10> relevance;
  std::array<double, 5> published;
};
const std::array<ReferenceRow, 5>& metric_reference_table();
inline constexpr std::size_t kReferencePositives = 4;
inline constexpr std::size_t kReferenceK = 10;

Outcome run_table1(double tolerance = 0.05);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::vector<std::size_t> batch_sizes{1, 4, 8};
  std::vector<std::size_t> class_counts{1, 2, 5};
  std::vector<std::size_t> proxy_counts{1, 2, 4};
  std::size_t dim = 5;
  double step = 1e-4;
  double tolerance = 1e-4;
  LossConfig loss;  // kind and mode are swept
  bool corrupt_mpa_positive = false;
};

/// |a - b| / max(|a|, |b|, floor); the floor keeps entries that are zero up
/// to rounding from dominating.
double relative_error(double analytic, double numeric);

Outcome run_gradcheck(const GradcheckOptions& options);

}  // namespace pdml
