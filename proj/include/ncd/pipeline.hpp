#pragma once

// End-to-end orchestration behind the command line tool.
//
// Benchmark directory:   config.txt, base/, novel/, val/
// Run directory:         config.txt (written first), summary.csv and per seed
//   seed_<s>/base.ncdm       stage-1 checkpoint
//   seed_<s>/pseudo/         pseudo-label dataset (labels = fused, saliency = novel mask)
//   seed_<s>/clusters.txt    image_id cluster_index class_id novel_pixels distance
//   seed_<s>/metrics.csv     per-epoch stage-3 metrics
//   seed_<s>/split.txt       image_id score clean|unclean reassigned (EUMS runs)
//   seed_<s>/novel.ncdm      final model
//   seed_<s>/eval.txt, eval.csv

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ncd/clustering.hpp"
#include "ncd/config.hpp"
#include "ncd/eval.hpp"
#include "ncd/selftrain.hpp"

namespace ncd::pipeline {

namespace fs = std::filesystem;

struct LoadedBenchmark {
  RunConfig config;
  Dataset base;
  Dataset novel;
  Dataset val;
};

void cmd_synth(const RunConfig& config, const fs::path& out_dir);
LoadedBenchmark load_benchmark(const fs::path& dir);

struct RunOptions {
  fs::path benchmark_dir;
  fs::path run_dir;
  /// Empty means <benchmark_dir>/cache.
  fs::path cache_dir;
  /// Evaluate on val after every stage-3 epoch (metrics.csv val_miou column).
  bool per_epoch_val = true;
};

struct SeedResult {
  std::uint64_t seed = 0;
  EvalReport report;
  std::vector<EpochMetrics> metrics;
  bool stage1_cached = false;
  bool stage2_cached = false;
};

struct RunResult {
  std::vector<SeedResult> seeds;
  double mean_novel_miou = 0.0;
  double mean_base_miou = 0.0;
  double mean_all_miou = 0.0;
};

RunResult cmd_run(const RunConfig& config, const RunOptions& options);

// The three stages as cmd_run executes them, usable on in-memory data.

/// Stage 1: base training, rounded to checkpoint precision so a cached
/// checkpoint and a fresh model are interchangeable.
LinearSegmenter stage1_base_model(const RunConfig& config, const Dataset& base, std::uint64_t seed);

struct Stage2Result {
  std::vector<PseudoLabelRecord> records;
  ClusterModel clusters;
};
Stage2Result stage2_pseudo_labels(const RunConfig& config, const LinearSegmenter& base_model, const Dataset& novel,
                                  std::uint64_t seed);

struct Stage3Result {
  SeedResult result;
  LinearSegmenter model;
  std::optional<SplitState> split;
};
/// Stage 3 plus evaluation. `records` is consumed (the EUMS loop invalidates
/// labels of reassigned images).
Stage3Result stage3_train_and_eval(const RunConfig& config, const LinearSegmenter& base_model, const Dataset& base,
                                   const Dataset& novel, std::vector<PseudoLabelRecord> records, const Dataset& val,
                                   std::uint64_t seed, bool per_epoch_val);

/// All three stages for one seed without file output.
SeedResult run_seed(const RunConfig& config, const Dataset& base, const Dataset& novel, const Dataset& val,
                    std::uint64_t seed, bool per_epoch_val = false);

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& val_dir, MatchMode mode);

struct ReportOutput {
  std::string table;
  std::vector<std::string> warnings;
};

/// Aggregates completed run directories into an ablation table (one row per
/// run, one column per seed plus AVG) and lambda / eta sweep CSVs.
ReportOutput cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir);

/// Metrics CSV line for one epoch; the header is metrics_csv_header().
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace ncd::pipeline
