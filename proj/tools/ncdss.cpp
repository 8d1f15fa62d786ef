// ncdss: benchmark generation, training runs, evaluation and ablation reports.
//
//   ncdss synth  --out bench [--config run.cfg] [--set key=value]...
//   ncdss run    --benchmark bench --out runs/full [--config run.cfg] [--set key=value]...
//   ncdss eval   --checkpoint runs/full/seed_0/novel.ncdm --val bench/val [--match many-to-one]
//   ncdss report --out report runs/basic runs/full ...
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
// NCD_LOG_LEVEL (trace, debug, info, warn, error, off) sets log verbosity.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "ncd/io.hpp"
#include "ncd/kernels.hpp"
#include "ncd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ncd;

namespace {

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text = path.empty() ? std::string() : io::read_text(path);
  for (const auto& kv : overrides) {
    if (kv.find('=') == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    text += "\n" + kv;
  }
  return RunConfig::parse(text);
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("ncdss");
  logger->set_pattern("[%H:%M:%S] [%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("NCD_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Novel class discovery for semantic segmentation on synthetic feature maps"};
  app.require_subcommand(1);
  std::string isa = "auto";
  app.add_option("--isa", isa, "Kernel set: auto, scalar or avx2")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  std::string config_path, out_dir, bench_dir, cache_dir, checkpoint, val_dir, match = "auto";
  std::vector<std::string> overrides, run_dirs;
  bool no_cache = false, no_val = false;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a benchmark (base, novel and val splits)");
  synth_cmd->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  synth_cmd->add_option("--set", overrides, "Override a config key (key=value)");
  synth_cmd->add_option("--out", out_dir, "Benchmark directory")->required();

  auto* run_cmd = app.add_subcommand("run", "Train and evaluate every configured seed");
  run_cmd->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  run_cmd->add_option("--set", overrides, "Override a config key (key=value)");
  run_cmd->add_option("--benchmark", bench_dir, "Benchmark directory from `synth`")->required();
  run_cmd->add_option("--out", out_dir, "Run directory")->required();
  run_cmd->add_option("--cache-dir", cache_dir, "Stage artifact cache (default <benchmark>/cache)");
  run_cmd->add_flag("--no-cache", no_cache, "Neither read nor write cached stage artifacts");
  run_cmd->add_flag("--no-val", no_val, "Skip the per-epoch validation column");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a novel-model checkpoint on a labelled split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--val", val_dir, "Labelled dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--match", match, "Cluster matching: auto, one-to-one or many-to-one")
      ->check(CLI::IsMember({"auto", "one-to-one", "many-to-one"}));

  auto* report_cmd = app.add_subcommand("report", "Ablation table and parameter sweeps over run directories");
  report_cmd->add_option("runs", run_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", out_dir, "Directory for ablation.csv and sweep CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (isa != "auto") {
      const auto want = kernels::isa_from_string(isa);
      if (!kernels::isa_supported(want)) {
        std::cerr << "error: this CPU does not support the " << isa << " kernels\n";
        return 1;
      }
      kernels::select_isa(want);
    }
    spdlog::debug("kernels: {}", kernels::to_string(kernels::active_isa()));

    if (*synth_cmd) {
      pipeline::cmd_synth(load_config(config_path, overrides), out_dir);
    } else if (*run_cmd) {
      auto config = load_config(config_path, overrides);
      if (no_cache) config.cache = false;
      pipeline::RunOptions opts{bench_dir, out_dir, cache_dir, !no_val};
      const auto result = pipeline::cmd_run(config, opts);
      for (const auto& s : result.seeds)
        std::cout << "seed " << s.seed << ": novel mIoU " << s.report.novel_miou << ", base mIoU "
                  << s.report.base_miou << "\n";
      std::cout << "mean novel mIoU " << result.mean_novel_miou << " over " << result.seeds.size() << " seed(s)\n";
    } else if (*eval_cmd) {
      MatchMode mode = MatchMode::one_to_one;
      if (match == "many-to-one") mode = MatchMode::many_to_one;
      if (match == "auto") {
        // Over-clustered heads have more novel channels than novel classes.
        const auto val = io::read_dataset(val_dir);
        const auto bytes = io::read_file(checkpoint);
        io::ByteReader r(bytes);
        r.magic(kCheckpointMagic);
        r.u32();
        if (static_cast<int>(r.u32()) > val.class_space.n_total()) mode = MatchMode::many_to_one;
      }
      std::cout << pipeline::cmd_eval(checkpoint, val_dir, mode).to_key_value();
    } else if (*report_cmd) {
      const auto report = pipeline::cmd_report(std::vector<fs::path>(run_dirs.begin(), run_dirs.end()), out_dir);
      std::cout << report.table;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
