#include "ncd/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ncd/io.hpp"
#include "ncd/kernels.hpp"
#include "ncd/synth.hpp"

namespace ncd::pipeline {

namespace {

constexpr const char* kConfigName = "config.txt";
constexpr const char* kClustersName = "clusters.txt";

constexpr std::uint64_t kStage1Stream = 0x7374616765310000ULL;
constexpr std::uint64_t kStage2Stream = 0x7374616765320000ULL;
constexpr std::uint64_t kStage3Stream = 0x7374616765330000ULL;

std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Runs one stage, prefixing any failure with the stage name.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

Dataset pseudo_dataset(const Dataset& novel, const std::vector<PseudoLabelRecord>& records, const ClassSpace& cs) {
  Dataset out{SplitTag::novel, cs, {}};
  out.items.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& mask = r.novel_mask;
    std::vector<std::uint8_t> bits(mask.values().begin(), mask.values().end());
    out.items.push_back({r.image_id, novel.items[i].features, r.fused,
                         SaliencyMask(mask.height(), mask.width(), std::move(bits))});
  }
  return out;
}

std::string clusters_text(const std::vector<PseudoLabelRecord>& records, const ClusterModel& clusters) {
  std::vector<double> distance(records.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < clusters.owners.size(); ++j) distance[clusters.owners[j]] = std::sqrt(clusters.distances[j]);
  std::ostringstream os;
  os << "image_id cluster_index class_id novel_pixels distance\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << r.image_id << ' ';
    if (r.cluster_index)
      os << *r.cluster_index << ' ' << static_cast<int>(*r.cluster_class) << ' ' << r.novel_pixels() << ' '
         << fmt17(distance[i]);
    else
      os << "- - " << r.novel_pixels() << " -";
    os << '\n';
  }
  return os.str();
}

void write_stage2(const fs::path& dir, const Dataset& novel, const Stage2Result& s2, const ClassSpace& cs) {
  io::write_dataset(pseudo_dataset(novel, s2.records, cs), dir);
  io::write_text(dir / kClustersName, clusters_text(s2.records, s2.clusters));
}

std::vector<PseudoLabelRecord> read_stage2(const fs::path& dir, const Dataset& novel) {
  const Dataset pseudo = io::read_dataset(dir);
  if (pseudo.size() != novel.size()) throw IoError("cached pseudo-labels do not match the novel split");
  std::istringstream in(io::read_text(dir / kClustersName));
  std::string line;
  std::getline(in, line);
  std::vector<PseudoLabelRecord> records;
  records.reserve(pseudo.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    const auto& item = pseudo.items[i];
    if (item.id != novel.items[i].id || !item.labels || !item.saliency)
      throw IoError("cached pseudo-label record '" + item.id + "' is malformed");
    if (!std::getline(in, line)) throw IoError("cluster sidecar is truncated");
    std::istringstream row(line);
    std::string id, index, cls;
    row >> id >> index >> cls;
    if (id != item.id) throw IoError("cluster sidecar out of order at '" + id + "'");

    PseudoLabelRecord r;
    r.image_id = item.id;
    const auto& sal = item.saliency->values();
    r.novel_mask = NovelMask(item.saliency->height(), item.saliency->width(), std::vector<std::uint8_t>(sal.begin(), sal.end()));
    r.fused = *item.labels;
    r.base_labels = r.fused;
    for (std::size_t p = 0; p < r.base_labels.pixels(); ++p)
      if (r.novel_mask[p]) r.base_labels[p] = kBackgroundId;
    if (index != "-") {
      r.cluster_index = std::stoi(index);
      r.cluster_class = static_cast<ClassId>(std::stoi(cls));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string split_text(const SplitState& split) {
  std::ostringstream os;
  os << "image_id score split reassigned\n";
  auto emit = [&](const std::string& id, const char* which) {
    const auto it = split.scores.find(id);
    const bool moved = std::find(split.discarded.begin(), split.discarded.end(), id) != split.discarded.end();
    os << id << ' ' << (it == split.scores.end() ? std::string("-") : fmt17(it->second)) << ' ' << which << ' '
       << (moved ? 1 : 0) << '\n';
  };
  for (const auto& id : split.clean) emit(id, "clean");
  for (const auto& id : split.unclean) emit(id, "unclean");
  return os.str();
}

fs::path cache_root(const RunOptions& o) { return o.cache_dir.empty() ? o.benchmark_dir / "cache" : o.cache_dir; }

std::string isa_tag() { return std::string(kernels::to_string(kernels::active_isa())); }

}  // namespace

std::string metrics_csv_header() { return "epoch,L_base,L_clean,L_d,omega,clean_size,unclean_size,val_miou"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << ',' << fmt17(m.loss_base) << ',' << fmt17(m.loss_clean) << ',' << fmt17(m.loss_unclean) << ','
     << fmt17(m.omega) << ',' << m.clean_size << ',' << m.unclean_size << ',' << fmt17(m.val_miou);
  return os.str();
}

void cmd_synth(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  io::write_text(out_dir / kConfigName, config.to_text());
  spdlog::info("generating benchmark in {}", out_dir.string());
  const auto bench = synth::make_fold_benchmark(config.scene_spec(), config.fold, config.saliency);
  io::write_dataset(bench.base, out_dir / "base");
  io::write_dataset(bench.novel, out_dir / "novel");
  io::write_dataset(bench.val, out_dir / "val");
  spdlog::info("wrote {} base, {} novel, {} val images", bench.base.size(), bench.novel.size(), bench.val.size());
}

LoadedBenchmark load_benchmark(const fs::path& dir) {
  if (!fs::exists(dir / kConfigName)) throw IoError("no benchmark at " + dir.string() + " (missing config.txt)");
  LoadedBenchmark b;
  b.config = RunConfig::load(dir / kConfigName);
  b.base = io::read_dataset(dir / "base");
  b.novel = io::read_dataset(dir / "novel");
  b.val = io::read_dataset(dir / "val");
  return b;
}

LinearSegmenter stage1_base_model(const RunConfig& config, const Dataset& base, std::uint64_t seed) {
  TrainConfig cfg = config.base_train;
  cfg.seed = synth::derive_seed(seed, kStage1Stream);
  auto model = train_base(base, config.scene.feature_dim, cfg, [](int epoch, double loss) {
    spdlog::debug("stage 1 epoch {} loss {:.6f}", epoch, loss);
  });
  return round_to_checkpoint_precision(model);
}

Stage2Result stage2_pseudo_labels(const RunConfig& config, const LinearSegmenter& base_model, const Dataset& novel,
                                  std::uint64_t seed) {
  Stage2Result out;
  out.records = build_pseudo_labels(base_model, novel, config.eums.tau);
  out.clusters = cluster_novel_images(novel, out.records, config.class_space(), config.cluster_mode(),
                                      synth::derive_seed(seed, kStage2Stream));
  return out;
}

Stage3Result stage3_train_and_eval(const RunConfig& config, const LinearSegmenter& base_model, const Dataset& base,
                                   const Dataset& novel, std::vector<PseudoLabelRecord> records, const Dataset& val,
                                   std::uint64_t seed, bool per_epoch_val) {
  const auto mode = match_mode_for(config.cluster_mode());
  Stage3Result out;
  out.result.seed = seed;
  LoopHooks hooks;
  if (per_epoch_val)
    hooks.val_metric = [&val, mode](const LinearSegmenter& m) { return evaluate(m, val, mode).novel_miou; };
  hooks.on_epoch = [&out](const EpochMetrics& m) {
    out.result.metrics.push_back(m);
    spdlog::debug("stage 3 epoch {} L_base {:.5f} L_clean {:.5f} L_d {:.5f} val {:.4f}", m.epoch, m.loss_base,
                  m.loss_clean, m.loss_unclean, m.val_miou);
  };
  NovelTrainingData data{&base, &novel, &records};
  auto trained = train_eums(base_model, data, config.class_space(), config.eums, config.ablation, config.novel_train,
                            synth::derive_seed(seed, kStage3Stream), hooks);
  out.model = std::move(trained.model);
  out.split = std::move(trained.split);
  out.result.report = evaluate(out.model, val, mode);
  return out;
}

SeedResult run_seed(const RunConfig& config, const Dataset& base, const Dataset& novel, const Dataset& val,
                    std::uint64_t seed, bool per_epoch_val) {
  config.validate();
  const auto base_model = stage1_base_model(config, base, seed);
  auto s2 = stage2_pseudo_labels(config, base_model, novel, seed);
  return stage3_train_and_eval(config, base_model, base, novel, std::move(s2.records), val, seed, per_epoch_val).result;
}

RunResult cmd_run(const RunConfig& config, const RunOptions& options) {
  config.validate();
  fs::create_directories(options.run_dir);
  io::write_text(options.run_dir / kConfigName, config.to_text());

  auto bench = stage("loading benchmark", [&] { return load_benchmark(options.benchmark_dir); });
  if (bench.config.benchmark_key() != config.benchmark_key())
    throw ConfigError("benchmark at " + options.benchmark_dir.string() +
                      " was generated with different scene/fold/saliency settings");

  const fs::path cache = cache_root(options);
  if (config.cache) fs::create_directories(cache);

  RunResult run;
  for (const auto seed : config.seeds) {
    const fs::path seed_dir = options.run_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    SeedResult result;

    const fs::path ckpt = cache / ("base-" + config.stage1_key(seed) + "-" + isa_tag() + ".ncdm");
    LinearSegmenter base_model;
    if (config.cache && fs::exists(ckpt)) {
      base_model = stage("stage 1 (cache)", [&] { return load_checkpoint(ckpt, bench.base.class_space); });
      result.stage1_cached = true;
      spdlog::info("seed {}: base model from cache", seed);
    } else {
      spdlog::info("seed {}: stage 1 base training", seed);
      base_model = stage("stage 1 (base training)", [&] { return stage1_base_model(config, bench.base, seed); });
      if (config.cache) save_checkpoint(base_model, ckpt);
    }
    save_checkpoint(base_model, seed_dir / "base.ncdm");

    const ClassSpace cs = config.class_space();
    const fs::path pseudo_cache = cache / ("pseudo-" + config.stage2_key(seed) + "-" + isa_tag());
    std::vector<PseudoLabelRecord> records;
    if (config.cache && fs::exists(pseudo_cache / kClustersName)) {
      records = stage("stage 2 (cache)", [&] { return read_stage2(pseudo_cache, bench.novel); });
      fs::copy(pseudo_cache, seed_dir / "pseudo", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
      result.stage2_cached = true;
      spdlog::info("seed {}: pseudo-labels from cache", seed);
    } else {
      spdlog::info("seed {}: stage 2 pseudo-labels and clustering", seed);
      auto s2 = stage("stage 2 (pseudo-labels)",
                      [&] { return stage2_pseudo_labels(config, base_model, bench.novel, seed); });
      write_stage2(seed_dir / "pseudo", bench.novel, s2, cs);
      if (config.cache) {
        const fs::path tmp = pseudo_cache.string() + ".tmp";
        fs::remove_all(tmp);
        write_stage2(tmp, bench.novel, s2, cs);
        fs::remove_all(pseudo_cache);
        fs::rename(tmp, pseudo_cache);
      }
      records = std::move(s2.records);
    }
    fs::copy_file(seed_dir / "pseudo" / kClustersName, seed_dir / kClustersName,
                  fs::copy_options::overwrite_existing);

    spdlog::info("seed {}: stage 3 novel fine-tuning", seed);
    auto s3 = stage("stage 3 (novel fine-tuning)", [&] {
      return stage3_train_and_eval(config, base_model, bench.base, bench.novel, std::move(records), bench.val, seed,
                                   options.per_epoch_val);
    });
    s3.result.stage1_cached = result.stage1_cached;
    s3.result.stage2_cached = result.stage2_cached;

    std::string csv = metrics_csv_header() + "\n";
    for (const auto& m : s3.result.metrics) csv += metrics_csv_row(m) + "\n";
    io::write_text(seed_dir / "metrics.csv", csv);
    if (s3.split) io::write_text(seed_dir / "split.txt", split_text(*s3.split));
    save_checkpoint(s3.model, seed_dir / "novel.ncdm");
    const std::string label = "seed_" + std::to_string(seed);
    io::write_text(seed_dir / "eval.txt", s3.result.report.to_key_value());
    io::write_text(seed_dir / "eval.csv", EvalReport::csv_header() + "\n" + s3.result.report.csv_row(label) + "\n");
    spdlog::info("seed {}: novel mIoU {:.4f} base mIoU {:.4f}", seed, s3.result.report.novel_miou,
                 s3.result.report.base_miou);
    run.seeds.push_back(std::move(s3.result));
  }

  std::string summary = EvalReport::csv_header() + "\n";
  for (const auto& s : run.seeds) {
    summary += s.report.csv_row("seed_" + std::to_string(s.seed)) + "\n";
    run.mean_novel_miou += s.report.novel_miou;
    run.mean_base_miou += s.report.base_miou;
    run.mean_all_miou += s.report.all_miou;
  }
  const double n = static_cast<double>(run.seeds.size());
  run.mean_novel_miou /= n;
  run.mean_base_miou /= n;
  run.mean_all_miou /= n;
  summary += "mean," + fmt17(run.mean_base_miou) + "," + fmt17(run.mean_novel_miou) + "," + fmt17(run.mean_all_miou) +
             "," + to_string(match_mode_for(config.cluster_mode())) + "\n";
  io::write_text(options.run_dir / "summary.csv", summary);
  return run;
}

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& val_dir, MatchMode mode) {
  const Dataset val = io::read_dataset(val_dir);
  const auto bytes = io::read_file(checkpoint);
  io::ByteReader r(bytes);
  if (!r.magic(kCheckpointMagic)) throw IoError(checkpoint.string() + " is not a model checkpoint");
  r.u32();
  const int channels = static_cast<int>(r.u32());
  const ClassSpace& vcs = val.class_space;
  const int head = channels - vcs.n_base;
  if (head < vcs.n_novel || head % vcs.n_novel != 0)
    throw ShapeError("checkpoint has " + std::to_string(channels) + " outputs, which does not fit " +
                     std::to_string(vcs.n_base) + " base and " + std::to_string(vcs.n_novel) + " novel classes");
  const ClassSpace cs = head == vcs.n_novel ? ClassSpace::exact(vcs.n_base, vcs.n_novel)
                                            : ClassSpace::over(vcs.n_base, vcs.n_novel, head / vcs.n_novel);
  return evaluate(load_checkpoint(checkpoint, cs), val, mode);
}

}  // namespace ncd::pipeline
