#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ncd/io.hpp"
#include "ncd/pipeline.hpp"

namespace ncd::pipeline {

namespace {

struct RunSummary {
  fs::path dir;
  RunConfig config;
  std::map<std::string, std::string> keys;
  std::vector<std::pair<std::string, double>> novel_miou;  // per seed label
  double mean = 0.0;
  double median = 0.0;
  bool compatible = true;
};

bool may_vary(const std::string& key) {
  return key.starts_with("ablation.") || key == "eums.lambda" || key == "eums.eta" || key == "run.cache";
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunSummary load_run(const fs::path& dir) {
  RunSummary s;
  s.dir = dir;
  const std::string text = io::read_text(dir / "config.txt");
  s.config = RunConfig::parse(text);
  s.keys = parse_key_values(text);
  std::istringstream in(io::read_text(dir / "summary.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() < 5) throw IoError(dir.string() + "/summary.csv: malformed row '" + line + "'");
    if (cols[0] == "mean") continue;
    s.novel_miou.emplace_back(cols[0], std::stod(cols[2]));
    values.push_back(std::stod(cols[2]));
  }
  if (values.empty()) throw IoError(dir.string() + " has no completed seeds");
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  s.median = median_of(values);
  return s;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

void write_sweep(const std::vector<RunSummary>& runs, const fs::path& path, const char* name,
                 double EumsConfig::*field) {
  std::set<double> distinct;
  for (const auto& r : runs)
    if (r.config.ablation.entropy_ranking) distinct.insert(r.config.eums.*field);
  if (distinct.size() < 2) return;
  std::vector<const RunSummary*> rows;
  for (const auto& r : runs)
    if (r.config.ablation.entropy_ranking) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(),
                   [field](const RunSummary* a, const RunSummary* b) { return a->config.eums.*field < b->config.eums.*field; });
  std::ostringstream os;
  os.precision(17);
  os << name << ",run,mean_novel_miou,median_novel_miou\n";
  for (const auto* r : rows) os << r->config.eums.*field << ',' << r->dir.filename().string() << ',' << r->mean << ',' << r->median << '\n';
  io::write_text(path, os.str());
}

}  // namespace

ReportOutput cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));

  ReportOutput out;
  const auto& ref = runs.front();
  for (auto& r : runs) {
    std::vector<std::string> diff;
    for (const auto& [k, v] : r.keys) {
      if (may_vary(k)) continue;
      auto it = ref.keys.find(k);
      if (it == ref.keys.end() || it->second != v) diff.push_back(k);
    }
    for (const auto& [k, v] : ref.keys)
      if (!may_vary(k) && !r.keys.count(k)) diff.push_back(k);
    if (r.novel_miou.size() != ref.novel_miou.size()) diff.push_back("run.seeds");
    if (!diff.empty()) {
      r.compatible = false;
      std::string msg = r.dir.string() + " is not comparable with " + ref.dir.string() + " (differs in";
      for (const auto& k : diff) msg += " " + k;
      out.warnings.push_back(msg + ")");
    }
  }

  std::vector<std::string> seed_cols;
  for (const auto& [label, v] : ref.novel_miou) seed_cols.push_back(label);

  std::ostringstream t, csv;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-24s %3s %3s %3s %3s", "run", "OC", "ER", "DR", "ST");
  t << buf;
  for (const auto& c : seed_cols) {
    std::snprintf(buf, sizeof buf, " %9s", c.c_str());
    t << buf;
  }
  t << "       AVG\n";
  csv << "run,over_clustering,entropy_ranking,dynamic_reassignment,self_training";
  for (const auto& c : seed_cols) csv << ',' << c;
  csv << ",avg,comparable\n";

  auto mark = [](bool on) { return on ? "x" : "-"; };
  for (const auto& r : runs) {
    const auto& a = r.config.ablation;
    std::string name = r.dir.filename().string();
    if (name.empty()) name = r.dir.parent_path().filename().string();
    if (!r.compatible) name += " !";
    std::snprintf(buf, sizeof buf, "%-24s %3s %3s %3s %3s", name.c_str(), mark(a.over_clustering),
                  mark(a.entropy_ranking), mark(a.dynamic_reassignment), mark(a.self_training));
    t << buf;
    csv << r.dir.string() << ',' << a.over_clustering << ',' << a.entropy_ranking << ',' << a.dynamic_reassignment
        << ',' << a.self_training;
    for (std::size_t i = 0; i < seed_cols.size(); ++i) {
      const std::string v = i < r.novel_miou.size() ? pct(r.novel_miou[i].second) : "n/a";
      std::snprintf(buf, sizeof buf, " %9s", v.c_str());
      t << buf;
      csv << ',' << v;
    }
    std::snprintf(buf, sizeof buf, " %9s\n", pct(r.mean).c_str());
    t << buf;
    csv << ',' << pct(r.mean) << ',' << (r.compatible ? 1 : 0) << '\n';
  }
  for (const auto& w : out.warnings) t << "! " << w << '\n';
  out.table = t.str();

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    io::write_text(out_dir / "ablation.txt", out.table);
    io::write_text(out_dir / "ablation.csv", csv.str());
    write_sweep(runs, out_dir / "lambda_sweep.csv", "lambda", &EumsConfig::lambda);
    write_sweep(runs, out_dir / "eta_sweep.csv", "eta", &EumsConfig::eta);
  }
  return out;
}

}  // namespace ncd::pipeline
