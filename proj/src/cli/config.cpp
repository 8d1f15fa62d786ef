#include "ncd/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "ncd/io.hpp"

namespace ncd {

synth::SceneSpec SceneConfig::build(int n_classes, int first_novel) const {
  if (bimodal_novel < 0 || first_novel + bimodal_novel > n_classes)
    throw ConfigError("scene.bimodal_novel must lie in [0, fold.n_novel]");
  synth::SceneSpec s;
  s.height = height;
  s.width = width;
  s.feature_dim = feature_dim;
  s.prototypes = synth::random_prototypes(n_classes + bimodal_novel, feature_dim, separation, prototype_seed);
  if (bimodal_novel > 0) {
    s.alt_prototypes.resize(n_classes);
    for (int k = 0; k < bimodal_novel; ++k) s.alt_prototypes[first_novel + k] = s.prototypes[n_classes + k];
  }
  s.prototypes.resize(n_classes);
  s.sigma = sigma;
  s.instance_sigma = instance_sigma;
  s.min_objects = min_objects;
  s.max_objects = max_objects;
  s.shapes = shapes;
  return s;
}

RunConfig::RunConfig() {
  base_train.epochs = 20;
  base_train.batch_size = 16;
  base_train.lr_decay_epoch = 15;
  novel_train.epochs = 30;
  novel_train.batch_size = 8;
  novel_train.lr_decay_epoch = 15;
}

ClassSpace RunConfig::class_space() const {
  return ablation.over_clustering ? ClassSpace::over(fold.n_base(), fold.n_novel, eums.over_factor)
                                  : ClassSpace::exact(fold.n_base(), fold.n_novel);
}

void RunConfig::validate() const {
  fold.validate();
  saliency.validate();
  base_train.validate();
  novel_train.validate();
  eums.validate();
  ablation.validate();
  class_space().validate();
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  scene_spec().validate();
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string shapes_name(synth::ShapeFamily s) {
  switch (s) {
    case synth::ShapeFamily::rectangles: return "rectangles";
    case synth::ShapeFamily::ellipses: return "ellipses";
    case synth::ShapeFamily::mixed: return "mixed";
  }
  return "mixed";
}

synth::ShapeFamily shapes_from(const std::string& key, const std::string& v) {
  if (v == "rectangles") return synth::ShapeFamily::rectangles;
  if (v == "ellipses") return synth::ShapeFamily::ellipses;
  if (v == "mixed") return synth::ShapeFamily::mixed;
  throw ConfigError("invalid value for " + key + ": '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Field int_field(std::string key, int& ref) {
  return {key, [&ref] { return std::to_string(ref); }, [&ref, key](const std::string& v) { ref = parse_number<int>(key, v); }};
}
Field u64_field(std::string key, std::uint64_t& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& v) { ref = parse_number<std::uint64_t>(key, v); }};
}
Field real_field(std::string key, double& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) { ref = parse_number<double>(key, v); }};
}
Field bool_field(std::string key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& v) { ref = parse_bool(key, v); }};
}

void train_fields(std::vector<Field>& f, const std::string& prefix, TrainConfig& t) {
  f.push_back(real_field(prefix + ".learning_rate", t.learning_rate));
  f.push_back(real_field(prefix + ".momentum", t.momentum));
  f.push_back(real_field(prefix + ".weight_decay", t.weight_decay));
  f.push_back(int_field(prefix + ".epochs", t.epochs));
  f.push_back(int_field(prefix + ".batch_size", t.batch_size));
  f.push_back(int_field(prefix + ".lr_decay_epoch", t.lr_decay_epoch));
  f.push_back(real_field(prefix + ".lr_decay_factor", t.lr_decay_factor));
}

// Field order here is the order of the canonical text form.
std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back(int_field("scene.height", c.scene.height));
  f.push_back(int_field("scene.width", c.scene.width));
  f.push_back(int_field("scene.feature_dim", c.scene.feature_dim));
  f.push_back(real_field("scene.sigma", c.scene.sigma));
  f.push_back(real_field("scene.instance_sigma", c.scene.instance_sigma));
  f.push_back(real_field("scene.separation", c.scene.separation));
  f.push_back(u64_field("scene.prototype_seed", c.scene.prototype_seed));
  f.push_back(int_field("scene.min_objects", c.scene.min_objects));
  f.push_back(int_field("scene.max_objects", c.scene.max_objects));
  f.push_back({"scene.shapes", [&c] { return shapes_name(c.scene.shapes); },
               [&c](const std::string& v) { c.scene.shapes = shapes_from("scene.shapes", v); }});
  f.push_back(int_field("scene.bimodal_novel", c.scene.bimodal_novel));

  f.push_back(int_field("fold.n_base_fg", c.fold.n_base_fg));
  f.push_back(int_field("fold.n_novel", c.fold.n_novel));
  f.push_back(int_field("fold.base_images", c.fold.base_images));
  f.push_back(int_field("fold.novel_images", c.fold.novel_images));
  f.push_back(int_field("fold.val_images", c.fold.val_images));
  f.push_back(int_field("fold.max_novel_objects", c.fold.max_novel_objects));
  f.push_back(u64_field("fold.seed", c.fold.seed));

  f.push_back(int_field("saliency.boundary_erode_dilate", c.saliency.boundary_erode_dilate));
  f.push_back(real_field("saliency.flip_rate", c.saliency.flip_rate));
  f.push_back(real_field("saliency.miss_rate", c.saliency.miss_rate));

  train_fields(f, "base_train", c.base_train);
  train_fields(f, "novel_train", c.novel_train);

  f.push_back(real_field("eums.tau", c.eums.tau));
  f.push_back(real_field("eums.lambda", c.eums.lambda));
  f.push_back(real_field("eums.eta", c.eums.eta));
  f.push_back(real_field("eums.ramp_length", c.eums.ramp_length));
  f.push_back(int_field("eums.reassign_epoch", c.eums.reassign_epoch));
  f.push_back(real_field("eums.ema_momentum", c.eums.ema_momentum));
  f.push_back(int_field("eums.epochs", c.eums.epochs));
  f.push_back(int_field("eums.over_factor", c.eums.over_factor));
  f.push_back(real_field("eums.flip_prob", c.eums.augment.flip_prob));
  f.push_back(real_field("eums.strong_noise_sigma", c.eums.augment.strong_noise_sigma));
  f.push_back(real_field("eums.scale_jitter", c.eums.augment.scale_jitter));

  f.push_back(bool_field("ablation.over_clustering", c.ablation.over_clustering));
  f.push_back(bool_field("ablation.entropy_ranking", c.ablation.entropy_ranking));
  f.push_back(bool_field("ablation.dynamic_reassignment", c.ablation.dynamic_reassignment));
  f.push_back(bool_field("ablation.self_training", c.ablation.self_training));

  f.push_back({"run.seeds",
               [&c] {
                 std::string s;
                 for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                 return s;
               },
               [&c](const std::string& v) {
                 c.seeds.clear();
                 std::stringstream ss(v);
                 std::string item;
                 while (std::getline(ss, item, ','))
                   if (!trim(item).empty()) c.seeds.push_back(parse_number<std::uint64_t>("run.seeds", trim(item)));
               }});
  f.push_back(bool_field("run.cache", c.cache));
  return f;
}

std::string hash_of(const std::string& text) { return io::hex64(io::fnv1a(text)); }

std::string section_text(const RunConfig& c, std::initializer_list<std::string_view> prefixes) {
  std::string out;
  auto copy = c;
  for (const auto& field : fields(copy))
    for (auto p : prefixes)
      if (field.key.starts_with(p)) out += field.key + "=" + field.get() + "\n";
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string RunConfig::to_text() const {
  std::string out;
  auto copy = *this;
  std::string section;
  for (const auto& field : fields(copy)) {
    auto sec = field.key.substr(0, field.key.find('.'));
    if (sec != section) {
      if (!section.empty()) out += "\n";
      section = sec;
    }
    out += field.key + " = " + field.get() + "\n";
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  auto fs = fields(c);
  for (const auto& [key, value] : parse_key_values(text)) {
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(value);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return parse(io::read_text(path)); }

std::string RunConfig::benchmark_key() const { return hash_of(section_text(*this, {"scene.", "fold.", "saliency."})); }

std::string RunConfig::stage1_key(std::uint64_t seed) const {
  return hash_of(benchmark_key() + section_text(*this, {"base_train."}) + "seed=" + std::to_string(seed));
}

std::string RunConfig::stage2_key(std::uint64_t seed) const {
  return hash_of(stage1_key(seed) + "tau=" + fmt(eums.tau) + "mode=" + to_string(cluster_mode()) +
                 "over_factor=" + std::to_string(eums.over_factor));
}

}  // namespace ncd
