#include "ncd/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ncd {

ClassSpace ClassSpace::exact(int n_base, int n_novel) {
  ClassSpace cs{n_base, n_novel, n_novel};
  cs.validate();
  return cs;
}

ClassSpace ClassSpace::over(int n_base, int n_novel, int factor) {
  if (factor < 1) throw ConfigError("over_factor must be >= 1");
  ClassSpace cs{n_base, n_novel, n_novel * factor};
  cs.validate();
  return cs;
}

void ClassSpace::validate() const {
  if (n_base < 1) throw ConfigError("n_base must be >= 1 (background included)");
  if (n_novel < 1) throw ConfigError("n_novel must be >= 1");
  if (novel_head_size < 1) throw ConfigError("novel_head_size must be >= 1");
  if (channels() >= kIgnoreId || n_total() >= kIgnoreId)
    throw ConfigError("class space collides with ignore id 255");
}

FeatureMap::FeatureMap(int height, int width, int dim)
    : FeatureMap(height, width, dim,
                 std::vector<float>(static_cast<std::size_t>(height) * width * dim, 0.0f)) {}

FeatureMap::FeatureMap(int height, int width, int dim, std::vector<float> values)
    : height_(height), width_(width), dim_(dim), values_(std::move(values)) {
  if (height < 1 || width < 1 || dim < 1) throw ShapeError("feature map dimensions must be >= 1");
  if (values_.size() != static_cast<std::size_t>(height) * width * dim)
    throw ShapeError("feature payload does not match H*W*D");
  for (float v : values_)
    if (!std::isfinite(v)) throw Error("feature map contains non-finite values");
}

LabelMap::LabelMap(int height, int width, ClassId fill)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill) {}

LabelMap::LabelMap(int height, int width, std::vector<ClassId> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(height) * width) throw ShapeError("label map size mismatch");
}

ProbMap::ProbMap(int height, int width, int channels)
    : height_(height),
      width_(width),
      channels_(channels),
      values_(static_cast<std::size_t>(height) * width * channels, 0.0) {}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::base: return "base";
    case SplitTag::novel: return "novel";
    case SplitTag::val: return "val";
  }
  return "unknown";
}

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "base") return SplitTag::base;
  if (s == "novel") return SplitTag::novel;
  if (s == "val") return SplitTag::val;
  throw Error("unknown split tag '" + s + "'");
}

void Dataset::validate() const {
  class_space.validate();
  std::unordered_set<std::string> ids;
  const int label_limit = split == SplitTag::base
                              ? class_space.n_base
                              : std::max(class_space.n_total(), class_space.channels());
  for (const auto& item : items) {
    if (!ids.insert(item.id).second) throw Error("duplicate image id '" + item.id + "'");
    const auto& f = item.features;
    if (f.dim() < 1) throw ShapeError("item '" + item.id + "' has an empty feature map");
    if (item.labels) {
      if (item.labels->height() != f.height() || item.labels->width() != f.width())
        throw ShapeError("item '" + item.id + "' label shape differs from features");
      for (ClassId c : item.labels->values())
        if (c != kIgnoreId && c >= label_limit)
          throw Error("item '" + item.id + "' has label " + std::to_string(c) + " outside the class space");
    }
    if (item.saliency &&
        (item.saliency->height() != f.height() || item.saliency->width() != f.width()))
      throw ShapeError("item '" + item.id + "' saliency shape differs from features");
    if (split == SplitTag::base && !item.labels)
      throw Error("base item '" + item.id + "' is missing labels");
    if (split == SplitTag::novel && !item.saliency)
      throw Error("novel item '" + item.id + "' is missing a saliency mask");
  }
}

ClassId argmax_class(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return static_cast<ClassId>(best);
}

ClassId argmax_class(const ProbMap& prob, std::size_t pixel) {
  return argmax_class(prob.pixel(pixel));
}

}  // namespace ncd
