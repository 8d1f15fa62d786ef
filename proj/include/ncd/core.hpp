#pragma once

// Shared data model: class spaces, per-pixel tensors, label maps and datasets.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

using ClassId = std::uint8_t;

inline constexpr ClassId kIgnoreId = 255;
inline constexpr ClassId kBackgroundId = 0;

/// Partition of the label space. Base ids (background included) come first,
/// novel output channels follow at [n_base, n_base + novel_head_size).
struct ClassSpace {
  int n_base = 1;
  int n_novel = 1;
  int novel_head_size = 1;

  /// Exact head: one channel per novel class.
  static ClassSpace exact(int n_base, int n_novel);
  /// Over-clustering head: `factor * n_novel` provisional channels.
  static ClassSpace over(int n_base, int n_novel, int factor);

  int n_total() const { return n_base + n_novel; }
  int channels() const { return n_base + novel_head_size; }
  bool is_novel_channel(int id) const { return id >= n_base && id < channels(); }
  void validate() const;

  bool operator==(const ClassSpace&) const = default;
};

/// H x W x D features, pixel-major (all D channels of a pixel are contiguous).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int dim);
  FeatureMap(int height, int width, int dim, std::vector<float> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  std::span<const float> pixel(std::size_t index) const {
    return {values_.data() + index * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<float> pixel(std::size_t index) {
    return {values_.data() + index * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  std::vector<float> values_;
};

/// Per-pixel class ids; kIgnoreId marks pixels excluded from losses and metrics.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, ClassId fill = kBackgroundId);
  LabelMap(int height, int width, std::vector<ClassId> values);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return values_.size(); }

  ClassId operator[](std::size_t i) const { return values_[i]; }
  ClassId& operator[](std::size_t i) { return values_[i]; }
  ClassId at(int h, int w) const { return values_[static_cast<std::size_t>(h) * width_ + w]; }
  ClassId& at(int h, int w) { return values_[static_cast<std::size_t>(h) * width_ + w]; }
  std::span<const ClassId> values() const { return values_; }

  bool operator==(const LabelMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<ClassId> values_;
};

/// Per-pixel probability simplex over `channels` classes.
class ProbMap {
 public:
  ProbMap() = default;
  ProbMap(int height, int width, int channels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  std::span<const double> pixel(std::size_t i) const {
    return {values_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<double> pixel(std::size_t i) {
    return {values_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Binary H x W map. The tag keeps saliency and novel masks from being mixed up.
template <class Tag>
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}
  BinaryMask(int height, int width, std::vector<std::uint8_t> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(height) * width) throw ShapeError("mask size mismatch");
    for (auto v : values_)
      if (v > 1) throw Error("mask values must be 0 or 1");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return values_.size(); }

  bool operator[](std::size_t i) const { return values_[i] != 0; }
  void set(std::size_t i, bool on) { values_[i] = on ? 1 : 0; }
  bool at(int h, int w) const { return values_[static_cast<std::size_t>(h) * width_ + w] != 0; }
  std::span<const std::uint8_t> values() const { return values_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values_) n += v;
    return n;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

struct SaliencyTag {};
struct NovelTag {};
using SaliencyMask = BinaryMask<SaliencyTag>;
using NovelMask = BinaryMask<NovelTag>;

enum class SplitTag { base, novel, val };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

struct DatasetItem {
  std::string id;
  FeatureMap features;
  std::optional<LabelMap> labels;
  std::optional<SaliencyMask> saliency;

  bool operator==(const DatasetItem&) const = default;
};

struct Dataset {
  SplitTag split = SplitTag::base;
  ClassSpace class_space;
  std::vector<DatasetItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  /// Checks shapes, label ranges, unique ids and split-specific requirements.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Index of the largest channel at `pixel`; ties go to the lowest id.
ClassId argmax_class(const ProbMap& prob, std::size_t pixel);
ClassId argmax_class(std::span<const double> probs);

}  // namespace ncd
