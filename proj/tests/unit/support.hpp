#pragma once

// Random fixtures shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>

#include "ncd/core.hpp"
#include "ncd/segmenter.hpp"

namespace ncd::testing {

inline FeatureMap random_features(std::mt19937_64& rng, int h, int w, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  FeatureMap f(h, w, d);
  for (auto& v : f.values()) v = static_cast<float>(n(rng));
  return f;
}

inline LabelMap random_labels(std::mt19937_64& rng, int h, int w, int n_classes, double ignore_rate = 0.0) {
  std::uniform_int_distribution<int> cls(0, n_classes - 1);
  std::bernoulli_distribution ignore(ignore_rate);
  LabelMap y(h, w);
  for (std::size_t i = 0; i < y.pixels(); ++i) y[i] = ignore(rng) ? kIgnoreId : static_cast<ClassId>(cls(rng));
  return y;
}

template <class Mask>
Mask random_mask(std::mt19937_64& rng, int h, int w, double p) {
  std::bernoulli_distribution on(p);
  Mask m(h, w);
  for (std::size_t i = 0; i < m.pixels(); ++i) m.set(i, on(rng));
  return m;
}

inline LinearSegmenter random_model(std::mt19937_64& rng, const ClassSpace& cs, int channels, int dim,
                                    double scale = 0.5) {
  LinearSegmenter m(cs, channels, dim);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : m.params()) p = n(rng);
  return m;
}

/// Temporary directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ncd_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ncd::testing
