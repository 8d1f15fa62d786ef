#include <algorithm>
#include <cassert>
#include <limits>
#include <random>

#include "ncd/clustering.hpp"
#include "ncd/kernels.hpp"

namespace ncd {

std::string to_string(ClusterMode mode) { return mode == ClusterMode::exact ? "exact" : "over"; }

ClusterMode cluster_mode_from_string(const std::string& s) {
  if (s == "exact") return ClusterMode::exact;
  if (s == "over") return ClusterMode::over;
  throw ConfigError("unknown cluster mode '" + s + "'");
}

Point masked_mean_feature(const FeatureMap& x, const NovelMask& mask, std::size_t min_pixels) {
  if (mask.height() != x.height() || mask.width() != x.width()) throw ShapeError("mask and features differ in shape");
  const std::size_t n = mask.count();
  if (n == 0 || n < min_pixels)
    throw Error("novel mask has " + std::to_string(n) + " pixels, need at least " + std::to_string(std::max<std::size_t>(min_pixels, 1)));
  const auto& k = kernels::active();
  Point acc(x.dim(), 0.0);
  for (std::size_t i = 0; i < x.pixels(); ++i)
    if (mask[i]) k.accumulate_f32(x.pixel(i).data(), acc.data(), acc.size());
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

namespace {

struct Nearest {
  int index;
  double distance;
};

Nearest nearest(const Point& p, const std::vector<Point>& centroids) {
  const auto& k = kernels::active();
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = k.squared_distance(p.data(), centroids[c].data(), p.size());
    if (d < best.distance) best = {static_cast<int>(c), d};
  }
  return best;
}

// k-means++: first centre uniform, later ones with probability proportional to
// the squared distance to the nearest chosen centre.
std::vector<Point> seed_plus_plus(const std::vector<Point>& points, int k, std::mt19937_64& rng) {
  const auto& kern = kernels::active();
  std::vector<Point> centroids;
  centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng)]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    d2[i] = kern.squared_distance(points[i].data(), centroids[0].data(), points[i].size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (r < d2[i]) {
          pick = i;
          break;
        }
        r -= d2[i];
      }
    } else {
      // All remaining points coincide with a centre; take the first unused index.
      pick = centroids.size() % points.size();
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i)
      d2[i] = std::min(d2[i], kern.squared_distance(points[i].data(), centroids.back().data(), points[i].size()));
  }
  return centroids;
}

}  // namespace

ClusterModel kmeans(const std::vector<Point>& points, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw Error("kmeans: k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k))
    throw Error("kmeans: " + std::to_string(points.size()) + " points cannot form " + std::to_string(k) + " clusters");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw ShapeError("kmeans: points differ in dimension");

  std::mt19937_64 rng(seed);
  ClusterModel m;
  m.k = k;
  m.centroids = seed_plus_plus(points, k, rng);
  m.assignments.assign(points.size(), -1);
  m.distances.assign(points.size(), 0.0);

  auto assign_all = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto n = nearest(points[i], m.centroids);
      // Ties keep the current centroid so repaired clusters are not emptied again.
      if (m.assignments[i] >= 0 && n.index != m.assignments[i]) {
        const double cur = kernels::active().squared_distance(points[i].data(), m.centroids[m.assignments[i]].data(),
                                                              points[i].size());
        if (cur <= n.distance) n = {m.assignments[i], cur};
      }
      if (n.index != m.assignments[i]) changed = true;
      m.assignments[i] = n.index;
      m.distances[i] = n.distance;
    }
    return changed;
  };
  auto current_inertia = [&] {
    double s = 0.0;
    for (double d : m.distances) s += d;
    return s;
  };

  assign_all();
  for (m.iterations = 0; m.iterations < max_iter; ++m.iterations) {
    // Update step, summing members in index order.
    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[m.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[m.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) m.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    // Empty clusters take the point farthest from its own centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = kernels::active().squared_distance(points[i].data(), m.centroids[m.assignments[i]].data(), dim);
        if (d > best && counts[m.assignments[i]] > 1) {
          best = d;
          far = i;
        }
      }
      --counts[m.assignments[far]];
      m.centroids[c] = points[far];
      m.assignments[far] = c;
      counts[c] = 1;
    }
    for (std::size_t i = 0; i < points.size(); ++i)
      m.distances[i] = kernels::active().squared_distance(points[i].data(), m.centroids[m.assignments[i]].data(), dim);
    m.inertia_trace.push_back(current_inertia());
    if (m.inertia_trace.size() > 1) {
      [[maybe_unused]] const double prev = m.inertia_trace[m.inertia_trace.size() - 2];
      assert(m.inertia_trace.back() <= prev + 1e-9 * (1.0 + prev) && "Lloyd step increased inertia");
    }
    if (!assign_all()) {
      ++m.iterations;
      break;
    }
  }
  m.inertia = current_inertia();
  return m;
}

std::vector<ClassId> assign_cluster_classes(const ClusterModel& model, const ClassSpace& cs, ClusterMode mode) {
  if (mode == ClusterMode::exact && model.k != cs.n_novel)
    throw ConfigError("exact clustering needs k = n_novel (" + std::to_string(cs.n_novel) + "), got " +
                      std::to_string(model.k));
  if (model.k != cs.novel_head_size)
    throw ConfigError("cluster count " + std::to_string(model.k) + " differs from the novel head size " +
                      std::to_string(cs.novel_head_size));
  std::vector<ClassId> classes(model.k);
  for (int j = 0; j < model.k; ++j) classes[j] = static_cast<ClassId>(cs.n_base + j);
  return classes;
}

ClusterModel cluster_novel_images(const Dataset& novel, std::vector<PseudoLabelRecord>& records,
                                  const ClassSpace& cs, ClusterMode mode, std::uint64_t seed) {
  if (records.size() != novel.size()) throw Error("pseudo-label records do not match the novel split");
  std::vector<Point> points;
  std::vector<std::size_t> owners;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].clusterable()) continue;
    points.push_back(masked_mean_feature(novel.items[i].features, records[i].novel_mask));
    owners.push_back(i);
  }
  auto model = kmeans(points, cs.novel_head_size, seed);
  model.owners = owners;
  const auto classes = assign_cluster_classes(model, cs, mode);
  for (std::size_t j = 0; j < owners.size(); ++j) {
    const int c = model.assignments[j];
    assign_cluster(records[owners[j]], c, classes[c]);
  }
  return model;
}

}  // namespace ncd
