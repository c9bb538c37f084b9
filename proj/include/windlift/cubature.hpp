#pragma once

#include <windlift/geometry.hpp>
#include <windlift/neural.hpp>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace windlift {

/// Uniform Monte-Carlo cubature: N points with equal weights |domain| / N.
struct CubatureSet {
  std::vector<Point2> points;
  std::vector<double> weights;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
};

/// Rejection-sample n uniform points in the polygon; deterministic per seed.
inline CubatureSet sample_cubature(const Polygon& domain, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("cubature needs at least one point");
  const double area = domain.outer.size() >= 3 ? domain.area() : 0.0;
  if (!(area > 0.0)) throw std::invalid_argument("cubature domain has zero area");
  const auto [lo, hi] = domain.bounds();
  std::mt19937_64 rng(seed);
  CubatureSet set;
  set.seed = seed;
  set.points.reserve(n);
  const std::size_t max_tries = 1000 * n + 100000;
  for (std::size_t tries = 0; set.points.size() < n; ++tries) {
    if (tries > max_tries) throw std::runtime_error("rejection sampling failed; domain too thin for its bounding box");
    // Separate statements: argument evaluation order is unspecified.
    const double x = uniform(rng, lo.x(), hi.x());
    const double y = uniform(rng, lo.y(), hi.y());
    const Point2 p(x, y);
    if (domain.contains(p)) set.points.push_back(p);
  }
  set.weights.assign(n, area / static_cast<double>(n));
  return set;
}

}  // namespace windlift
