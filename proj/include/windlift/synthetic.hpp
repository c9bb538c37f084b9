#pragma once

// Synthetic snapshot sets with known structure, used for ablations and
// regression tests.

#include <windlift/cubature.hpp>
#include <windlift/geometry.hpp>
#include <windlift/training.hpp>

#include <cstdint>
#include <random>

namespace windlift {

struct RigidSeparationParams {
  int snapshots = 24;
  int points_per_snapshot = 600;
  double cut_x = 0.5;
  /// Fraction of snapshots recorded before the cut opens (alpha = 0).
  double uncut_fraction = 0.25;
  double translation_scale = 0.3;
  double rotation_scale = 0.3;
  std::uint64_t seed = 0;
};

/// Vertical straight cut through the unit square. Before the cut opens the
/// whole sheet moves rigidly; afterwards each side carries its own
/// infinitesimal rigid motion (translation plus rotation about the normal).
inline SnapshotDataset make_rigid_separation_dataset(const RigidSeparationParams& params) {
  SnapshotDataset ds;
  ds.curve = CutCurve({{{params.cut_x, -0.05}, {params.cut_x, 1.05}}}, 1.0);
  const Polygon square = Polygon::rectangle({0, 0}, {1, 1});
  std::mt19937_64 rng(params.seed);
  const int uncut = static_cast<int>(params.uncut_fraction * params.snapshots);
  auto rigid = [&](const Point2& center) {
    Eigen::Vector3d t;
    for (int c = 0; c < 3; ++c) t[c] = params.translation_scale * standard_normal(rng);
    const double w = params.rotation_scale * standard_normal(rng);
    return [t, w, center](const Point2& x) {
      const Vector2 r = x - center;
      return Eigen::Vector3d(t.x() - w * r.y(), t.y() + w * r.x(), t.z());
    };
  };
  const Point2 left_c(0.5 * params.cut_x, 0.5);
  const Point2 right_c(0.5 * (1.0 + params.cut_x), 0.5);
  for (int j = 0; j < params.snapshots; ++j) {
    Snapshot s;
    s.alpha = j < uncut ? 0.0 : 1.0;
    s.points = sample_cubature(square, static_cast<std::size_t>(params.points_per_snapshot), rng()).points;
    const auto left = rigid(left_c);
    const auto right = j < uncut ? left : rigid(right_c);
    for (const Point2& x : s.points) s.displacements.push_back(x.x() < params.cut_x ? left(x) : right(x));
    ds.snapshots.push_back(std::move(s));
  }
  return ds;
}

}  // namespace windlift
