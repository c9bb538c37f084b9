#pragma once

#include <windlift/cubature.hpp>
#include <windlift/elasticity.hpp>
#include <windlift/geometry.hpp>

#include <Eigen/Core>

#include <string>
#include <vector>

namespace windlift {

enum class InnerSolver { gradient_descent, newton };

struct SimSettings {
  double h = 1.0 / 60.0;
  double tol = -1.0;  // < 0: 1e-6 * k
  int max_iters = 200;
  double stiffness_scale = 1.0;
  InnerSolver solver = InnerSolver::gradient_descent;

  double tolerance(int k) const { return tol > 0.0 ? tol : 1e-6 * k; }
};

/// Everything the simulator and the data-free trainer need to know about a sheet.
struct Scene {
  Polygon domain;
  Material material;
  Eigen::Vector3d gravity = Eigen::Vector3d::Zero();
  std::vector<Point2> pinned;
  CutCurve curve;
  double tip_radius = 0.0;  // <= 0: default 2% of the domain diagonal
  CubatureSet cubature;
  double pin_weight = 1e3;
  SimSettings sim;
  /// Alternative cut geometries the data-free trainer samples from; empty
  /// means train on `curve` only.
  std::vector<CutCurve> training_cuts;

  double effective_tip_radius() const { return tip_radius > 0.0 ? tip_radius : default_tip_radius(domain); }

  InputNormalization normalization() const {
    const auto [lo, hi] = domain.bounds();
    return {lo.x(), hi.x(), lo.y(), hi.y()};
  }
};

}  // namespace windlift
