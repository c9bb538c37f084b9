#pragma once

// Lifting a planar point onto the winding graph and restricting the
// volumetric field there. A basis function phi_i(x) is the network evaluated
// at (alpha, x, y, H(x)); it inherits the jump of H across the cut.

#include <windlift/geometry.hpp>
#include <windlift/neural.hpp>

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <vector>

namespace windlift {

struct LiftResult {
  LiftedPoint point;
  bool on_curve = false;
};

inline LiftResult lift_flagged(const Point2& x, const WindingField& field) {
  const WindingSample h = field.evaluate(x);
  return {{field.alpha(), x.x(), x.y(), h.value}, h.on_curve};
}

inline LiftedPoint lift(const Point2& x, const WindingField& field) { return lift_flagged(x, field).point; }

/// k x 3 matrix, row i is phi_i(x).
using BasisValue = Eigen::Matrix<double, Eigen::Dynamic, 3>;
/// Spatial Jacobian of one basis function: d phi_i / d(x, y).
using ModeJacobian = Eigen::Matrix<double, 3, 2>;

inline BasisValue restrict_evaluate(const NeuralBasis& net, const Point2& x, const WindingField& field) {
  const Eigen::VectorXd out = forward(net, lift(x, field));
  BasisValue v(net.k(), 3);
  for (int i = 0; i < net.k(); ++i) v.row(i) = out.segment<3>(3 * i).transpose();
  return v;
}

/// Chain rule through the lift: d/dx = df/dx + df/dz * dH/dx.
inline std::vector<ModeJacobian> restrict_jacobian(const NeuralBasis& net, const Point2& x,
                                                   const WindingField& field) {
  const Vector2 dh = winding_gradient(field, x);
  const Eigen::MatrixXd j = input_jacobian(net, lift(x, field));
  std::vector<ModeJacobian> out(net.k());
  for (int i = 0; i < net.k(); ++i) {
    out[i].col(0) = j.block<3, 1>(3 * i, 1) + j.block<3, 1>(3 * i, 3) * dh.x();
    out[i].col(1) = j.block<3, 1>(3 * i, 2) + j.block<3, 1>(3 * i, 3) * dh.y();
  }
  return out;
}

/// Lifted inputs and the world-space tangent seeds d/dx, d/dy for a point set.
struct LiftedBatch {
  Eigen::Matrix4Xd inputs;
  std::vector<Eigen::Matrix4Xd> tangents;  // empty, or {d/dx, d/dy}
};

inline LiftedBatch lift_batch(std::span<const Point2> points, const WindingField& field, bool with_tangents) {
  LiftedBatch b;
  const auto n = static_cast<Eigen::Index>(points.size());
  b.inputs.resize(4, n);
  if (with_tangents) b.tangents.assign(2, Eigen::Matrix4Xd::Zero(4, n));
  for (Eigen::Index p = 0; p < n; ++p) {
    const Point2& x = points[p];
    b.inputs.col(p) = lift(x, field).vector();
    if (with_tangents) {
      const Vector2 dh = field.distance_to_curve(x) > kOnCurveTolerance ? winding_gradient(field, x) : Vector2::Zero();
      b.tangents[0](1, p) = 1.0;
      b.tangents[0](3, p) = dh.x();
      b.tangents[1](2, p) = 1.0;
      b.tangents[1](3, p) = dh.y();
    }
  }
  return b;
}

/// Basis values and spatial Jacobians at a point set, in the layout the
/// reduced solver consumes:
///   values(3p + c, i)         = phi_i(x_p)_c
///   jacobians(6p + c + 3d, i) = d phi_i(x_p)_c / d x_d   (column-major vec of a 3x2 block)
struct BasisSamples {
  Eigen::MatrixXd values;
  Eigen::MatrixXd jacobians;

  Eigen::Index num_points() const { return values.rows() / 3; }
};

namespace detail {

// Network output (3k x N) -> stacked per-point rows (3N x k).
inline Eigen::MatrixXd outputs_to_rows(const Eigen::MatrixXd& out, int k) {
  const Eigen::Index n = out.cols();
  Eigen::MatrixXd rows(3 * n, k);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (int i = 0; i < k; ++i) rows.block<3, 1>(3 * p, i) = out.block<3, 1>(3 * i, p);
  }
  return rows;
}

}  // namespace detail

inline BasisSamples evaluate_basis(const NeuralBasis& net, std::span<const Point2> points, const WindingField& field,
                                   bool with_jacobians) {
  const LiftedBatch batch = lift_batch(points, field, with_jacobians);
  const ForwardPass fp = forward_batch(net, batch.inputs, batch.tangents);
  BasisSamples s;
  const int k = net.k();
  s.values = detail::outputs_to_rows(fp.output(), k);
  if (with_jacobians) {
    const Eigen::Index n = static_cast<Eigen::Index>(points.size());
    s.jacobians.resize(6 * n, k);
    const Eigen::MatrixXd& tx = fp.tangent_output(0);
    const Eigen::MatrixXd& ty = fp.tangent_output(1);
    for (Eigen::Index p = 0; p < n; ++p) {
      for (int i = 0; i < k; ++i) {
        s.jacobians.block<3, 1>(6 * p, i) = tx.block<3, 1>(3 * i, p);
        s.jacobians.block<3, 1>(6 * p + 3, i) = ty.block<3, 1>(3 * i, p);
      }
    }
  }
  return s;
}

}  // namespace windlift
