#pragma once

// Membrane kinematics and the St. Venant-Kirchhoff energy density of a thin
// sheet whose rest configuration is the plane z = 0.

#include <Eigen/Core>

#include <span>
#include <stdexcept>

namespace windlift {

struct Material {
  double mu = 1.0;
  double lambda = 1.0;
  double density = 1.0;    // mass per area
  double thickness = 1.0;

  void validate() const {
    if (!(mu > 0.0) || !(lambda >= 0.0) || !(density > 0.0) || !(thickness > 0.0)) {
      throw std::invalid_argument("material requires mu > 0, lambda >= 0, density > 0, thickness > 0");
    }
  }
};

using DeformationGradient = Eigen::Matrix<double, 3, 2>;

/// Rest tangent plane: columns (1,0,0) and (0,1,0).
inline DeformationGradient rest_embedding() {
  DeformationGradient f = DeformationGradient::Zero();
  f(0, 0) = 1.0;
  f(1, 1) = 1.0;
  return f;
}

/// F = I + sum_i z_i dphi_i/dx.
inline DeformationGradient deformation_gradient(std::span<const DeformationGradient> basis_jacobian,
                                                const Eigen::VectorXd& z) {
  if (static_cast<Eigen::Index>(basis_jacobian.size()) != z.size()) {
    throw std::invalid_argument("basis Jacobian and reduced coordinates disagree in size");
  }
  DeformationGradient f = rest_embedding();
  for (std::size_t i = 0; i < basis_jacobian.size(); ++i) f += z[static_cast<Eigen::Index>(i)] * basis_jacobian[i];
  return f;
}

inline Eigen::Matrix2d green_strain(const DeformationGradient& f) {
  return 0.5 * (f.transpose() * f - Eigen::Matrix2d::Identity());
}

inline double stvk_energy_density(const DeformationGradient& f, const Material& m) {
  const Eigen::Matrix2d e = green_strain(f);
  const double tr = e.trace();
  return m.thickness * (m.mu * e.squaredNorm() + 0.5 * m.lambda * tr * tr);
}

/// First Piola-Kirchhoff stress dPsi/dF = t F (2 mu E + lambda tr(E) I).
inline DeformationGradient stvk_energy_gradient_F(const DeformationGradient& f, const Material& m) {
  const Eigen::Matrix2d e = green_strain(f);
  const Eigen::Matrix2d s = 2.0 * m.mu * e + m.lambda * e.trace() * Eigen::Matrix2d::Identity();
  return m.thickness * f * s;
}

}  // namespace windlift
