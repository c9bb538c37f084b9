#include <windlift/elasticity.hpp>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace windlift;

namespace {

DeformationGradient random_F(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  DeformationGradient f = rest_embedding();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) f(i, j) += u(rng);
  return f;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST(DeformationGradient, RestAndLinearity) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  std::vector<DeformationGradient> j(2, DeformationGradient::Constant(0.3));
  EXPECT_EQ(deformation_gradient(j, zero), rest_embedding());
  std::vector<DeformationGradient> one{DeformationGradient::Random()};
  Eigen::VectorXd c(1);
  c << 1.7;
  EXPECT_TRUE(deformation_gradient(one, c).isApprox(rest_embedding() + 1.7 * one[0], 1e-15));
  EXPECT_THROW(deformation_gradient(one, zero), std::invalid_argument);
}

TEST(StVK, RestStateHasZeroEnergyAndStress) {
  const Material m{2.0, 3.0, 1.0, 0.5};
  EXPECT_EQ(stvk_energy_density(rest_embedding(), m), 0.0);
  EXPECT_TRUE(stvk_energy_gradient_F(rest_embedding(), m).isZero(0.0));
}

TEST(StVK, UniformStretchHandValue) {
  const Material m{1.0, 1.0, 1.0, 1.0};
  EXPECT_NEAR(stvk_energy_density(1.1 * rest_embedding(), m), 0.0441, 1e-14);
}

TEST(StVK, InPlaneRotationIsFree) {
  const Material m{1.0, 1.0, 1.0, 1.0};
  for (double th : {0.3, 1.2, -2.5}) {
    DeformationGradient f;
    f << std::cos(th), -std::sin(th), std::sin(th), std::cos(th), 0, 0;
    EXPECT_NEAR(stvk_energy_density(f, m), 0.0, 1e-15);
  }
}

TEST(StVK, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Material m{1.3, 0.7, 1.0, 0.2};
  for (int trial = 0; trial < 100; ++trial) {
    const DeformationGradient f = random_F(rng);
    const DeformationGradient p = stvk_energy_gradient_F(f, m);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        DeformationGradient fp = f, fm = f;
        fp(i, j) += h;
        fm(i, j) -= h;
        const double fd = (stvk_energy_density(fp, m) - stvk_energy_density(fm, m)) / (2 * h);
        EXPECT_NEAR(p(i, j), fd, 1e-6 * std::max(std::abs(fd), 1e-2));
      }
    }
  }
}

TEST(StVK, GradientIsLinearInModuli) {
  std::mt19937_64 rng(2);
  const Material m{1.0, 0.5, 1.0, 1.0};
  const Material m3{3.0, 1.5, 1.0, 1.0};
  const DeformationGradient f = random_F(rng);
  EXPECT_TRUE(stvk_energy_gradient_F(f, m3).isApprox(3.0 * stvk_energy_gradient_F(f, m), 1e-14));
}

TEST(StVK, NonNegativeAndFrameIndifferent) {
  std::mt19937_64 rng(3);
  const Material m{1.0, 1.0, 1.0, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    const DeformationGradient f = random_F(rng);
    const Eigen::Matrix3d r = random_rotation(rng);
    EXPECT_GE(stvk_energy_density(f, m), 0.0);
    EXPECT_NEAR(stvk_energy_density(r * f, m), stvk_energy_density(f, m), 1e-10);
    // Rigid motions of the embedding are free.
    EXPECT_NEAR(stvk_energy_density(r * rest_embedding(), m), 0.0, 1e-12);
  }
}

TEST(Material, Validation) {
  EXPECT_NO_THROW((Material{1, 0, 1, 1}.validate()));
  EXPECT_THROW((Material{0, 1, 1, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((Material{1, -1, 1, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((Material{1, 1, 0, 1}.validate()), std::invalid_argument);
}
