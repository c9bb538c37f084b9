#include <windlift/simulation.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

using namespace windlift;

namespace {

Scene make_scene(std::size_t n = 300) {
  Scene s;
  s.domain = Polygon::rectangle({0, 0}, {1, 1});
  s.material = {1000.0, 500.0, 1.0, 0.1};
  s.curve = CutCurve({{{0.5, -0.05}, {0.5, 0.6}}}, 1.0);
  for (int i = 0; i < 6; ++i) s.pinned.push_back({(i + 0.5) / 6, 0.98});
  s.cubature = sample_cubature(s.domain, n, 1);
  s.pin_weight = 1e3;
  return s;
}

std::shared_ptr<const NeuralBasis> make_basis(int k = 4, std::uint64_t seed = 2) {
  NetworkConfig c;
  c.hidden = {16, 16};
  c.k = k;
  c.normalization = {0, 1, 0, 1};
  return std::make_shared<const NeuralBasis>(NeuralBasis::initialized(c, seed, 0.3));
}

Eigen::VectorXd random_vec(std::mt19937_64& rng, int k, double s) {
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v[i] = s * standard_normal(rng);
  return v;
}

}  // namespace

TEST(Simulator, ObjectiveGradientMatchesFiniteDifferences) {
  Scene s = make_scene();
  s.gravity = {0, 0, -9.8};
  const ReducedSimulator sim(make_basis(), s);
  std::mt19937_64 rng(3);
  const std::vector<PokeForce> pokes{{{0.7, 0.5}, {0, 0, 3}, 0.2}};
  const Eigen::VectorXd ext = sim.external_force(pokes);
  for (int trial = 0; trial < 10; ++trial) {
    ReducedState st = sim.rest_state();
    st.z = random_vec(rng, sim.k(), 0.5);
    st.z_prev = random_vec(rng, sim.k(), 0.5);
    const Eigen::VectorXd z = random_vec(rng, sim.k(), 0.5);
    Eigen::VectorXd g;
    sim.objective(st, z, ext, &g);
    const double h = 1e-6;
    for (int i = 0; i < sim.k(); ++i) {
      Eigen::VectorXd zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (sim.objective(st, zp, ext) - sim.objective(st, zm, ext)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-6 * std::max(std::abs(fd), 1.0));
    }
  }
}

TEST(Simulator, RestIsStationaryWithoutLoads) {
  const ReducedSimulator sim(make_basis(), make_scene());
  const StepReport r = sim.step(sim.rest_state());
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.state.z.isZero(0.0));
}

TEST(Simulator, WorldPositionsAreRestPlusLinearDisplacement) {
  const ReducedSimulator sim(make_basis(), make_scene());
  const std::vector<Point2> pts{{0.1, 0.1}, {0.3, 0.55}, {0.8, 0.2}, {0.6, 0.9}};
  ReducedState st = sim.rest_state();
  const auto rest = sim.world_positions(st, pts);
  for (std::size_t p = 0; p < pts.size(); ++p) EXPECT_EQ(rest[p], Eigen::Vector3d(pts[p].x(), pts[p].y(), 0.0));

  std::mt19937_64 rng(4);
  const Eigen::VectorXd a = random_vec(rng, sim.k(), 1.0), b = random_vec(rng, sim.k(), 1.0);
  st.z = a;
  const auto ua = sim.displacements(st, pts);
  st.z = b;
  const auto ub = sim.displacements(st, pts);
  st.z = 2.0 * a - 3.0 * b;
  const auto uc = sim.displacements(st, pts);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    EXPECT_LT((uc[p] - (2.0 * ua[p] - 3.0 * ub[p])).norm(), 1e-12);
    // Explicit contraction with the restricted basis.
    const BasisValue phi = restrict_evaluate(sim.basis(), pts[p], sim.field());
    EXPECT_LT((uc[p] - phi.transpose() * st.z).norm(), 1e-12);
  }
}

TEST(Simulator, CachedPositionsMatchDirectEvaluation) {
  const Scene s = make_scene(50);
  const ReducedSimulator sim(make_basis(), s);
  ReducedState st = sim.rest_state();
  st.z = Eigen::VectorXd::LinSpaced(sim.k(), -1, 1);
  const auto cached = sim.cubature_positions(st);
  const auto direct = sim.world_positions(st, s.cubature.points);
  ASSERT_EQ(cached.size(), direct.size());
  for (std::size_t p = 0; p < cached.size(); ++p) EXPECT_LT((cached[p] - direct[p]).norm(), 1e-12);
  EXPECT_EQ(sim.cubature_positions(st, 7).size(), 8u);
}

TEST(Simulator, SetCutIsIdempotentAndLeavesWeightsAlone) {
  ReducedSimulator sim(make_basis(), make_scene());
  const auto checksum = sim.basis().checksum();
  const CutCurve other({{{0.2, 0.3}, {0.6, 0.7}, {0.9, 0.4}}}, 0.8);
  sim.set_cut(other);
  const BasisCache once = sim.cache();
  sim.set_cut(other);
  EXPECT_EQ(once.cubature.values, sim.cache().cubature.values);
  EXPECT_EQ(once.cubature.jacobians, sim.cache().cubature.jacobians);
  EXPECT_EQ(once.gravity_force, sim.cache().gravity_force);
  EXPECT_EQ(sim.basis().checksum(), checksum);
  EXPECT_EQ(sim.scene().curve, other);
}

TEST(Simulator, CacheDoesNotDependOnThreadCount) {
  const Scene s = make_scene(3000);
  setenv("WINDLIFT_THREADS", "1", 1);
  const ReducedSimulator one(make_basis(), s);
  setenv("WINDLIFT_THREADS", "3", 1);
  const ReducedSimulator three(make_basis(), s);
  unsetenv("WINDLIFT_THREADS");
  EXPECT_EQ(one.cache().cubature.jacobians, three.cache().cubature.jacobians);
}

TEST(Simulator, AlphaMismatchIsRejected) {
  ReducedSimulator sim(make_basis(), make_scene());
  ReducedState st = sim.rest_state();
  st.alpha = 0.5;
  EXPECT_THROW(sim.step(st), std::logic_error);
  sim.set_alpha(0.5);
  EXPECT_NO_THROW(sim.step(st));
}

namespace {

// Static equilibrium grad V(z) = 0 by damped Newton on a finite-difference
// Hessian of the potential gradient.
Eigen::VectorXd static_equilibrium(const ReducedSimulator& sim) {
  const Eigen::VectorXd ext = sim.external_force({});
  Eigen::VectorXd z = Eigen::VectorXd::Zero(sim.k());
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd g;
    sim.potential(z, ext, &g);
    if (g.norm() < 1e-12) break;
    Eigen::MatrixXd hess(sim.k(), sim.k());
    for (int i = 0; i < sim.k(); ++i) {
      Eigen::VectorXd zp = z, zm = z, gp, gm;
      zp[i] += 1e-7;
      zm[i] -= 1e-7;
      sim.potential(zp, ext, &gp);
      sim.potential(zm, ext, &gm);
      hess.col(i) = (gp - gm) / 2e-7;
    }
    z -= hess.ldlt().solve(g);
  }
  return z;
}

}  // namespace

TEST(Simulator, GravitySagSettlesAtDefaultTolerance) {
  Scene s = make_scene();
  s.gravity = {0, 0, -9.8};
  const ReducedSimulator sim(make_basis(), s);
  const Eigen::VectorXd target = static_equilibrium(sim);
  ReducedState st = sim.rest_state();
  double early = 0.0, worst_late = 0.0;
  for (int j = 0; j < 1200; ++j) {
    const StepReport r = sim.step(st);
    ASSERT_TRUE(r.ok()) << r.failure;
    ASSERT_TRUE(r.converged) << "step " << j;
    EXPECT_LT(r.gradient_norm, s.sim.tolerance(sim.k()));
    st = r.state;
    if (j == 5) early = st.z.norm();
    if (j >= 1000) worst_late = std::max(worst_late, (st.z - target).norm());
  }
  EXPECT_GT(st.z.norm(), early);
  EXPECT_LT(worst_late, 0.1 * target.norm());
}

TEST(Simulator, GravitySagConvergesToStaticEquilibrium) {
  Scene s = make_scene();
  s.gravity = {0, 0, -9.8};
  s.sim.tol = 1e-9;
  const ReducedSimulator sim(make_basis(), s);
  const Eigen::VectorXd target = static_equilibrium(sim);
  ReducedState st = sim.rest_state();
  for (int j = 0; j < 1500; ++j) {
    const StepReport r = sim.step(st);
    ASSERT_TRUE(r.converged) << "step " << j;
    st = r.state;
  }
  EXPECT_LT((st.z - target).norm(), 1e-3 * target.norm());
  EXPECT_LT((st.z - st.z_prev).norm(), 1e-5 * target.norm());
}

TEST(Simulator, NewtonAgreesWithGradientDescent) {
  Scene s = make_scene();
  s.gravity = {0, 0, -2.0};
  s.sim.tol = 1e-9;
  const ReducedSimulator gd(make_basis(), s);
  s.sim.solver = InnerSolver::newton;
  const ReducedSimulator nt(make_basis(), s);
  ReducedState a = gd.rest_state(), b = nt.rest_state();
  for (int j = 0; j < 20; ++j) {
    a = gd.step(a).state;
    const StepReport r = nt.step(b);
    ASSERT_TRUE(r.converged);
    b = r.state;
  }
  EXPECT_LT((a.z - b.z).norm(), 1e-6 * std::max(1.0, a.z.norm()));
}

TEST(Simulator, PokeOscillationDecays) {
  const Scene s = make_scene();
  const ReducedSimulator sim(make_basis(), s);
  const std::vector<PokeForce> poke{{{0.8, 0.3}, {0, 0, 200.0}, 0.25}};
  const Eigen::VectorXd none = Eigen::VectorXd::Zero(sim.k());
  ReducedState st = sim.rest_state();
  for (int j = 0; j < 3; ++j) st = sim.step(st, poke).state;
  // Discrete mechanical energy of the released sheet; the kinetic proxy
  // |z_j - z_{j-1}| is bounded by sqrt(2 E_j).
  auto energy = [&](const ReducedState& x) {
    const double c = x.h * x.h * s.sim.stiffness_scale;
    return 0.5 * (x.z - x.z_prev).squaredNorm() + c * sim.potential(x.z, none);
  };
  std::vector<double> speed;
  double e = energy(st);
  for (int j = 0; j < 50; ++j) {
    const StepReport r = sim.step(st);
    ASSERT_TRUE(r.ok());
    const double e_next = energy(r.state);
    EXPECT_LE(e_next, e * (1 + 1e-9)) << "step " << j;
    speed.push_back((r.state.z - st.z).norm());
    EXPECT_LE(speed.back(), std::sqrt(2 * e_next) * (1 + 1e-12));
    e = e_next;
    st = r.state;
  }
  const double first = *std::max_element(speed.begin(), speed.begin() + 10);
  const double last = *std::max_element(speed.end() - 10, speed.end());
  EXPECT_LT(last, 0.5 * first);
}

TEST(Simulator, NonFiniteForceKeepsPreviousState) {
  const ReducedSimulator sim(make_basis(), make_scene());
  ReducedState st = sim.rest_state();
  st.z.setConstant(0.01);
  const std::vector<PokeForce> poke{{{0.5, 0.5}, {0, 0, std::numeric_limits<double>::infinity()}, 0.3}};
  const StepReport r = sim.step(st, poke);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.state.z, st.z);
  EXPECT_EQ(r.state.z_prev, st.z_prev);
}

TEST(PokeWeights, NormalizedBump) {
  const std::vector<Point2> pts{{0, 0}, {0.05, 0}, {0.5, 0}, {2, 2}};
  const auto w = poke_weights(pts, {{0, 0}, {}, 0.1});
  EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-15);
  EXPECT_GT(w[0], w[1]);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_EQ(w[3], 0.0);
  EXPECT_THROW(poke_weights(pts, {{0, 0}, {}, 0.0}), std::invalid_argument);
}

TEST(Simulator, CacheRebuildScalesLinearly) {
  const auto basis = make_basis(6);
  auto time_build = [&](std::size_t n) {
    const Scene s = make_scene(n);
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const ReducedSimulator sim(basis, s);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double t1 = time_build(4000);
  const double t4 = time_build(16000);
  EXPECT_GT(t4 / t1, 4.0 / 2.0);
  EXPECT_LT(t4 / t1, 4.0 * 2.0);
}
