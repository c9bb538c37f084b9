#pragma once

// Reduced elastodynamics on the learned basis. Each step minimizes
//   1/2 |z - z_pred|^2 + h^2 s V(z),   z_pred = 2 z_j - z_{j-1},
// with V the cubature elastic energy minus gravity and poke work plus a
// quadratic pin penalty.

#include <windlift/elasticity.hpp>
#include <windlift/geometry.hpp>
#include <windlift/lifting.hpp>
#include <windlift/neural.hpp>
#include <windlift/parallel.hpp>
#include <windlift/scene.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace windlift {

struct ReducedState {
  Eigen::VectorXd z;
  Eigen::VectorXd z_prev;
  double h = 1.0 / 60.0;
  double alpha = 0.0;
};

struct PokeForce {
  Point2 location = Point2::Zero();
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  double radius = 0.1;
};

struct StepReport {
  ReducedState state;
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::string failure;  // empty on success

  bool ok() const { return failure.empty(); }
};

/// Basis data at the scene's sample points for the current cut.
struct BasisCache {
  BasisSamples cubature;
  Eigen::MatrixXd pinned_values;   // 3P x k
  Eigen::MatrixXd pin_gram;        // B_pin^T B_pin
  Eigen::VectorXd gravity_force;   // sum_p w rho Phi_p^T g
};

/// Smoothstep bump weights of a poke over the cubature points, summing to one.
inline std::vector<double> poke_weights(std::span<const Point2> points, const PokeForce& poke) {
  if (!(poke.radius > 0.0)) throw std::invalid_argument("poke radius must be positive");
  std::vector<double> w(points.size(), 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double d = (points[p] - poke.location).norm();
    w[p] = smoothstep(1.0 - d / poke.radius);
    total += w[p];
  }
  if (total > 0.0) {
    for (double& v : w) v /= total;
  }
  return w;
}

class ReducedSimulator {
 public:
  ReducedSimulator(std::shared_ptr<const NeuralBasis> basis, Scene scene)
      : basis_(std::move(basis)), scene_(std::move(scene)), field_(scene_.curve, scene_.effective_tip_radius()) {
    if (!basis_) throw std::invalid_argument("simulator needs a basis");
    scene_.material.validate();
    if (scene_.cubature.points.empty()) throw std::invalid_argument("scene has no cubature points");
    rebuild();
  }

  const Scene& scene() const { return scene_; }
  const NeuralBasis& basis() const { return *basis_; }
  const BasisCache& cache() const { return cache_; }
  const WindingField& field() const { return field_; }
  int k() const { return basis_->k(); }

  ReducedState rest_state() const {
    return {Eigen::VectorXd::Zero(k()), Eigen::VectorXd::Zero(k()), scene_.sim.h, scene_.curve.alpha()};
  }

  /// Replace the cut geometry (and its alpha). Reduced coordinates carry over.
  void set_cut(const CutCurve& curve) {
    scene_.curve = curve;
    field_ = WindingField(scene_.curve, scene_.effective_tip_radius());
    rebuild();
  }

  void set_alpha(double alpha) { set_cut(scene_.curve.with_alpha(alpha)); }

  /// Generalized gravity plus poke forces.
  Eigen::VectorXd external_force(std::span<const PokeForce> pokes) const {
    Eigen::VectorXd f = cache_.gravity_force;
    const auto& pts = scene_.cubature.points;
    for (const PokeForce& poke : pokes) {
      const std::vector<double> w = poke_weights(pts, poke);
      for (std::size_t p = 0; p < pts.size(); ++p) {
        if (w[p] == 0.0) continue;
        f.noalias() += w[p] * cache_.cubature.values.middleRows(3 * static_cast<Eigen::Index>(p), 3).transpose() * poke.force;
      }
    }
    return f;
  }

  /// Potential V(z): elastic energy - external work + pin penalty.
  double potential(const Eigen::VectorXd& z, const Eigen::VectorXd& external, Eigen::VectorXd* gradient = nullptr) const {
    const Eigen::VectorXd fvec = cache_.cubature.jacobians * z;
    const auto n = static_cast<Eigen::Index>(scene_.cubature.points.size());
    const auto& w = scene_.cubature.weights;
    double energy = 0.0;
    Eigen::VectorXd stress;
    if (gradient) stress.resize(6 * n);
    for (Eigen::Index p = 0; p < n; ++p) {
      DeformationGradient f = rest_embedding();
      f += Eigen::Map<const DeformationGradient>(fvec.data() + 6 * p);
      const double wp = w[static_cast<std::size_t>(p)];
      energy += wp * stvk_energy_density(f, scene_.material);
      if (gradient) {
        Eigen::Map<DeformationGradient>(stress.data() + 6 * p) = wp * stvk_energy_gradient_F(f, scene_.material);
      }
    }
    const Eigen::VectorXd pin_z = cache_.pin_gram * z;
    const double v = energy - external.dot(z) + scene_.pin_weight * z.dot(pin_z);
    if (gradient) {
      *gradient = cache_.cubature.jacobians.transpose() * stress - external + 2.0 * scene_.pin_weight * pin_z;
    }
    return v;
  }

  double objective(const ReducedState& state, const Eigen::VectorXd& z, const Eigen::VectorXd& external,
                   Eigen::VectorXd* gradient = nullptr) const {
    const Eigen::VectorXd pred = 2.0 * state.z - state.z_prev;
    const double c = state.h * state.h * scene_.sim.stiffness_scale;
    Eigen::VectorXd gv;
    const double v = potential(z, external, gradient ? &gv : nullptr);
    if (gradient) *gradient = (z - pred) + c * gv;
    return 0.5 * (z - pred).squaredNorm() + c * v;
  }

  StepReport step(const ReducedState& state, std::span<const PokeForce> pokes = {}) const {
    if (state.z.size() != k() || state.z_prev.size() != k()) throw std::invalid_argument("state size does not match basis");
    if (state.alpha != scene_.curve.alpha()) {
      throw std::logic_error("state alpha does not match the cached cut; call set_alpha first");
    }
    if (!(state.h > 0.0)) throw std::invalid_argument("time step must be positive");
    const Eigen::VectorXd ext = external_force(pokes);
    StepReport report = scene_.sim.solver == InnerSolver::newton ? solve_newton(state, ext) : solve_gd(state, ext);
    if (!report.ok()) report.state = state;
    return report;
  }

  /// Displacement u(x) = sum_i z_i phi_i(x) at arbitrary points.
  std::vector<Eigen::Vector3d> displacements(const ReducedState& state, std::span<const Point2> points) const {
    const BasisSamples s = evaluate_basis(*basis_, points, field_, false);
    const Eigen::VectorXd u = s.values * state.z;
    std::vector<Eigen::Vector3d> out(points.size());
    for (std::size_t p = 0; p < points.size(); ++p) out[p] = u.segment<3>(3 * static_cast<Eigen::Index>(p));
    return out;
  }

  /// Deformed positions (x, y, 0) + u(x).
  std::vector<Eigen::Vector3d> world_positions(const ReducedState& state, std::span<const Point2> points) const {
    std::vector<Eigen::Vector3d> out = displacements(state, points);
    for (std::size_t p = 0; p < points.size(); ++p) out[p] += Eigen::Vector3d(points[p].x(), points[p].y(), 0.0);
    return out;
  }

  /// Deformed cubature points from the cache (no network evaluation).
  std::vector<Eigen::Vector3d> cubature_positions(const ReducedState& state, std::size_t stride = 1) const {
    const Eigen::VectorXd u = cache_.cubature.values * state.z;
    std::vector<Eigen::Vector3d> out;
    const auto& pts = scene_.cubature.points;
    for (std::size_t p = 0; p < pts.size(); p += std::max<std::size_t>(1, stride)) {
      out.push_back(Eigen::Vector3d(pts[p].x(), pts[p].y(), 0.0) + u.segment<3>(3 * static_cast<Eigen::Index>(p)));
    }
    return out;
  }

 private:
  void rebuild() {
    const auto& pts = scene_.cubature.points;
    const int kk = k();
    const std::size_t n = pts.size();
    cache_.cubature.values.resize(3 * static_cast<Eigen::Index>(n), kk);
    cache_.cubature.jacobians.resize(6 * static_cast<Eigen::Index>(n), kk);
    parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
      const BasisSamples part =
          evaluate_basis(*basis_, std::span<const Point2>(pts).subspan(begin, end - begin), field_, true);
      const auto b = static_cast<Eigen::Index>(begin);
      const auto len = static_cast<Eigen::Index>(end - begin);
      cache_.cubature.values.middleRows(3 * b, 3 * len) = part.values;
      cache_.cubature.jacobians.middleRows(6 * b, 6 * len) = part.jacobians;
    });
    if (scene_.pinned.empty()) {
      cache_.pinned_values = Eigen::MatrixXd::Zero(0, kk);
    } else {
      cache_.pinned_values = evaluate_basis(*basis_, scene_.pinned, field_, false).values;
    }
    cache_.pin_gram = cache_.pinned_values.transpose() * cache_.pinned_values;
    Eigen::VectorXd load(3 * static_cast<Eigen::Index>(n));
    for (std::size_t p = 0; p < n; ++p) {
      load.segment<3>(3 * static_cast<Eigen::Index>(p)) =
          scene_.cubature.weights[p] * scene_.material.density * scene_.gravity;
    }
    cache_.gravity_force = cache_.cubature.values.transpose() * load;
  }

  StepReport finish(const ReducedState& state, const Eigen::VectorXd& z, int iters, double gnorm, double obj,
                    bool converged) const {
    StepReport r;
    r.state = {z, state.z, state.h, state.alpha};
    r.iterations = iters;
    r.gradient_norm = gnorm;
    r.objective = obj;
    r.converged = converged;
    return r;
  }

  static StepReport failed(const std::string& why) {
    StepReport r;
    r.failure = why;
    return r;
  }

  // Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
  StepReport solve_gd(const ReducedState& state, const Eigen::VectorXd& ext) const {
    const double tol = scene_.sim.tolerance(k());
    Eigen::VectorXd z = 2.0 * state.z - state.z_prev;
    Eigen::VectorXd g;
    double f = objective(state, z, ext, &g);
    if (!std::isfinite(f) || !g.allFinite()) return failed("non-finite objective at the predicted state");
    double trial = 1.0;
    int it = 0;
    for (; it < scene_.sim.max_iters; ++it) {
      const double gn2 = g.squaredNorm();
      if (std::sqrt(gn2) < tol) return finish(state, z, it, std::sqrt(gn2), f, true);
      double t = trial;
      Eigen::VectorXd z_new, g_new;
      double f_new = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        z_new = z - t * g;
        f_new = objective(state, z_new, ext, &g_new);
        if (std::isfinite(f_new) && f_new <= f - 1e-4 * t * gn2) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        if (!std::isfinite(f_new)) return failed("non-finite objective during line search");
        break;  // stalled at round-off
      }
      const Eigen::VectorXd s = z_new - z;
      const Eigen::VectorXd y = g_new - g;
      const double sy = s.dot(y);
      trial = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 2.0 * t;
      z = std::move(z_new);
      g = std::move(g_new);
      f = f_new;
    }
    const double gn = g.norm();
    return finish(state, z, it, gn, f, gn < tol);
  }

  // Newton steps on a central-difference Hessian of the analytic gradient.
  StepReport solve_newton(const ReducedState& state, const Eigen::VectorXd& ext) const {
    const double tol = scene_.sim.tolerance(k());
    Eigen::VectorXd z = 2.0 * state.z - state.z_prev;
    Eigen::VectorXd g;
    double f = objective(state, z, ext, &g);
    if (!std::isfinite(f) || !g.allFinite()) return failed("non-finite objective at the predicted state");
    int it = 0;
    for (; it < scene_.sim.max_iters; ++it) {
      if (g.norm() < tol) return finish(state, z, it, g.norm(), f, true);
      const int kk = k();
      Eigen::MatrixXd hess(kk, kk);
      const double eps = 1e-6 * std::max(1.0, z.norm());
      for (int i = 0; i < kk; ++i) {
        Eigen::VectorXd gp, gm;
        Eigen::VectorXd zp = z, zm = z;
        zp[i] += eps;
        zm[i] -= eps;
        objective(state, zp, ext, &gp);
        objective(state, zm, ext, &gm);
        hess.col(i) = (gp - gm) / (2.0 * eps);
      }
      hess = 0.5 * (hess + hess.transpose()).eval();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      Eigen::VectorXd dir = -g;
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Eigen::VectorXd nd = ldlt.solve(-g);
        if (nd.allFinite() && nd.dot(g) < 0.0) dir = nd;
      }
      double t = 1.0;
      Eigen::VectorXd z_new, g_new;
      double f_new = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        z_new = z + t * dir;
        f_new = objective(state, z_new, ext, &g_new);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * g.dot(dir)) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        if (!std::isfinite(f_new)) return failed("non-finite objective during line search");
        break;
      }
      z = std::move(z_new);
      g = std::move(g_new);
      f = f_new;
    }
    return finish(state, z, it, g.norm(), f, g.norm() < tol);
  }

  std::shared_ptr<const NeuralBasis> basis_;
  Scene scene_;
  WindingField field_;
  BasisCache cache_;
};

}  // namespace windlift
