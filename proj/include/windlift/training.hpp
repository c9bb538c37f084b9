#pragma once

// Learning the volumetric field: data-free (elastic energy over sampled
// reduced coordinates) and data-driven (snapshot reconstruction).

#include <windlift/cubature.hpp>
#include <windlift/elasticity.hpp>
#include <windlift/geometry.hpp>
#include <windlift/lifting.hpp>
#include <windlift/neural.hpp>
#include <windlift/scene.hpp>

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace windlift {

enum class TrainMode { data_free, data_driven };

/// Exponential decay from `initial` to `final` over the run.
struct LrSchedule {
  double initial = 1e-3;
  double final = 1e-4;

  double at(int step, int steps) const {
    if (steps <= 1 || final <= 0.0) return initial;
    return initial * std::pow(final / initial, static_cast<double>(step) / (steps - 1));
  }
};

inline std::vector<double> default_alpha_samples() {
  std::vector<double> a;
  for (int i = 0; i <= 10; ++i) a.push_back(i / 10.0);
  return a;
}

struct TrainConfig {
  TrainMode mode = TrainMode::data_free;
  int steps = 2000;
  int batch_points = 512;
  int batch_z = 8;
  double z_radius = 1.0;
  double ortho_weight = 1.0;
  double pin_weight = 1e3;
  std::vector<double> alpha_samples = default_alpha_samples();
  LrSchedule lr;
  std::uint64_t seed = 0;
  NetworkConfig network;
  /// Output-layer init scale. Zero makes the untrained basis vanish, which is
  /// a stationary point of the data-free objective.
  double output_init_scale = 0.1;
  /// Snapshots per data-driven step; <= 0 uses all of them.
  int batch_snapshots = 0;
  /// Std. dev. of the initial per-snapshot reduced coordinates.
  double z_init_scale = 0.1;

  void validate() const {
    if (steps < 0 || batch_points <= 0 || batch_z <= 0) throw std::invalid_argument("training counts must be positive");
    if (!(z_radius > 0.0)) throw std::invalid_argument("z_radius must be positive");
    if (alpha_samples.empty()) throw std::invalid_argument("alpha_samples must not be empty");
    for (double a : alpha_samples) {
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha_samples must lie in [0, 1]");
    }
  }
};

struct TrainingResult {
  NeuralBasis basis;
  std::vector<double> losses;
};

using TrainCallback = std::function<void(int step, double loss)>;

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int step, double alpha, double z_norm)
      : std::runtime_error(describe(step, alpha, z_norm)), step_(step), alpha_(alpha), z_norm_(z_norm) {}

  int step() const { return step_; }
  double alpha() const { return alpha_; }
  double z_norm() const { return z_norm_; }

 private:
  static std::string describe(int step, double alpha, double z_norm) {
    std::ostringstream os;
    os << "non-finite training loss at step " << step << " (alpha = " << alpha << ", max |z| = " << z_norm << ")";
    return os.str();
  }
  int step_;
  double alpha_;
  double z_norm_;
};

/// Uniform sample from the ball of the given radius in R^k.
inline Eigen::VectorXd sample_ball(std::mt19937_64& rng, int k, double radius) {
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v[i] = standard_normal(rng);
  const double n = v.norm();
  if (n == 0.0) return Eigen::VectorXd::Zero(k);
  return v / n * radius * std::pow(uniform01(rng), 1.0 / k);
}

// ---------------------------------------------------------------------------
// Data-free objective

struct DataFreeBatch {
  LiftedBatch cubature;       // with world-space tangents
  double point_weight = 0.0;  // |domain| / N
  Eigen::Matrix4Xd pinned;    // lifted pinned samples
  std::vector<Eigen::VectorXd> zs;
};

struct DataFreeTerms {
  Material material;
  double ortho_weight = 1.0;
  double pin_weight = 1e3;
};

struct DataFreeLoss {
  double total = 0.0;
  double energy = 0.0;
  double pin = 0.0;
  double ortho = 0.0;
  Eigen::VectorXd gradient;
};

namespace detail {

using StridedMap = Eigen::Map<Eigen::MatrixXd, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using ConstStridedMap = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// k x N view of component c of every mode in a (3k x N) network output.
inline ConstStridedMap component_view(const Eigen::MatrixXd& out, int k, int c) {
  return {out.data() + c, k, out.cols(), Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(out.rows(), 3)};
}
inline StridedMap component_view(Eigen::MatrixXd& out, int k, int c) {
  return {out.data() + c, k, out.cols(), Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(out.rows(), 3)};
}

}  // namespace detail

/// Sample Gram matrix G_ab = (1/N) sum_p phi_a(x_p) . phi_b(x_p).
inline Eigen::MatrixXd sample_gram(const Eigen::MatrixXd& outputs, int k) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k, k);
  for (int c = 0; c < 3; ++c) {
    const auto m = detail::component_view(outputs, k, c);
    g.noalias() += m * m.transpose();
  }
  return g / static_cast<double>(outputs.cols());
}

/// Mean over z of the cubature energy, plus pinning and orthonormality
/// penalties, with the exact parameter gradient.
inline DataFreeLoss data_free_objective(const NeuralBasis& net, const DataFreeBatch& batch, const DataFreeTerms& terms) {
  const int k = net.k();
  const ForwardPass fp = forward_batch(net, batch.cubature.inputs, batch.cubature.tangents);
  const Eigen::Index n = batch.cubature.inputs.cols();
  const auto bz = static_cast<double>(batch.zs.size());
  const Eigen::MatrixXd& tx = fp.tangent_output(0);
  const Eigen::MatrixXd& ty = fp.tangent_output(1);

  DataFreeLoss loss;
  Eigen::MatrixXd g_out = Eigen::MatrixXd::Zero(3 * k, n);
  std::vector<Eigen::MatrixXd> g_tan(2, Eigen::MatrixXd::Zero(3 * k, n));

  Eigen::Matrix3Xd fx(3, n), fy(3, n), px(3, n), py(3, n);
  for (const Eigen::VectorXd& z : batch.zs) {
    fx.setZero();
    fy.setZero();
    fx.row(0).setOnes();
    fy.row(1).setOnes();
    for (int i = 0; i < k; ++i) {
      fx += z[i] * tx.middleRows(3 * i, 3);
      fy += z[i] * ty.middleRows(3 * i, 3);
    }
    const double scale = batch.point_weight / bz;
    for (Eigen::Index p = 0; p < n; ++p) {
      DeformationGradient f;
      f.col(0) = fx.col(p);
      f.col(1) = fy.col(p);
      loss.energy += scale * stvk_energy_density(f, terms.material);
      const DeformationGradient pk = stvk_energy_gradient_F(f, terms.material);
      px.col(p) = scale * pk.col(0);
      py.col(p) = scale * pk.col(1);
    }
    for (int i = 0; i < k; ++i) {
      g_tan[0].middleRows(3 * i, 3) += z[i] * px;
      g_tan[1].middleRows(3 * i, 3) += z[i] * py;
    }
  }

  if (terms.ortho_weight > 0.0) {
    const Eigen::MatrixXd gram = sample_gram(fp.output(), k);
    const Eigen::MatrixXd dev = gram - Eigen::MatrixXd::Identity(k, k);
    loss.ortho = terms.ortho_weight * dev.squaredNorm();
    const Eigen::MatrixXd coef = terms.ortho_weight * 4.0 / static_cast<double>(n) * dev;
    for (int c = 0; c < 3; ++c) {
      detail::component_view(g_out, k, c).noalias() += coef * detail::component_view(fp.output(), k, c);
    }
  }

  Eigen::VectorXd grad = backward_batch(net, fp, g_out, g_tan);

  const Eigen::Index np = batch.pinned.cols();
  if (terms.pin_weight > 0.0 && np > 0 && !batch.zs.empty()) {
    const ForwardPass pp = forward_batch(net, batch.pinned);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
    for (const Eigen::VectorXd& z : batch.zs) s.noalias() += z * z.transpose();
    const double scale = terms.pin_weight / (bz * static_cast<double>(np));
    Eigen::MatrixXd g_pin = Eigen::MatrixXd::Zero(3 * k, np);
    for (int c = 0; c < 3; ++c) {
      const auto m = detail::component_view(pp.output(), k, c);
      const Eigen::MatrixXd sm = s * m;
      loss.pin += scale * m.cwiseProduct(sm).sum();
      detail::component_view(g_pin, k, c) = 2.0 * scale * sm;
    }
    grad += backward_batch(net, pp, g_pin);
  }
  loss.total = loss.energy + loss.pin + loss.ortho;
  loss.gradient = std::move(grad);
  return loss;
}

inline TrainingResult train_data_free(const Scene& scene, const TrainConfig& cfg, const TrainCallback& callback = {}) {
  cfg.validate();
  if (scene.pinned.empty()) throw std::invalid_argument("data-free training needs pinned samples");
  NetworkConfig ncfg = cfg.network;
  ncfg.normalization = scene.normalization();
  TrainingResult result{NeuralBasis::initialized(ncfg, cfg.seed, cfg.output_init_scale), {}};
  NeuralBasis& net = result.basis;

  std::vector<CutCurve> variants = scene.training_cuts;
  if (variants.empty()) variants.push_back(scene.curve);
  const double eps = scene.effective_tip_radius();
  const DataFreeTerms terms{scene.material, cfg.ortho_weight, cfg.pin_weight};

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  AdamState adam(net.num_parameters());
  result.losses.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    const CutCurve& curve = variants[rng() % variants.size()];
    const double alpha = cfg.alpha_samples[rng() % cfg.alpha_samples.size()];
    const WindingField field(curve.with_alpha(alpha), eps);
    const CubatureSet cub = sample_cubature(scene.domain, cfg.batch_points, rng());

    DataFreeBatch batch;
    batch.cubature = lift_batch(cub.points, field, true);
    batch.point_weight = cub.weights.front();
    batch.pinned = lift_batch(scene.pinned, field, false).inputs;
    double z_max = 0.0;
    for (int b = 0; b < cfg.batch_z; ++b) {
      batch.zs.push_back(sample_ball(rng, net.k(), cfg.z_radius));
      z_max = std::max(z_max, batch.zs.back().norm());
    }

    const DataFreeLoss loss = data_free_objective(net, batch, terms);
    if (!std::isfinite(loss.total) || !loss.gradient.allFinite()) throw TrainingError(step, alpha, z_max);
    result.losses.push_back(loss.total);
    if (callback) callback(step, loss.total);
    adam_step(net.parameters(), adam, loss.gradient, {cfg.lr.at(step, cfg.steps)});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Data-driven training

struct Snapshot {
  double alpha = 0.0;
  std::vector<Point2> points;
  std::vector<Eigen::Vector3d> displacements;
};

struct SnapshotDataset {
  std::vector<Snapshot> snapshots;
  CutCurve curve;
  double tip_radius = 0.0;  // <= 0: 2% of the sample bounding-box diagonal

  void validate() const {
    for (std::size_t j = 0; j < snapshots.size(); ++j) {
      const Snapshot& s = snapshots[j];
      if (s.points.size() != s.displacements.size() || s.points.empty()) {
        throw std::invalid_argument("snapshot " + std::to_string(j) + " has mismatched or empty arrays");
      }
      if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw std::invalid_argument("snapshot alpha outside [0, 1]");
    }
  }

  std::pair<Point2, Point2> bounds() const {
    Point2 lo = Point2::Constant(std::numeric_limits<double>::infinity());
    Point2 hi = -lo;
    for (const Snapshot& s : snapshots) {
      for (const Point2& p : s.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
    return {lo, hi};
  }

  double effective_tip_radius() const {
    if (tip_radius > 0.0) return tip_radius;
    const auto [lo, hi] = bounds();
    return 0.02 * (hi - lo).norm();
  }

  InputNormalization normalization() const {
    const auto [lo, hi] = bounds();
    return {lo.x(), hi.x(), lo.y(), hi.y()};
  }

  WindingField field(std::size_t j) const {
    return WindingField(curve.with_alpha(snapshots[j].alpha), effective_tip_radius());
  }
};

/// Joint Adam over the network weights and free per-snapshot coordinates z_j.
inline TrainingResult train_data_driven(const SnapshotDataset& dataset, const TrainConfig& cfg,
                                        const TrainCallback& callback = {}) {
  cfg.validate();
  if (dataset.snapshots.empty()) throw std::invalid_argument("data-driven training needs at least one snapshot");
  dataset.validate();
  NetworkConfig ncfg = cfg.network;
  ncfg.normalization = dataset.normalization();
  TrainingResult result{NeuralBasis::initialized(ncfg, cfg.seed, 0.0), {}};
  NeuralBasis& net = result.basis;
  const int k = net.k();
  const std::size_t count = dataset.snapshots.size();

  std::vector<Eigen::Matrix4Xd> inputs(count);
  for (std::size_t j = 0; j < count; ++j) inputs[j] = lift_batch(dataset.snapshots[j].points, dataset.field(j), false).inputs;

  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
  Eigen::MatrixXd zs(k, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < zs.cols(); ++j) {
    for (int i = 0; i < k; ++i) zs(i, j) = cfg.z_init_scale * standard_normal(rng);
  }
  AdamState adam_theta(net.num_parameters());
  AdamState adam_z(zs.size());

  const std::size_t per_step =
      cfg.batch_snapshots <= 0 ? count : std::min<std::size_t>(count, static_cast<std::size_t>(cfg.batch_snapshots));
  result.losses.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> chosen;
    if (per_step == count) {
      for (std::size_t j = 0; j < count; ++j) chosen.push_back(j);
    } else {
      for (std::size_t b = 0; b < per_step; ++b) chosen.push_back(rng() % count);
    }
    std::vector<std::vector<Eigen::Index>> picks(chosen.size());
    Eigen::Index total = 0;
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      const auto n = static_cast<Eigen::Index>(dataset.snapshots[chosen[b]].points.size());
      if (cfg.batch_points >= n) {
        for (Eigen::Index p = 0; p < n; ++p) picks[b].push_back(p);
      } else {
        for (int p = 0; p < cfg.batch_points; ++p) picks[b].push_back(static_cast<Eigen::Index>(rng() % n));
      }
      total += static_cast<Eigen::Index>(picks[b].size());
    }
    Eigen::Matrix4Xd in(4, total);
    Eigen::Index col = 0;
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      for (Eigen::Index p : picks[b]) in.col(col++) = inputs[chosen[b]].col(p);
    }
    const ForwardPass fp = forward_batch(net, in);
    const Eigen::MatrixXd& out = fp.output();
    Eigen::MatrixXd g_out(3 * k, total);
    Eigen::MatrixXd g_z = Eigen::MatrixXd::Zero(k, zs.cols());
    double loss = 0.0;
    col = 0;
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      const std::size_t j = chosen[b];
      const Snapshot& snap = dataset.snapshots[j];
      const double scale = 1.0 / (static_cast<double>(chosen.size()) * static_cast<double>(picks[b].size()));
      const Eigen::VectorXd z = zs.col(static_cast<Eigen::Index>(j));
      for (Eigen::Index p : picks[b]) {
        Eigen::Vector3d u = -snap.displacements[static_cast<std::size_t>(p)];
        for (int i = 0; i < k; ++i) u += z[i] * out.block<3, 1>(3 * i, col);
        loss += scale * u.squaredNorm();
        for (int i = 0; i < k; ++i) {
          g_out.block<3, 1>(3 * i, col) = 2.0 * scale * z[i] * u;
          g_z(i, static_cast<Eigen::Index>(j)) += 2.0 * scale * out.block<3, 1>(3 * i, col).dot(u);
        }
        ++col;
      }
    }
    if (!std::isfinite(loss)) throw TrainingError(step, dataset.snapshots[chosen.front()].alpha, zs.cwiseAbs().maxCoeff());
    result.losses.push_back(loss);
    if (callback) callback(step, loss);
    const AdamHyper hp{cfg.lr.at(step, cfg.steps)};
    const Eigen::VectorXd g_theta = backward_batch(net, fp, g_out);
    adam_step(net.parameters(), adam_theta, g_theta, hp);
    Eigen::Map<Eigen::VectorXd> zflat(zs.data(), zs.size());
    adam_step(zflat, adam_z, Eigen::Map<const Eigen::VectorXd>(g_z.data(), g_z.size()), hp);
  }
  return result;
}

struct ReconstructionReport {
  double mse = 0.0;
  double max_condition = 0.0;
  bool rank_deficient = false;
};

/// Mean squared residual per displacement component after projecting every
/// snapshot onto the basis with its least-squares optimal z (minimum norm).
inline ReconstructionReport reconstruction_error(const NeuralBasis& net, const SnapshotDataset& dataset) {
  dataset.validate();
  ReconstructionReport report;
  double total = 0.0;
  double count = 0.0;
  for (std::size_t j = 0; j < dataset.snapshots.size(); ++j) {
    const Snapshot& snap = dataset.snapshots[j];
    const BasisSamples basis = evaluate_basis(net, snap.points, dataset.field(j), false);
    const auto n = static_cast<Eigen::Index>(snap.points.size());
    Eigen::VectorXd u(3 * n);
    for (Eigen::Index p = 0; p < n; ++p) u.segment<3>(3 * p) = snap.displacements[static_cast<std::size_t>(p)];
    Eigen::BDCSVD<Eigen::MatrixXd> svd(basis.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double smax = sv.size() ? sv.maxCoeff() : 0.0;
    const double smin = sv.size() ? sv.minCoeff() : 0.0;
    const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    report.max_condition = std::max(report.max_condition, cond);
    if (svd.rank() < basis.values.cols()) report.rank_deficient = true;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(basis.values.cols());
    if (smax > 0.0) z = svd.solve(u);
    total += (basis.values * z - u).squaredNorm();
    count += static_cast<double>(u.size());
  }
  report.mse = count > 0.0 ? total / count : 0.0;
  return report;
}

}  // namespace windlift
