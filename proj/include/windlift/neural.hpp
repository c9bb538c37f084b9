#pragma once

// Small dense network f(alpha, x, y, z) -> R^{3k} with exact parameter
// gradients, including gradients of losses that depend on the network's
// directional derivatives with respect to its inputs.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace windlift {

enum class Activation { elu, sine };

inline std::string to_string(Activation a) { return a == Activation::elu ? "elu" : "sine"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "sine") return Activation::sine;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Network input (alpha, x, y, z): cut fraction, planar position and winding height.
struct LiftedPoint {
  double alpha = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector4d vector() const { return {alpha, x, y, z}; }
  friend bool operator==(const LiftedPoint&, const LiftedPoint&) = default;
};

/// Affine map of the domain bounding box onto [-1, 1]^2.
struct InputNormalization {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;

  double scale_x() const { return 2.0 / (xmax - xmin); }
  double scale_y() const { return 2.0 / (ymax - ymin); }
  friend bool operator==(const InputNormalization&, const InputNormalization&) = default;
};

struct NetworkConfig {
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::elu;
  int k = 18;
  double sine_omega = 30.0;
  InputNormalization normalization;
  /// When false the winding-height channel is zeroed: the unlifted ablation.
  bool height_input = true;
};

// Bit-exact uniform in [0, 1) from a 64-bit engine, independent of the
// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Weights of the volumetric field. Parameters live in one flat vector laid
/// out layer by layer as (W column-major, b).
class NeuralBasis {
 public:
  NeuralBasis() = default;

  explicit NeuralBasis(NetworkConfig config) : config_(std::move(config)) {
    if (config_.k < 1) throw std::invalid_argument("basis size k must be at least 1");
    dims_.push_back(4);
    for (int h : config_.hidden) {
      if (h < 1) throw std::invalid_argument("hidden layer sizes must be positive");
      dims_.push_back(h);
    }
    dims_.push_back(3 * config_.k);
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(offset);
      offset += static_cast<Eigen::Index>(dims_[l + 1]) * (dims_[l] + 1);
    }
    params_ = Eigen::VectorXd::Zero(offset);
  }

  /// Glorot-uniform hidden layers (SIREN scheme for sine), zero biases. The
  /// output layer is scaled by `output_scale`; 0 gives a basis that is
  /// identically zero.
  static NeuralBasis initialized(NetworkConfig config, std::uint64_t seed, double output_scale = 0.0) {
    NeuralBasis net(std::move(config));
    std::mt19937_64 rng(seed);
    const int layers = net.num_layers();
    for (int l = 0; l < layers; ++l) {
      const int fan_in = net.dims_[l];
      const int fan_out = net.dims_[l + 1];
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      if (net.config_.activation == Activation::sine) {
        bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / net.config_.sine_omega;
      }
      if (l == layers - 1) bound *= output_scale;
      auto w = net.weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng, -bound, bound);
      }
    }
    return net;
  }

  const NetworkConfig& config() const { return config_; }
  int k() const { return config_.k; }
  int output_dim() const { return 3 * config_.k; }
  const std::vector<int>& layer_dims() const { return dims_; }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  Eigen::Index num_parameters() const { return params_.size(); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int l) { return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]}; }
  Eigen::Map<const Eigen::MatrixXd> weight(int l) const {
    return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<Eigen::VectorXd> bias(int l) {
    return {params_.data() + offsets_[l] + Eigen::Index(dims_[l + 1]) * dims_[l], dims_[l + 1]};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int l) const {
    return {params_.data() + offsets_[l] + Eigen::Index(dims_[l + 1]) * dims_[l], dims_[l + 1]};
  }
  Eigen::Index offset(int l) const { return offsets_[l]; }

  /// FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(params_.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
    return h;
  }

  /// Raw (alpha, x, y, z) columns -> normalized network inputs.
  Eigen::Matrix4Xd normalize_inputs(const Eigen::Matrix4Xd& raw) const {
    Eigen::Matrix4Xd n(4, raw.cols());
    const auto& nm = config_.normalization;
    n.row(0) = raw.row(0);
    n.row(1) = (raw.row(1).array() - nm.xmin) * nm.scale_x() - 1.0;
    n.row(2) = (raw.row(2).array() - nm.ymin) * nm.scale_y() - 1.0;
    if (config_.height_input) {
      n.row(3) = raw.row(3);
    } else {
      n.row(3).setZero();
    }
    return n;
  }

  /// Input-space tangents transform by the linear part of the normalization.
  Eigen::Matrix4Xd normalize_tangents(const Eigen::Matrix4Xd& raw) const {
    Eigen::Matrix4Xd n = raw;
    n.row(1) *= config_.normalization.scale_x();
    n.row(2) *= config_.normalization.scale_y();
    if (!config_.height_input) n.row(3).setZero();
    return n;
  }

 private:
  NetworkConfig config_;
  std::vector<int> dims_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

namespace detail {

inline void activate(Activation act, double omega, const Eigen::MatrixXd& a, Eigen::MatrixXd& out) {
  if (act == Activation::elu) {
    out = a.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  } else {
    out = (omega * a.array()).sin().matrix();
  }
}

inline Eigen::MatrixXd activation_d1(Activation act, double omega, const Eigen::MatrixXd& a) {
  if (act == Activation::elu) return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
  return (omega * (omega * a.array()).cos()).matrix();
}

inline Eigen::MatrixXd activation_d2(Activation act, double omega, const Eigen::MatrixXd& a) {
  if (act == Activation::elu) return a.unaryExpr([](double v) { return v > 0.0 ? 0.0 : std::exp(v); });
  return (-omega * omega * (omega * a.array()).sin()).matrix();
}

}  // namespace detail

/// Forward tape for a batch of inputs (one per column), carrying any number
/// of input-space tangent directions alongside the values.
struct ForwardPass {
  std::vector<Eigen::MatrixXd> pre;                 // per layer, n_{l+1} x B
  std::vector<Eigen::MatrixXd> post;                // post[0] = normalized input
  std::vector<std::vector<Eigen::MatrixXd>> dpre;   // [tangent][layer]
  std::vector<std::vector<Eigen::MatrixXd>> dpost;  // [tangent][layer + 1]

  const Eigen::MatrixXd& output() const { return post.back(); }
  const Eigen::MatrixXd& tangent_output(std::size_t t) const { return dpost[t].back(); }
  std::size_t num_tangents() const { return dpost.size(); }
};

inline ForwardPass forward_batch(const NeuralBasis& net, const Eigen::Matrix4Xd& raw_inputs,
                                 std::span<const Eigen::Matrix4Xd> raw_tangents = {}) {
  const int layers = net.num_layers();
  const auto act = net.config().activation;
  const double omega = net.config().sine_omega;
  ForwardPass fp;
  fp.pre.resize(layers);
  fp.post.resize(layers + 1);
  fp.dpre.assign(raw_tangents.size(), std::vector<Eigen::MatrixXd>(layers));
  fp.dpost.assign(raw_tangents.size(), std::vector<Eigen::MatrixXd>(layers + 1));
  fp.post[0] = net.normalize_inputs(raw_inputs);
  for (std::size_t t = 0; t < raw_tangents.size(); ++t) fp.dpost[t][0] = net.normalize_tangents(raw_tangents[t]);

  for (int l = 0; l < layers; ++l) {
    const auto W = net.weight(l);
    fp.pre[l].noalias() = W * fp.post[l];
    fp.pre[l].colwise() += net.bias(l);
    for (std::size_t t = 0; t < raw_tangents.size(); ++t) fp.dpre[t][l].noalias() = W * fp.dpost[t][l];
    if (l == layers - 1) {
      fp.post[l + 1] = fp.pre[l];
      for (std::size_t t = 0; t < raw_tangents.size(); ++t) fp.dpost[t][l + 1] = fp.dpre[t][l];
    } else {
      detail::activate(act, omega, fp.pre[l], fp.post[l + 1]);
      if (!raw_tangents.empty()) {
        const Eigen::MatrixXd d1 = detail::activation_d1(act, omega, fp.pre[l]);
        for (std::size_t t = 0; t < raw_tangents.size(); ++t) {
          fp.dpost[t][l + 1] = d1.cwiseProduct(fp.dpre[t][l]);
        }
      }
    }
  }
  return fp;
}

/// Reverse pass: given dL/d(output) and dL/d(tangent outputs), returns dL/dθ.
inline Eigen::VectorXd backward_batch(const NeuralBasis& net, const ForwardPass& fp,
                                      const Eigen::MatrixXd& grad_output,
                                      std::span<const Eigen::MatrixXd> grad_tangents = {}) {
  if (!grad_tangents.empty() && grad_tangents.size() != fp.num_tangents()) {
    throw std::invalid_argument("tangent gradient count does not match forward pass");
  }
  const int layers = net.num_layers();
  const auto act = net.config().activation;
  const double omega = net.config().sine_omega;
  const std::size_t nt = grad_tangents.size();

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.num_parameters());
  Eigen::MatrixXd g_post = grad_output;
  std::vector<Eigen::MatrixXd> g_dpost(grad_tangents.begin(), grad_tangents.end());

  for (int l = layers - 1; l >= 0; --l) {
    Eigen::MatrixXd g_pre;
    std::vector<Eigen::MatrixXd> g_dpre(nt);
    if (l == layers - 1) {
      g_pre = std::move(g_post);
      for (std::size_t t = 0; t < nt; ++t) g_dpre[t] = std::move(g_dpost[t]);
    } else {
      const Eigen::MatrixXd d1 = detail::activation_d1(act, omega, fp.pre[l]);
      g_pre = d1.cwiseProduct(g_post);
      if (nt > 0) {
        const Eigen::MatrixXd d2 = detail::activation_d2(act, omega, fp.pre[l]);
        Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(d2.rows(), d2.cols());
        for (std::size_t t = 0; t < nt; ++t) {
          mix += fp.dpre[t][l].cwiseProduct(g_dpost[t]);
          g_dpre[t] = d1.cwiseProduct(g_dpost[t]);
        }
        g_pre += d2.cwiseProduct(mix);
      }
    }
    const int n_out = net.layer_dims()[l + 1];
    const int n_in = net.layer_dims()[l];
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + net.offset(l), n_out, n_in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + net.offset(l) + Eigen::Index(n_out) * n_in, n_out);
    gW.noalias() += g_pre * fp.post[l].transpose();
    for (std::size_t t = 0; t < nt; ++t) gW.noalias() += g_dpre[t] * fp.dpost[t][l].transpose();
    gb += g_pre.rowwise().sum();
    if (l > 0) {
      const auto W = net.weight(l);
      g_post.noalias() = W.transpose() * g_pre;
      g_dpost.resize(nt);
      for (std::size_t t = 0; t < nt; ++t) g_dpost[t].noalias() = W.transpose() * g_dpre[t];
    }
  }
  return grad;
}

inline Eigen::VectorXd forward(const NeuralBasis& net, const LiftedPoint& input) {
  Eigen::Matrix4Xd in(4, 1);
  in.col(0) = input.vector();
  return forward_batch(net, in).output().col(0);
}

/// (3k) x 4 Jacobian of the output with respect to (alpha, x, y, z).
inline Eigen::MatrixXd input_jacobian(const NeuralBasis& net, const LiftedPoint& input) {
  Eigen::Matrix4Xd in(4, 1);
  in.col(0) = input.vector();
  std::vector<Eigen::Matrix4Xd> seeds(4, Eigen::Matrix4Xd::Zero(4, 1));
  for (int i = 0; i < 4; ++i) seeds[i](i, 0) = 1.0;
  const ForwardPass fp = forward_batch(net, in, seeds);
  Eigen::MatrixXd jac(net.output_dim(), 4);
  for (int i = 0; i < 4; ++i) jac.col(i) = fp.tangent_output(i).col(0);
  return jac;
}

struct TrainingSample {
  LiftedPoint input;
  Eigen::VectorXd target;
  double weight = 1.0;
};

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Gradient of sum_i w_i |f(x_i) - t_i|^2 with respect to all parameters.
inline LossGradient param_gradient(const NeuralBasis& net, std::span<const TrainingSample> batch) {
  if (batch.empty()) throw std::invalid_argument("param_gradient needs a nonempty batch");
  Eigen::Matrix4Xd in(4, batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) in.col(i) = batch[i].input.vector();
  const ForwardPass fp = forward_batch(net, in);
  Eigen::MatrixXd g(net.output_dim(), batch.size());
  LossGradient out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].target.size() != net.output_dim()) throw std::invalid_argument("target has wrong dimension");
    const Eigen::VectorXd r = fp.output().col(i) - batch[i].target;
    out.loss += batch[i].weight * r.squaredNorm();
    g.col(i) = 2.0 * batch[i].weight * r;
  }
  out.gradient = backward_batch(net, fp, g);
  return out;
}

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place.
inline void adam_step(Eigen::Ref<Eigen::VectorXd> params, AdamState& state, const Eigen::VectorXd& gradient,
                      const AdamHyper& hp) {
  if (state.m.size() != params.size()) state = AdamState(params.size());
  ++state.step;
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * gradient;
  state.v = hp.beta2 * state.v + (1.0 - hp.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  params.array() -= hp.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hp.eps);
}

}  // namespace windlift
