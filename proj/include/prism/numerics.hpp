#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "prism/error.hpp"
#include "prism/rng.hpp"

namespace prism {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Dense rectifier network. Layer l maps a batch X (B x dims[l]) to
/// X * W_l + 1 * b_l^T (B x dims[l+1]); every layer but the last is followed
/// by max(0, .). The output layer is linear.
class FeedforwardNet {
 public:
  FeedforwardNet() = default;

  /// Zero-initialized net.
  explicit FeedforwardNet(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2) throw ShapeError("FeedforwardNet needs at least input and output dims");
    for (int d : dims_)
      if (d <= 0) throw ShapeError("FeedforwardNet layer dims must be positive");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.push_back(Matrix::Zero(dims_[l], dims_[l + 1]));
      biases_.push_back(Vector::Zero(dims_[l + 1]));
    }
  }

  /// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
  static FeedforwardNet glorot(std::vector<int> layer_dims, Engine& eng) {
    FeedforwardNet net(std::move(layer_dims));
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
      Matrix& w = net.weights_[l];
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * uniform01(eng) - 1.0) * limit;
    }
    return net;
  }

  const std::vector<int>& layer_dims() const noexcept { return dims_; }
  std::size_t num_layers() const noexcept { return weights_.size(); }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

  const Matrix& weight(std::size_t l) const { return weights_.at(l); }
  Matrix& weight(std::size_t l) { return weights_.at(l); }
  const Vector& bias(std::size_t l) const { return biases_.at(l); }
  Vector& bias(std::size_t l) { return biases_.at(l); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Flat parameter view: layer by layer, weights (row-major) then bias.
  double& parameter(std::size_t index) {
    return const_cast<double&>(std::as_const(*this).parameter(index));
  }
  const double& parameter(std::size_t index) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto wsize = static_cast<std::size_t>(weights_[l].size());
      if (index < wsize) {
        const auto cols = static_cast<std::size_t>(weights_[l].cols());
        return weights_[l](static_cast<Eigen::Index>(index / cols), static_cast<Eigen::Index>(index % cols));
      }
      index -= wsize;
      const auto bsize = static_cast<std::size_t>(biases_[l].size());
      if (index < bsize) return biases_[l](static_cast<Eigen::Index>(index));
      index -= bsize;
    }
    throw ShapeError("parameter index out of range");
  }

  bool parameters_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
  }

  /// Bitwise parameter equality.
  friend bool operator==(const FeedforwardNet& a, const FeedforwardNet& b) {
    if (a.dims_ != b.dims_) return false;
    for (std::size_t l = 0; l < a.weights_.size(); ++l) {
      if (std::memcmp(a.weights_[l].data(), b.weights_[l].data(), sizeof(double) * a.weights_[l].size()) != 0)
        return false;
      if (std::memcmp(a.biases_[l].data(), b.biases_[l].data(), sizeof(double) * a.biases_[l].size()) != 0)
        return false;
    }
    return true;
  }

 private:
  std::vector<int> dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// dLoss/dtheta for one FeedforwardNet, same layout as the net.
struct GradientSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static GradientSet zeros_like(const FeedforwardNet& net) {
    GradientSet g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      g.weights.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      g.biases.push_back(Vector::Zero(net.bias(l).size()));
    }
    return g;
  }

  bool congruent_with(const FeedforwardNet& net) const {
    if (weights.size() != net.num_layers() || biases.size() != net.num_layers()) return false;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      if (weights[l].rows() != net.weight(l).rows() || weights[l].cols() != net.weight(l).cols()) return false;
      if (biases[l].size() != net.bias(l).size()) return false;
    }
    return true;
  }

  bool finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  /// Same flat layout as FeedforwardNet::parameter.
  double at(std::size_t index) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto wsize = static_cast<std::size_t>(weights[l].size());
      if (index < wsize) {
        const auto cols = static_cast<std::size_t>(weights[l].cols());
        return weights[l](static_cast<Eigen::Index>(index / cols), static_cast<Eigen::Index>(index % cols));
      }
      index -= wsize;
      if (index < static_cast<std::size_t>(biases[l].size())) return biases[l](static_cast<Eigen::Index>(index));
      index -= static_cast<std::size_t>(biases[l].size());
    }
    throw ShapeError("gradient index out of range");
  }

  bool is_zero() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].isZero(0.0) || !biases[l].isZero(0.0)) return false;
    return true;
  }
};

/// Per-layer intermediates kept for the reverse pass.
struct ForwardTrace {
  std::vector<Matrix> layer_inputs;  // input to layer l (post-activation of l-1)
  std::vector<Matrix> pre_activations;
  Matrix output;
};

namespace detail {

inline void check_input(const FeedforwardNet& net, const Matrix& inputs) {
  if (net.num_layers() == 0) throw ShapeError("net has no layers");
  if (inputs.cols() != net.input_dim())
    throw ShapeError("input has " + std::to_string(inputs.cols()) + " columns, net expects " +
                     std::to_string(net.input_dim()));
  if (!inputs.allFinite()) throw InputError("net input contains non-finite values");
}

}  // namespace detail

inline ForwardTrace forward_trace(const FeedforwardNet& net, const Matrix& inputs) {
  detail::check_input(net, inputs);
  ForwardTrace trace;
  Matrix h = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = h * net.weight(l);
    z.rowwise() += net.bias(l).transpose();
    trace.layer_inputs.push_back(std::move(h));
    if (l + 1 < net.num_layers()) {
      h = z.cwiseMax(0.0);
    } else {
      h = z;
    }
    trace.pre_activations.push_back(std::move(z));
  }
  trace.output = std::move(h);
  return trace;
}

inline Matrix net_forward(const FeedforwardNet& net, const Matrix& inputs) {
  detail::check_input(net, inputs);
  Matrix h = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Matrix z = h * net.weight(l);
    z.rowwise() += net.bias(l).transpose();
    h = (l + 1 < net.num_layers()) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

struct NetGradients {
  GradientSet params;
  Matrix inputs;  // dLoss/dInputs, B x d_in
};

/// Reverse pass over a recorded trace.
inline NetGradients backward(const FeedforwardNet& net, const ForwardTrace& trace, const Matrix& upstream) {
  if (upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols())
    throw ShapeError("upstream gradient shape does not match forward output");
  NetGradients out{GradientSet::zeros_like(net), Matrix()};
  Matrix delta = upstream;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    if (l + 1 < net.num_layers()) {
      // rectifier: derivative 1 where pre-activation > 0, else 0
      delta = delta.cwiseProduct((trace.pre_activations[l].array() > 0.0).cast<double>().matrix());
    }
    out.params.weights[l].noalias() = trace.layer_inputs[l].transpose() * delta;
    out.params.biases[l] = delta.colwise().sum().transpose();
    delta = delta * net.weight(l).transpose();
  }
  out.inputs = std::move(delta);
  return out;
}

inline NetGradients net_gradients(const FeedforwardNet& net, const Matrix& inputs, const Matrix& upstream) {
  return backward(net, forward_trace(net, inputs), upstream);
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

struct CrossEntropy {
  double loss = 0.0;
  Matrix grad_logits;
};

/// -(1/denominator) * sum_i log softmax(logits_i)[label_i]. The plain mean uses
/// denominator = B; grouped callers pass the size of the full batch so the
/// per-group terms add up to the batch mean.
inline CrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, double denominator) {
  if (logits.cols() < 2) throw InputError("cross-entropy needs at least 2 classes");
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeError("label count does not match logits rows");
  if (!(denominator > 0.0)) throw InputError("cross-entropy denominator must be positive");
  CrossEntropy ce;
  ce.grad_logits.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols())
      throw InputError("label " + std::to_string(y) + " out of range [0, " + std::to_string(logits.cols()) + ")");
    const double mx = logits.row(r).maxCoeff();
    const auto shifted = (logits.row(r).array() - mx).eval();
    const double lse = std::log(shifted.exp().sum());
    total += lse - shifted(y);
    ce.grad_logits.row(r) = (shifted - lse).exp().matrix();
    ce.grad_logits(r, y) -= 1.0;
  }
  ce.loss = total / denominator;
  ce.grad_logits /= denominator;
  return ce;
}

inline CrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw InputError("cross-entropy over an empty batch");
  return softmax_cross_entropy(logits, labels, static_cast<double>(logits.rows()));
}

struct PairLoss {
  double loss = 0.0;
  double dloss_dd = 0.0;
};

/// u*d^2 + (1-u)*max(M-d, 0)^2 and its derivative in d. At d == M the
/// subgradient 0 is returned.
inline PairLoss contrastive_pair_loss(double d, bool same, double margin) {
  if (!(d >= 0.0)) throw InputError("pair distance must be nonnegative");
  if (!(margin > 0.0)) throw InputError("contrastive margin must be positive");
  if (same) return {d * d, 2.0 * d};
  const double gap = margin - d;
  if (gap > 0.0) return {gap * gap, -2.0 * gap};
  return {0.0, 0.0};
}

/// Index pair into an embedding matrix plus the same-group flag u.
struct SamplePair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same = false;
};

struct ContrastiveBatch {
  double loss = 0.0;
  Matrix grad_embeddings;  // same shape as the embeddings
  double min_hinge_gap = std::numeric_limits<double>::infinity();  // min |d - M| over negative pairs
};

/// (1/(2P)) * sum over P pairs of the per-pair contrastive term, with the
/// gradient routed back to the embedding rows. Zero-distance pairs contribute
/// a zero gradient.
inline ContrastiveBatch contrastive_loss(const Matrix& embeddings, std::span<const SamplePair> pairs, double margin) {
  ContrastiveBatch out;
  out.grad_embeddings = Matrix::Zero(embeddings.rows(), embeddings.cols());
  if (pairs.empty()) return out;
  const double scale = 1.0 / (2.0 * static_cast<double>(pairs.size()));
  double total = 0.0;
  for (const auto& p : pairs) {
    const RowVector diff = embeddings.row(static_cast<Eigen::Index>(p.a)) - embeddings.row(static_cast<Eigen::Index>(p.b));
    const double d = diff.norm();
    const PairLoss pl = contrastive_pair_loss(d, p.same, margin);
    total += pl.loss;
    if (!p.same) out.min_hinge_gap = std::min(out.min_hinge_gap, std::abs(d - margin));
    if (d > 0.0 && pl.dloss_dd != 0.0) {
      const RowVector g = (scale * pl.dloss_dd / d) * diff;
      out.grad_embeddings.row(static_cast<Eigen::Index>(p.a)) += g;
      out.grad_embeddings.row(static_cast<Eigen::Index>(p.b)) -= g;
    }
  }
  out.loss = total * scale;
  return out;
}

/// theta <- theta - lr * grad.
inline void sgd_step(FeedforwardNet& net, const GradientSet& grads, double lr) {
  if (!grads.congruent_with(net)) throw ShapeError("gradient set not congruent with net");
  if (!grads.finite()) throw NumericError("non-finite gradient in sgd_step");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InputError("learning rate must be finite and nonnegative");
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    net.weight(l) -= lr * grads.weights[l];
    net.bias(l) -= lr * grads.biases[l];
  }
}

/// Loss value and analytic gradients for a set of nets, as consumed by the
/// finite-difference oracle. `near_kink` marks evaluations sitting on a
/// non-differentiable point (contrastive hinge, rectifier at zero).
struct NetLoss {
  double loss = 0.0;
  std::vector<GradientSet> grads;
  bool near_kink = false;
};

using NetLossFn = std::function<NetLoss(std::span<const FeedforwardNet>)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t worst_net = 0;
  std::size_t worst_parameter = 0;
  std::size_t skipped = 0;  // parameters whose perturbation crossed a kink
  bool excluded = false;    // base point is a kink; no verdict
  bool passed = false;
};

/// Central differences on every parameter of every net. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, scale_floor).
inline FdReport finite_difference_check(std::vector<FeedforwardNet> nets, const NetLossFn& loss_fn, double tolerance,
                                        double step = 1e-5, double scale_floor = 1e-6) {
  FdReport report;
  const NetLoss base = loss_fn(nets);
  if (!std::isfinite(base.loss)) throw NumericError("non-finite loss at base point");
  if (base.grads.size() != nets.size()) throw ShapeError("loss_fn returned a gradient count different from nets");
  if (base.near_kink) {
    report.excluded = true;
    return report;
  }
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const std::size_t count = nets[k].parameter_count();
    for (std::size_t i = 0; i < count; ++i) {
      double& theta = nets[k].parameter(i);
      const double saved = theta;
      theta = saved + step;
      const NetLoss plus = loss_fn(nets);
      theta = saved - step;
      const NetLoss minus = loss_fn(nets);
      theta = saved;
      if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss)) throw NumericError("non-finite loss under perturbation");
      if (plus.near_kink || minus.near_kink) {
        ++report.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * step);
      const double analytic = base.grads[k].at(i);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.parameters_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_net = k;
        report.worst_parameter = i;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

/// Smallest |pre-activation| over the hidden layers of a trace; used to flag
/// rectifier kinks for the finite-difference oracle.
inline double min_hidden_preactivation(const ForwardTrace& trace) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < trace.pre_activations.size(); ++l)
    m = std::min(m, trace.pre_activations[l].cwiseAbs().minCoeff());
  return m;
}

/// Gather the given rows of a matrix in order.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace prism
