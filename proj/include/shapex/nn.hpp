#pragma once

// Dense networks with exact reverse-mode gradients, Adam, and the LXW1
// weight container.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "shapex/error.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace shapex::nn {

enum class Activation { identity, leaky_relu, sigmoid };

// Enables flush-to-zero / denormals-are-zero for the current thread while in
// scope. Training loss tails otherwise produce subnormal gradients that stall
// the FPU.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
#if defined(__SSE2__)
  unsigned saved_;
#endif
};

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

inline constexpr double kLeakySlope = 0.01;

struct LayerSpec {
  std::string name;
  int in = 0;
  int out = 0;
  Activation activation = Activation::identity;
  double slope = kLeakySlope;
  // Additive residual: y = x + act(Wx + b). Requires in == out.
  bool skip = false;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct DenseLayer {
  LayerSpec spec;
  Matrix<S> weight;  // out x in
  Vector<S> bias;    // out
};

// Activations of one forward pass; columns are samples.
template <class S>
struct Tape {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<Matrix<S>> inputs;       // input to each layer
  std::vector<Matrix<S>> activations;  // act(pre) for each layer, before the residual add
  Matrix<S> output;
};

template <class S>
struct GradientRecord {
  std::vector<Matrix<S>> weight;
  std::vector<Vector<S>> bias;
  Matrix<S> input;
};

namespace detail {
inline std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

template <class S>
class DenseNetwork {
 public:
  DenseNetwork() : id_(detail::next_network_id()) {}

  // Zero-initialized parameters; validates the layer chain.
  explicit DenseNetwork(std::vector<LayerSpec> specs) : id_(detail::next_network_id()) {
    if (specs.empty()) throw ArgumentError("network needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      if (s.in <= 0 || s.out <= 0) throw ArgumentError("layer " + s.name + " has a non-positive dimension");
      if (i > 0 && specs[i - 1].out != s.in)
        throw ArgumentError("layer " + s.name + " input does not chain with previous output");
      if (s.skip && s.in != s.out) throw ArgumentError("skip connection on layer " + s.name + " needs in == out");
      layers_.push_back({s, Matrix<S>::Zero(s.out, s.in), Vector<S>::Zero(s.out)});
    }
  }

  DenseNetwork(const DenseNetwork& other)
      : layers_(other.layers_), frozen_(other.frozen_), id_(detail::next_network_id()), version_(0) {}
  DenseNetwork& operator=(const DenseNetwork& other) {
    if (this != &other) {
      layers_ = other.layers_;
      frozen_ = other.frozen_;
      id_ = detail::next_network_id();
      version_ = 0;
    }
    return *this;
  }
  DenseNetwork(DenseNetwork&&) noexcept = default;
  DenseNetwork& operator=(DenseNetwork&&) noexcept = default;

  // He-style initialization adjusted for the leaky slope; residual branches
  // are scaled down by the square root of the number of residual layers.
  static DenseNetwork initialized(std::vector<LayerSpec> specs, std::uint64_t seed) {
    DenseNetwork net(std::move(specs));
    std::mt19937_64 rng(seed);
    int residual = 0;
    for (const auto& l : net.layers_) residual += l.spec.skip ? 1 : 0;
    for (auto& l : net.layers_) {
      const double gain = l.spec.activation == Activation::leaky_relu ? 2.0 / (1.0 + l.spec.slope * l.spec.slope) : 1.0;
      double stddev = std::sqrt(gain / l.spec.in);
      if (l.spec.skip && residual > 0) stddev /= std::sqrt(static_cast<double>(residual));
      std::normal_distribution<double> dist(0.0, stddev);
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = static_cast<S>(dist(rng));
      l.bias.setZero();
    }
    return net;
  }

  int input_dim() const { return layers_.front().spec.in; }
  int output_dim() const { return layers_.back().spec.out; }
  std::size_t layer_count() const { return layers_.size(); }
  std::span<const DenseLayer<S>> layers() const { return layers_; }
  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

  // Mutable access for training and loading; rejected once frozen.
  DenseLayer<S>& mutable_layer(std::size_t i) {
    if (frozen_) throw StateError("network is frozen; parameter updates are rejected");
    ++version_;
    return layers_.at(i);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  Tape<S> forward(const Matrix<S>& x) const {
    check_input(x.rows());
    Tape<S> tape;
    tape.network_id = id_;
    tape.version = version_;
    tape.inputs.reserve(layers_.size());
    tape.activations.reserve(layers_.size());
    Matrix<S> h = x;
    for (const auto& l : layers_) {
      Matrix<S> a = l.weight * h;
      a.colwise() += l.bias;
      apply_activation(l.spec, a);
      tape.inputs.push_back(std::move(h));
      if (l.spec.skip) {
        h = tape.inputs.back() + a;
      } else {
        h = a;
      }
      tape.activations.push_back(std::move(a));
    }
    tape.output = std::move(h);
    return tape;
  }

  Tape<S> forward(const Vector<S>& x) const { return forward(Matrix<S>(x)); }

  Matrix<S> infer(const Matrix<S>& x) const {
    check_input(x.rows());
    Matrix<S> h = x;
    for (const auto& l : layers_) {
      Matrix<S> a = l.weight * h;
      a.colwise() += l.bias;
      apply_activation(l.spec, a);
      if (l.spec.skip) {
        h += a;
      } else {
        h = std::move(a);
      }
    }
    return h;
  }

  Vector<S> infer(const Vector<S>& x) const { return infer(Matrix<S>(x)).col(0); }

  // dL/dy at the network output.
  GradientRecord<S> backward(const Tape<S>& tape, const Matrix<S>& d_output) const {
    return backward_impl(tape, d_output, false);
  }

  // Gradient supplied with respect to the last layer's pre-activation; used
  // for sigmoid + cross-entropy where dL/dpre = p - t is the stable form.
  GradientRecord<S> backward_preactivation(const Tape<S>& tape, const Matrix<S>& d_pre) const {
    if (layers_.back().spec.skip) throw ArgumentError("backward_preactivation needs an unskipped last layer");
    return backward_impl(tape, d_pre, true);
  }

  template <class T>
  DenseNetwork<T> cast() const {
    DenseNetwork<T> out(specs());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& dst = out.mutable_layer(i);
      dst.weight = layers_[i].weight.template cast<T>();
      dst.bias = layers_[i].bias.template cast<T>();
    }
    if (frozen_) out.freeze();
    return out;
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (layers_.empty()) throw StateError("network has no layers");
    if (rows != input_dim())
      throw ArgumentError("input dimension " + std::to_string(rows) + " does not match network input " +
                          std::to_string(input_dim()));
  }

  static void apply_activation(const LayerSpec& spec, Matrix<S>& a) {
    switch (spec.activation) {
      case Activation::identity: break;
      case Activation::leaky_relu: {
        const S slope = static_cast<S>(spec.slope);
        a = a.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
        break;
      }
      case Activation::sigmoid:
        a = a.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
        break;
    }
  }

  // Multiplies an upstream gradient by act'(pre), expressed through act(pre).
  static void activation_backward(const LayerSpec& spec, const Matrix<S>& act, Matrix<S>& grad) {
    switch (spec.activation) {
      case Activation::identity: break;
      case Activation::leaky_relu: {
        const S slope = static_cast<S>(spec.slope);
        grad = grad.binaryExpr(act, [slope](S g, S y) { return y > S(0) ? g : slope * g; });
        break;
      }
      case Activation::sigmoid:
        grad = grad.binaryExpr(act, [](S g, S y) { return g * y * (S(1) - y); });
        break;
    }
  }

  GradientRecord<S> backward_impl(const Tape<S>& tape, const Matrix<S>& upstream, bool is_preactivation) const {
    if (tape.network_id != id_ || tape.version != version_ || tape.inputs.size() != layers_.size())
      throw StateError("stale tape: network changed since the forward pass");
    if (upstream.rows() != output_dim() || upstream.cols() != tape.output.cols())
      throw ArgumentError("output gradient shape does not match the forward pass");
    GradientRecord<S> g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix<S> d_out = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      Matrix<S> d_pre = d_out;
      if (!(is_preactivation && k + 1 == layers_.size())) activation_backward(l.spec, tape.activations[k], d_pre);
      g.weight[k].noalias() = d_pre * tape.inputs[k].transpose();
      g.bias[k] = d_pre.rowwise().sum();
      Matrix<S> d_in = l.weight.transpose() * d_pre;
      if (l.spec.skip) d_in += d_out;
      d_out = std::move(d_in);
    }
    g.input = std::move(d_out);
    return g;
  }

  std::vector<DenseLayer<S>> layers_;
  bool frozen_ = false;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

using Network = DenseNetwork<float>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over one flat variable.
template <class S>
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t size, AdamConfig config)
      : config_(config), m_(Vector<S>::Zero(static_cast<Eigen::Index>(size))),
        v_(Vector<S>::Zero(static_cast<Eigen::Index>(size))) {}

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  std::size_t size() const { return static_cast<std::size_t>(m_.size()); }

  void step(std::span<S> var, std::span<const S> grad) {
    if (var.size() != size() || grad.size() != size()) throw ArgumentError("adam_step shape mismatch");
    for (S gval : grad)
      if (!std::isfinite(static_cast<double>(gval))) throw NumericError("non-finite gradient in adam_step", static_cast<long>(t_));
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double step = config_.lr;
    for (std::size_t i = 0; i < var.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double gd = static_cast<double>(grad[i]);
      const double m = b1 * static_cast<double>(m_[ii]) + (1.0 - b1) * gd;
      const double v = b2 * static_cast<double>(v_[ii]) + (1.0 - b2) * gd * gd;
      m_[ii] = static_cast<S>(m);
      v_[ii] = static_cast<S>(v);
      const double mhat = m / c1;
      const double vhat = v / c2;
      var[i] = static_cast<S>(static_cast<double>(var[i]) - step * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }

 private:
  AdamConfig config_{};
  std::uint64_t t_ = 0;
  Vector<S> m_;
  Vector<S> v_;
};

// One Adam state per parameter array of a network.
template <class S>
class NetworkOptimizer {
 public:
  NetworkOptimizer(const DenseNetwork<S>& net, AdamConfig config) {
    for (const auto& l : net.layers()) {
      weight_.emplace_back(static_cast<std::size_t>(l.weight.size()), config);
      bias_.emplace_back(static_cast<std::size_t>(l.bias.size()), config);
    }
  }

  void step(DenseNetwork<S>& net, const GradientRecord<S>& grads) {
    if (grads.weight.size() != weight_.size()) throw ArgumentError("gradient record does not match optimizer");
    for (std::size_t k = 0; k < weight_.size(); ++k) {
      auto& layer = net.mutable_layer(k);
      weight_[k].step(std::span<S>(layer.weight.data(), static_cast<std::size_t>(layer.weight.size())),
                      std::span<const S>(grads.weight[k].data(), static_cast<std::size_t>(grads.weight[k].size())));
      bias_[k].step(std::span<S>(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())),
                    std::span<const S>(grads.bias[k].data(), static_cast<std::size_t>(grads.bias[k].size())));
    }
  }

 private:
  std::vector<AdamState<S>> weight_;
  std::vector<AdamState<S>> bias_;
};

// SHA-256 over the little-endian f32 parameter payload.
std::string parameter_hash(const Network& net);

void save_weights(const Network& net, const std::filesystem::path& path);
Network load_weights(const std::filesystem::path& path);
std::string serialize_weights(const Network& net);
Network deserialize_weights(std::string_view bytes);

}  // namespace shapex::nn
