#include "aspers/core/network.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "aspers/error.hpp"
#include "aspers/simd/kernels.hpp"

namespace aspers {
namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU:
      return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity:
      break;
  }
  return z;
}

// d(act)/dz given the pre-activation and the activation value.
double activation_slope(Activation a, double z, double out) {
  switch (a) {
    case Activation::ReLU:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid:
      return out * (1.0 - out);
    case Activation::Identity:
      break;
  }
  return 1.0;
}

void check_finite_grad(std::span<const double> v, std::size_t layer) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError("non-finite gradient in layer " + std::to_string(layer));
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      break;
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void NetworkGrad::scale(double k) {
  for (auto& l : layers) {
    for (double& w : l.weights.values()) w *= k;
    for (double& b : l.bias) b *= k;
  }
  for (double& v : input.values()) v *= k;
}

void NetworkGrad::add_scaled(const NetworkGrad& other, double k) {
  if (other.layers.size() != layers.size())
    throw DimensionError("add_scaled: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& dst = layers[i];
    const auto& src = other.layers[i];
    if (src.weights.size() != dst.weights.size() ||
        src.bias.size() != dst.bias.size())
      throw DimensionError("add_scaled: shape mismatch in layer " +
                           std::to_string(i));
    simd::axpy(k, src.weights.values(), dst.weights.values());
    simd::axpy(k, src.bias, dst.bias);
  }
}

bool NetworkGrad::all_zero() const {
  for (const auto& l : layers) {
    for (double w : l.weights.values())
      if (w != 0.0) return false;
    for (double b : l.bias)
      if (b != 0.0) return false;
  }
  return true;
}

Mlp::Mlp() : id_(next_id()) {}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)), id_(next_id()) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.out_width())
      throw DimensionError("layer " + std::to_string(i) + ": bias length " +
                           std::to_string(l.bias.size()) + " != out width " +
                           std::to_string(l.out_width()));
    if (i > 0 && l.in_width() != layers_[i - 1].out_width())
      throw DimensionError("layer " + std::to_string(i) + ": input width " +
                           std::to_string(l.in_width()) + " != previous output " +
                           std::to_string(layers_[i - 1].out_width()));
  }
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), id_(next_id()) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    ++generation_;
  }
  return *this;
}

DenseLayer& Mlp::mutable_layer(std::size_t i) {
  ++generation_;
  return layers_.at(i);
}

std::size_t Mlp::input_width() const {
  return layers_.empty() ? 0 : layers_.front().in_width();
}

std::size_t Mlp::output_width() const {
  return layers_.empty() ? 0 : layers_.back().out_width();
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

NetworkGrad Mlp::zero_grad(std::size_t batch_rows) const {
  NetworkGrad g;
  g.layers.reserve(layers_.size());
  for (const auto& l : layers_)
    g.layers.push_back({Matrix(l.out_width(), l.in_width()),
                        std::vector<double>(l.out_width(), 0.0)});
  g.input = Matrix(batch_rows, input_width());
  return g;
}

Mlp make_mlp(std::size_t input_width, std::span<const LayerSpec> specs, Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_width;
  for (const auto& spec : specs) {
    const double limit =
        spec.activation == Activation::ReLU
            ? std::sqrt(6.0 / static_cast<double>(fan_in))
            : std::sqrt(6.0 / static_cast<double>(fan_in + spec.width));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(spec.width, fan_in),
                     std::vector<double>(spec.width, 0.0), spec.activation};
    for (double& w : layer.weights.values()) w = dist(rng);
    layers.push_back(std::move(layer));
    fan_in = spec.width;
  }
  return Mlp(std::move(layers));
}

ForwardResult forward(const Mlp& net, const Matrix& x) {
  if (net.depth() == 0) throw DimensionError("forward: empty network");
  if (x.cols() != net.input_width())
    throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                         " != network input width " +
                         std::to_string(net.input_width()));
  ForwardResult result;
  GradTape& tape = result.tape;
  tape.net_id_ = net.id();
  tape.generation_ = net.generation();
  tape.inputs_.reserve(net.depth());
  tape.pre_.reserve(net.depth());
  tape.activations_.reserve(net.depth());

  const Matrix* in = &x;
  for (const auto& layer : net.layers()) {
    Matrix pre(in->rows(), layer.out_width());
    Matrix out(in->rows(), layer.out_width());
    for (std::size_t i = 0; i < in->rows(); ++i) {
      const auto xi = in->row(i);
      for (std::size_t o = 0; o < layer.out_width(); ++o) {
        const double z = simd::dot(layer.weights.row(o), xi) + layer.bias[o];
        pre(i, o) = z;
        out(i, o) = activate(layer.activation, z);
      }
    }
    tape.inputs_.push_back(*in);
    tape.pre_.push_back(std::move(pre));
    tape.activations_.push_back(std::move(out));
    in = &tape.activations_.back();
  }
  result.output = tape.activations_.back();
  result.output.check_finite("forward output");
  tape.valid_ = true;
  return result;
}

Matrix predict(const Mlp& net, const Matrix& x) { return forward(net, x).output; }

NetworkGrad backward(const Mlp& net, GradTape& tape, const Matrix& output_grad) {
  if (!tape.valid_) throw StateError("backward: no matching forward pass recorded");
  if (tape.net_id_ != net.id() || tape.generation_ != net.generation())
    throw StateError("backward: tape is stale for this network");
  const Matrix& last = tape.activations_.back();
  if (output_grad.rows() != last.rows() || output_grad.cols() != last.cols())
    throw DimensionError("backward: output gradient shape mismatch");

  NetworkGrad grad = net.zero_grad();
  Matrix delta = output_grad;
  for (std::size_t li = net.depth(); li-- > 0;) {
    const DenseLayer& layer = net.layers()[li];
    const Matrix& in = tape.inputs_[li];
    const Matrix& pre = tape.pre_[li];
    const Matrix& out = tape.activations_[li];
    LayerGrad& lg = grad.layers[li];
    Matrix in_grad(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
      for (std::size_t o = 0; o < layer.out_width(); ++o) {
        const double dz =
            delta(i, o) * activation_slope(layer.activation, pre(i, o), out(i, o));
        if (dz == 0.0) continue;
        simd::axpy(dz, in.row(i), lg.weights.row(o));
        lg.bias[o] += dz;
        simd::axpy(dz, layer.weights.row(o), in_grad.row(i));
      }
    }
    delta = std::move(in_grad);
  }
  grad.input = std::move(delta);

  tape = GradTape{};
  return grad;
}

void sgd_step(Mlp& net, const NetworkGrad& grad, double learning_rate) {
  if (grad.layers.size() != net.depth())
    throw DimensionError("sgd_step: gradient has " +
                         std::to_string(grad.layers.size()) + " layers, network " +
                         std::to_string(net.depth()));
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layers()[i];
    if (grad.layers[i].weights.rows() != l.weights.rows() ||
        grad.layers[i].weights.cols() != l.weights.cols() ||
        grad.layers[i].bias.size() != l.bias.size())
      throw DimensionError("sgd_step: shape mismatch in layer " + std::to_string(i));
    check_finite_grad(grad.layers[i].weights.values(), i);
    check_finite_grad(grad.layers[i].bias, i);
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    DenseLayer& l = net.mutable_layer(i);
    simd::axpy(-learning_rate, grad.layers[i].weights.values(), l.weights.values());
    simd::axpy(-learning_rate, grad.layers[i].bias, l.bias);
  }
}

Optimizer::Optimizer(OptimizerConfig config, double learning_rate)
    : config_(config), lr_(learning_rate) {}

void Optimizer::step(Mlp& net, const NetworkGrad& grad) {
  if (config_.kind == OptimizerConfig::Kind::Sgd) {
    sgd_step(net, grad, lr_);
    return;
  }
  // Flatten per layer: weights followed by bias.
  if (first_.empty()) {
    for (const auto& l : net.layers()) {
      first_.emplace_back(l.weights.size() + l.bias.size(), 0.0);
      second_.emplace_back(l.weights.size() + l.bias.size(), 0.0);
    }
  }
  NetworkGrad update = net.zero_grad();
  ++steps_;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto gw = grad.layers[i].weights.values();
    const auto& gb = grad.layers[i].bias;
    auto uw = update.layers[i].weights.values();
    auto& ub = update.layers[i].bias;
    auto& m = first_[i];
    auto& v = second_[i];
    const std::size_t nw = gw.size();
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double g = k < nw ? gw[k] : gb[k - nw];
      double u;
      if (config_.kind == OptimizerConfig::Kind::Momentum) {
        m[k] = config_.momentum * m[k] + g;
        u = m[k];
      } else {
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[k] / (1.0 - std::pow(config_.beta1, double(steps_)));
        const double vhat = v[k] / (1.0 - std::pow(config_.beta2, double(steps_)));
        u = mhat / (std::sqrt(vhat) + config_.epsilon);
      }
      if (k < nw)
        uw[k] = u;
      else
        ub[k - nw] = u;
    }
  }
  sgd_step(net, update, lr_);
}

}  // namespace aspers
