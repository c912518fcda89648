#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "aspers/core/matrix.hpp"
#include "aspers/rng.hpp"

namespace aspers {

enum class Activation { ReLU, Identity, Sigmoid };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct DenseLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  std::size_t in_width() const { return weights.cols(); }
  std::size_t out_width() const { return weights.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerGrad {
  Matrix weights;
  std::vector<double> bias;
};

struct NetworkGrad {
  std::vector<LayerGrad> layers;
  Matrix input;  // d(loss)/d(input), one row per sample

  void scale(double k);
  // this += k * other (parameter gradients only).
  void add_scaled(const NetworkGrad& other, double k);
  bool all_zero() const;
};

struct LayerSpec {
  std::size_t width;
  Activation activation;
};

/// A stack of dense layers. Every mutable access bumps the generation
/// counter so that a tape recorded before an update is detected as stale.
class Mlp {
 public:
  Mlp();
  explicit Mlp(std::vector<DenseLayer> layers);
  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  std::span<const DenseLayer> layers() const { return layers_; }
  DenseLayer& mutable_layer(std::size_t i);
  std::size_t depth() const { return layers_.size(); }
  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const;

  std::uint64_t id() const { return id_; }
  std::uint64_t generation() const { return generation_; }

  NetworkGrad zero_grad(std::size_t batch_rows = 0) const;

  // Parameter-wise equality; ids and generations are ignored.
  bool same_parameters(const Mlp& other) const { return layers_ == other.layers_; }

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t id_;
  std::uint64_t generation_ = 0;
};

/// He-uniform weights for ReLU layers, Xavier-uniform otherwise; zero bias.
Mlp make_mlp(std::size_t input_width, std::span<const LayerSpec> specs, Rng& rng);

struct ForwardResult;

/// Activations cached by one forward pass. Consumed by backward.
class GradTape {
 public:
  bool valid() const { return valid_; }

 private:
  friend ForwardResult forward(const Mlp&, const Matrix&);
  friend NetworkGrad backward(const Mlp&, GradTape&, const Matrix&);

  std::uint64_t net_id_ = 0;
  std::uint64_t generation_ = 0;
  bool valid_ = false;
  std::vector<Matrix> inputs_;       // input to each layer
  std::vector<Matrix> activations_;  // output of each layer
  std::vector<Matrix> pre_;          // pre-activation of each layer
};

struct ForwardResult {
  Matrix output;
  GradTape tape;
};

ForwardResult forward(const Mlp& net, const Matrix& x);

/// Forward pass without recording a tape.
Matrix predict(const Mlp& net, const Matrix& x);

/// Reverse pass. Throws StateError when the tape is missing, already
/// consumed, or was recorded against other parameters.
NetworkGrad backward(const Mlp& net, GradTape& tape, const Matrix& output_grad);

/// p <- p - lr * g. Throws NumericError naming the first layer whose gradient
/// is non-finite; parameters are untouched in that case.
void sgd_step(Mlp& net, const NetworkGrad& grad, double learning_rate);

struct OptimizerConfig {
  enum class Kind { Sgd, Momentum, Adam };
  Kind kind = Kind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Stateful optimizer bound to one network's shapes. Sgd delegates to
/// sgd_step with no state.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, double learning_rate);
  void step(Mlp& net, const NetworkGrad& grad);
  double learning_rate() const { return lr_; }

 private:
  OptimizerConfig config_;
  double lr_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace aspers
