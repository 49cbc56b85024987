#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hitl/common.hpp"

namespace hitl::rl {

// Output squashing applied after the last affine layer.
//   kLinear: identity (critic).
//   kActor:  row 0 -> pi * tanh(z) (movement angle), row 1 -> sigmoid(z)
//            (speed ratio).
enum class Head { kLinear, kActor };

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

// Same shape as a network's parameters.
using Gradient = std::vector<Layer>;

void scale(Gradient& g, double s);
void add_scaled(Gradient& into, const Gradient& g, double s);
double max_abs(const Gradient& g);

// Values recorded by a forward pass for the backward pass.
struct Tape {
  std::vector<Eigen::MatrixXd> activations;  // input, then each hidden output
  Eigen::MatrixXd raw;                       // pre-squash output
  Eigen::MatrixXd out;                       // squashed output
};

// Feed-forward network with tanh hidden units. Batched calls take one sample
// per column.
class Net {
 public:
  Net() = default;
  // All parameters zero.
  Net(std::vector<int> layer_sizes, Head head);
  // Glorot-uniform weights, zero biases.
  static Net glorot(std::vector<int> layer_sizes, Head head, Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Head head() const { return head_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;
  bool all_finite() const;

  Eigen::MatrixXd forward_raw(const Eigen::MatrixXd& inputs, Tape* tape = nullptr) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape* tape = nullptr) const;
  Eigen::VectorXd forward(std::span<const double> input) const;

  // Reverse pass: d_out is dLoss/d(squashed output). Optionally returns
  // dLoss/d(input) for chaining networks.
  Gradient backward(const Tape& tape, const Eigen::MatrixXd& d_out,
                    Eigen::MatrixXd* d_input = nullptr) const;

  // parameters <- parameters - step * g
  void descend(const Gradient& g, double step);
  // parameters <- (1 - tau) * parameters + tau * other
  void blend_toward(const Net& other, double tau);

  Gradient zero_gradient() const;

 private:
  void check_input(const Eigen::MatrixXd& inputs) const;

  std::vector<int> sizes_;
  Head head_ = Head::kLinear;
  std::vector<Layer> layers_;
};

Eigen::MatrixXd squash(Head head, const Eigen::MatrixXd& raw);
// Elementwise derivative of squash at raw.
Eigen::MatrixXd squash_derivative(Head head, const Eigen::MatrixXd& raw);

// A scalar loss of the network output; writes dLoss/d(output) into d_out.
using LossHead = std::function<double(const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out)>;

struct GradResult {
  double loss = 0.0;
  Gradient grads;
};

GradResult grad(const Net& net, const Eigen::MatrixXd& inputs, const LossHead& loss);

}  // namespace hitl::rl
