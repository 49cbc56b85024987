#include "hitl/net.hpp"

#include <stdexcept>
#include <string>

namespace hitl::rl {

void scale(Gradient& g, double s) {
  for (Layer& l : g) {
    l.w *= s;
    l.b *= s;
  }
}

void add_scaled(Gradient& into, const Gradient& g, double s) {
  if (into.size() != g.size()) throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) {
    into[i].w += s * g[i].w;
    into[i].b += s * g[i].b;
  }
}

double max_abs(const Gradient& g) {
  double m = 0.0;
  for (const Layer& l : g) {
    if (l.w.size() > 0) m = std::max(m, l.w.cwiseAbs().maxCoeff());
    if (l.b.size() > 0) m = std::max(m, l.b.cwiseAbs().maxCoeff());
  }
  return m;
}

Net::Net(std::vector<int> layer_sizes, Head head) : sizes_(std::move(layer_sizes)), head_(head) {
  if (sizes_.size() < 2) throw std::invalid_argument("Net: need at least input and output sizes");
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("Net: layer sizes must be positive");
  }
  if (head_ == Head::kActor && sizes_.back() != 2) {
    throw std::invalid_argument("Net: actor head needs exactly 2 outputs");
  }
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    layers_.push_back(Layer{Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]),
                            Eigen::VectorXd::Zero(sizes_[i + 1])});
  }
}

Net Net::glorot(std::vector<int> layer_sizes, Head head, Rng& rng) {
  Net net(std::move(layer_sizes), head);
  for (Layer& l : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.w.rows() + l.w.cols()));
    for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = rng.uniform(-limit, limit);
    }
  }
  return net;
}

std::size_t Net::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

bool Net::all_finite() const {
  for (const Layer& l : layers_) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

void Net::check_input(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty()) throw std::logic_error("Net: empty network");
  if (inputs.rows() != sizes_.front()) {
    throw std::invalid_argument("Net: input has " + std::to_string(inputs.rows()) +
                                " rows, expected " + std::to_string(sizes_.front()));
  }
}

Eigen::MatrixXd Net::forward_raw(const Eigen::MatrixXd& inputs, Tape* tape) const {
  check_input(inputs);
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(inputs);
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].w * a;
    z.colwise() += layers_[i].b;
    if (i + 1 == layers_.size()) {
      if (tape) tape->raw = z;
      return z;
    }
    a = z.array().tanh().matrix();
    if (tape) tape->activations.push_back(a);
  }
  return a;
}

Eigen::MatrixXd Net::forward(const Eigen::MatrixXd& inputs, Tape* tape) const {
  Eigen::MatrixXd out = squash(head_, forward_raw(inputs, tape));
  if (tape) tape->out = out;
  return out;
}

Eigen::VectorXd Net::forward(std::span<const double> input) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input.size()), 1);
  for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
  return forward(x).col(0);
}

Gradient Net::backward(const Tape& tape, const Eigen::MatrixXd& d_out, Eigen::MatrixXd* d_input) const {
  if (tape.activations.size() != layers_.size()) throw std::logic_error("Net::backward: stale tape");
  if (d_out.rows() != tape.raw.rows() || d_out.cols() != tape.raw.cols()) {
    throw std::invalid_argument("Net::backward: d_out shape mismatch");
  }
  Gradient g(layers_.size());
  Eigen::MatrixXd delta = d_out.cwiseProduct(squash_derivative(head_, tape.raw));
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Eigen::MatrixXd& a_in = tape.activations[k];
    g[k].w = delta * a_in.transpose();
    g[k].b = delta.rowwise().sum();
    Eigen::MatrixXd d_a = layers_[k].w.transpose() * delta;
    if (k == 0) {
      if (d_input) *d_input = std::move(d_a);
      break;
    }
    delta = d_a.cwiseProduct((1.0 - a_in.array().square()).matrix());
  }
  return g;
}

void Net::descend(const Gradient& g, double step) {
  if (g.size() != layers_.size()) throw std::invalid_argument("Net::descend: shape mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].w -= step * g[i].w;
    layers_[i].b -= step * g[i].b;
  }
}

void Net::blend_toward(const Net& other, double tau) {
  if (other.sizes_ != sizes_) throw std::invalid_argument("Net::blend_toward: shape mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].w = (1.0 - tau) * layers_[i].w + tau * other.layers_[i].w;
    layers_[i].b = (1.0 - tau) * layers_[i].b + tau * other.layers_[i].b;
  }
}

Gradient Net::zero_gradient() const {
  Gradient g;
  g.reserve(layers_.size());
  for (const Layer& l : layers_) {
    g.push_back(Layer{Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return g;
}

Eigen::MatrixXd squash(Head head, const Eigen::MatrixXd& raw) {
  if (head == Head::kLinear) return raw;
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  out.row(0) = kPi * raw.row(0).array().tanh();
  out.row(1) = (1.0 / (1.0 + (-raw.row(1).array()).exp()));
  return out;
}

Eigen::MatrixXd squash_derivative(Head head, const Eigen::MatrixXd& raw) {
  if (head == Head::kLinear) return Eigen::MatrixXd::Ones(raw.rows(), raw.cols());
  Eigen::MatrixXd d(raw.rows(), raw.cols());
  const Eigen::ArrayXXd t = raw.row(0).array().tanh();
  d.row(0) = kPi * (1.0 - t.square());
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-raw.row(1).array()).exp());
  d.row(1) = s * (1.0 - s);
  return d;
}

GradResult grad(const Net& net, const Eigen::MatrixXd& inputs, const LossHead& loss) {
  Tape tape;
  const Eigen::MatrixXd out = net.forward(inputs, &tape);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  GradResult r;
  r.loss = loss(out, d_out);
  r.grads = net.backward(tape, d_out);
  return r;
}

}  // namespace hitl::rl
