#include <doctest.h>

#include <vector>

#include "hitl/net.hpp"

using namespace hitl;
using namespace hitl::rl;

namespace {

Eigen::MatrixXd random_inputs(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.5, 1.5);
  return m;
}

// Weighted squares, so every output has a distinct gradient.
LossHead quadratic_head() {
  return [](const Eigen::MatrixXd& out, Eigen::MatrixXd& d_out) {
    double loss = 0.0;
    d_out.resize(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double w = 1.0 + 0.5 * static_cast<double>(i) + 0.1 * static_cast<double>(j);
        loss += w * (out(i, j) - 0.3) * (out(i, j) - 0.3);
        d_out(i, j) = 2.0 * w * (out(i, j) - 0.3);
      }
    return loss;
  };
}

double loss_of(const Net& net, const Eigen::MatrixXd& in, const LossHead& head) {
  Eigen::MatrixXd d;
  return head(net.forward(in), d);
}

// Max relative error of the analytic gradient against central differences.
double fd_error(Net net, const Eigen::MatrixXd& in, const LossHead& head, double h = 1e-5) {
  const GradResult g = grad(net, in, head);
  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto check = [&](double& p, double analytic) {
      const double keep = p;
      p = keep + h;
      const double up = loss_of(net, in, head);
      p = keep - h;
      const double down = loss_of(net, in, head);
      p = keep;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    Layer& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) check(layer.w(i, j), g.grads[l].w(i, j));
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) check(layer.b(i), g.grads[l].b(i));
  }
  return worst;
}

}  // namespace

TEST_CASE("zero weights give zero raw output") {
  const Net net({2, 8, 8, 2}, Head::kActor);
  Rng rng(1);
  const Eigen::MatrixXd raw = net.forward_raw(random_inputs(2, 5, rng));
  CHECK(raw.cwiseAbs().maxCoeff() == 0.0);
  // pi*tanh(0) = 0 and sigmoid(0) = 0.5
  const Eigen::MatrixXd out = net.forward(random_inputs(2, 1, rng));
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 0.5);
}

TEST_CASE("identity layer") {
  Net net({3, 3}, Head::kLinear);
  net.layers()[0].w = Eigen::MatrixXd::Identity(3, 3);
  const std::vector<double> in{0.5, -2.0, 7.0};
  const Eigen::VectorXd out = net.forward(in);
  for (int i = 0; i < 3; ++i) CHECK(out(i) == in[i]);
}

TEST_CASE("shape mismatch rejected") {
  const Net net({2, 4, 1}, Head::kLinear);
  CHECK_THROWS(net.forward(Eigen::MatrixXd::Zero(3, 1)));
  const std::vector<double> in{1.0};
  CHECK_THROWS(net.forward(in));
}

TEST_CASE("pinned forward value") {
  Rng rng(42);
  const Net net = Net::glorot({2, 4, 3, 2}, Head::kActor, rng);
  Eigen::MatrixXd x(2, 1);
  x << 0.3, -0.7;
  const Eigen::MatrixXd out = net.forward(x);

  // Independent evaluation with plain loops.
  std::vector<double> h{0.3, -0.7};
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Layer& L = net.layers()[l];
    std::vector<double> next(static_cast<std::size_t>(L.w.rows()));
    for (Eigen::Index i = 0; i < L.w.rows(); ++i) {
      double z = L.b(i);
      for (Eigen::Index j = 0; j < L.w.cols(); ++j) z += L.w(i, j) * h[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = l + 1 < net.layers().size() ? std::tanh(z) : z;
    }
    h = next;
  }
  CHECK(out(0, 0) == doctest::Approx(kPi * std::tanh(h[0])).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-h[1]))).epsilon(1e-12));

  // Golden values from the first verified run.
  CHECK(out(0, 0) == doctest::Approx(-0.99714907140231568).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(0.28774846094231038).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences") {
  Rng rng(7);
  const LossHead head = quadratic_head();
  SUBCASE("actor shape") {
    const Net net = Net::glorot({2, 64, 64, 2}, Head::kActor, rng);
    CHECK(fd_error(net, random_inputs(2, 6, rng), head) < 1e-4);
  }
  SUBCASE("critic shape") {
    const Net net = Net::glorot({4, 64, 64, 1}, Head::kLinear, rng);
    CHECK(fd_error(net, random_inputs(4, 6, rng), head) < 1e-4);
  }
  SUBCASE("small odd shape") {
    const Net net = Net::glorot({3, 5, 2, 4}, Head::kLinear, rng);
    CHECK(fd_error(net, random_inputs(3, 3, rng), head) < 1e-4);
  }
}

TEST_CASE("input gradient matches central differences") {
  Rng rng(17);
  const Net net = Net::glorot({4, 16, 1}, Head::kLinear, rng);
  Eigen::MatrixXd in = random_inputs(4, 3, rng);
  Tape tape;
  const Eigen::MatrixXd out = net.forward(in, &tape);
  Eigen::MatrixXd d_in;
  net.backward(tape, Eigen::MatrixXd::Ones(1, 3), &d_in);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < in.rows(); ++i)
    for (Eigen::Index j = 0; j < in.cols(); ++j) {
      Eigen::MatrixXd up = in, down = in;
      up(i, j) += h;
      down(i, j) -= h;
      const double numeric = (net.forward(up).sum() - net.forward(down).sum()) / (2 * h);
      CHECK(d_in(i, j) == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("constant loss has zero gradient") {
  Rng rng(3);
  const Net net = Net::glorot({2, 8, 2}, Head::kActor, rng);
  const GradResult g = grad(net, random_inputs(2, 4, rng), [](const Eigen::MatrixXd& out, Eigen::MatrixXd& d) {
    d = Eigen::MatrixXd::Zero(out.rows(), out.cols());
    return 5.0;
  });
  CHECK(g.loss == 5.0);
  CHECK(max_abs(g.grads) == 0.0);
}

TEST_CASE("gradient is linear in the loss") {
  Rng rng(4);
  const Net net = Net::glorot({2, 8, 2}, Head::kActor, rng);
  const Eigen::MatrixXd in = random_inputs(2, 4, rng);
  const LossHead head = quadratic_head();
  const GradResult g1 = grad(net, in, head);
  const GradResult g3 = grad(net, in, [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& d) {
    const double l = head(out, d);
    d *= 3.0;
    return 3.0 * l;
  });
  Gradient diff = g3.grads;
  add_scaled(diff, g1.grads, -3.0);
  CHECK(max_abs(diff) < 1e-12 * std::max(1.0, max_abs(g3.grads)));
}

TEST_CASE("descend and blend") {
  Rng rng(5);
  Net a = Net::glorot({2, 3, 1}, Head::kLinear, rng);
  const Net b = Net::glorot({2, 3, 1}, Head::kLinear, rng);
  Net c = a;
  c.blend_toward(b, 1.0);
  CHECK(c.layers()[0].w == b.layers()[0].w);
  Gradient g = a.zero_gradient();
  g[0].b.setOnes();
  const double before = a.layers()[0].b(0);
  a.descend(g, 0.1);
  CHECK(a.layers()[0].b(0) == doctest::Approx(before - 0.1));
  CHECK(a.all_finite());
  CHECK(a.parameter_count() == 2 * 3 + 3 + 3 + 1);
}

TEST_CASE("actor head stays in range") {
  Rng rng(6);
  Net net = Net::glorot({2, 8, 2}, Head::kActor, rng);
  for (auto& l : net.layers()) l.w *= 50.0;
  const Eigen::MatrixXd out = net.forward(random_inputs(2, 200, rng) * 100.0);
  CHECK(out.row(0).cwiseAbs().maxCoeff() <= kPi);
  CHECK(out.row(1).minCoeff() >= 0.0);
  CHECK(out.row(1).maxCoeff() <= 1.0);
}
