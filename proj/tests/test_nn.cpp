#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <set>
#include <vector>

#include "slsr/common.hpp"
#include "slsr/nn.hpp"
#include "slsr/rng.hpp"

using namespace slsr;
using namespace slsr::nn;

namespace {

double half_sq(const Tensor& t) {
  double l = 0.0;
  for (double v : t.data) l += 0.5 * v * v;
  return l;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-8, std::fabs(a) + std::fabs(b));
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Central finite differences of L = 0.5*||net(x)||^2 against the analytic
// backward pass, over sampled parameter entries and input entries.
void check_gradients(Network& net, const Tensor& x, bool train, double tol,
                     int64_t max_checks, Rng& rng) {
  net.zero_grad();
  Tensor out = net.forward(x, train);
  Tensor dy = out;  // dL/dout for the half-squared loss
  Tensor dx = net.backward(dy);

  const double h = 1e-5;
  const int64_t np = net.param_count();
  std::set<int64_t> picks;
  while (static_cast<int64_t>(picks.size()) < std::min(max_checks, np))
    picks.insert(static_cast<int64_t>(rng.index(static_cast<uint64_t>(np))));
  // Hybrid tolerance: a tight relative bound, with an absolute escape hatch
  // for gradients that are analytically zero (e.g. conv bias under batch
  // norm) where finite differences only produce rounding noise.
  auto close = [&](double ana, double num) {
    return std::fabs(ana - num) < 1e-7 || rel_err(ana, num) < tol;
  };
  for (int64_t i : picks) {
    const double v0 = net.get_param(i);
    net.set_param(i, v0 + h);
    const double lp = half_sq(net.forward(x, train));
    net.set_param(i, v0 - h);
    const double lm = half_sq(net.forward(x, train));
    net.set_param(i, v0);
    const double num = (lp - lm) / (2 * h);
    CHECK(close(net.get_grad(i), num));
  }

  std::set<int64_t> xpicks;
  const int64_t nx = x.numel();
  while (static_cast<int64_t>(xpicks.size()) < std::min(max_checks, nx))
    xpicks.insert(static_cast<int64_t>(rng.index(static_cast<uint64_t>(nx))));
  Tensor xp = x;
  for (int64_t i : xpicks) {
    const double v0 = xp.data[static_cast<size_t>(i)];
    xp.data[static_cast<size_t>(i)] = v0 + h;
    const double lp = half_sq(net.forward(xp, train));
    xp.data[static_cast<size_t>(i)] = v0 - h;
    const double lm = half_sq(net.forward(xp, train));
    xp.data[static_cast<size_t>(i)] = v0;
    const double num = (lp - lm) / (2 * h);
    CHECK(close(dx.data[static_cast<size_t>(i)], num));
  }
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("linear layer gradients match finite differences") {
  Rng rng(101);
  Network net;
  auto lin = std::make_unique<Linear>("fc", 5, 4);
  lin->init_xavier(rng);
  net.add(std::move(lin));
  check_gradients(net, random_tensor({3, 5}, rng), false, 1e-5, 40, rng);
}

TEST_CASE("conv layer gradients match finite differences") {
  Rng rng(102);
  Network net;
  auto conv = std::make_unique<Conv2d>("c1", 2, 3, 3, 1, 1);
  conv->init_kaiming(rng);
  net.add(std::move(conv));
  check_gradients(net, random_tensor({2, 2, 6, 6}, rng), false, 1e-5, 48, rng);
}

TEST_CASE("strided conv gradients match finite differences") {
  Rng rng(103);
  Network net;
  auto conv = std::make_unique<Conv2d>("c1", 3, 4, 5, 2, 2);
  conv->init_normal(rng, 0.05);
  net.add(std::move(conv));
  check_gradients(net, random_tensor({2, 3, 8, 8}, rng), false, 1e-5, 48, rng);
}

TEST_CASE("transposed conv doubles spatial size with output padding") {
  Rng rng(104);
  ConvTranspose2d up("g1", 4, 2, 5, 2, 2, 1);
  up.init_normal(rng, 0.05);
  Tensor x = random_tensor({1, 4, 6, 6}, rng);
  Tensor y = up.forward(x, true);
  CHECK(y.shape == std::vector<int64_t>{1, 2, 12, 12});
}

TEST_CASE("transposed conv gradients match finite differences") {
  Rng rng(105);
  Network net;
  auto up = std::make_unique<ConvTranspose2d>("g1", 3, 2, 5, 2, 2, 1);
  up->init_normal(rng, 0.05);
  net.add(std::move(up));
  check_gradients(net, random_tensor({2, 3, 4, 4}, rng), false, 1e-5, 48, rng);
}

TEST_CASE("transposed conv is the adjoint of the matching conv") {
  // <convT(x), y> == <x, conv_backward-style correlation> is implied when
  // convT with zero bias equals conv's input gradient; verify against
  // Conv2d::backward on identical weights.
  Rng rng(106);
  const int64_t cin = 3, cout = 2, k = 4, s = 2, p = 1;
  Conv2d conv("c", cout, cin, k, s, p);  // maps (cout, 8, 8) -> (cin, 4, 4)
  ConvTranspose2d up("u", cin, cout, k, s, p);
  for (size_t i = 0; i < conv.weight.value.data.size(); ++i)
    conv.weight.value.data[i] = rng.normal();
  up.weight.value.data = conv.weight.value.data;  // both are (cin, cout*k*k) here

  Tensor x = random_tensor({2, cin, 4, 4}, rng);
  Tensor dummy = Tensor({2, cout, 8, 8});
  conv.forward(dummy, true);  // caches shapes for backward
  Tensor via_conv = conv.backward(x);
  Tensor via_up = up.forward(x, true);  // bias is zero-initialised
  REQUIRE(via_conv.shape == via_up.shape);
  for (size_t i = 0; i < via_up.data.size(); ++i)
    CHECK(via_conv.data[i] == doctest::Approx(via_up.data[i]).epsilon(1e-10));
}

TEST_CASE("batch norm gradients match finite differences in both modes") {
  // A tanh follows the norm so the loss is not an affine function of xhat
  // (for a bare norm layer the half-squared loss has exactly zero input
  // gradient, which checks nothing).
  Rng rng(107);
  Network net;
  net.add(std::make_unique<BatchNorm2d>("bn", 3));
  net.add(std::make_unique<Tanh>("t"));
  for (int64_t i = 0; i < net.param_count(); ++i)
    net.set_param(i, net.get_param(i) + 0.1 * rng.normal());
  Tensor x = random_tensor({4, 3, 5, 5}, rng);
  check_gradients(net, x, true, 1e-5, 30, rng);
  net.forward(x, true);  // populate running stats before eval-mode checks
  check_gradients(net, x, false, 1e-5, 30, rng);
}

TEST_CASE("activation and pooling gradients match finite differences") {
  Rng rng(108);
  SUBCASE("relu") {
    Network net;
    net.add(std::make_unique<ReLU>("r"));
    check_gradients(net, random_tensor({2, 3, 4, 4}, rng), false, 1e-4, 40, rng);
  }
  SUBCASE("leaky relu") {
    Network net;
    net.add(std::make_unique<LeakyReLU>("l", 0.2));
    check_gradients(net, random_tensor({2, 3, 4, 4}, rng), false, 1e-4, 40, rng);
  }
  SUBCASE("tanh") {
    Network net;
    net.add(std::make_unique<Tanh>("t"));
    check_gradients(net, random_tensor({2, 8}, rng), false, 1e-5, 16, rng);
  }
  SUBCASE("max pool") {
    Network net;
    net.add(std::make_unique<MaxPool2d>("p", 2, 2));
    check_gradients(net, random_tensor({2, 2, 6, 6}, rng), false, 1e-5, 40, rng);
  }
  SUBCASE("global average pool") {
    Network net;
    net.add(std::make_unique<GlobalAvgPool>("g"));
    check_gradients(net, random_tensor({2, 3, 4, 4}, rng), false, 1e-5, 40, rng);
  }
}

TEST_CASE("residual block gradients match finite differences") {
  Rng rng(109);
  std::vector<std::unique_ptr<Layer>> body;
  auto c1 = std::make_unique<Conv2d>("r.c1", 3, 3, 3, 1, 1);
  c1->init_normal(rng, 0.08);
  body.push_back(std::move(c1));
  body.push_back(std::make_unique<BatchNorm2d>("r.bn1", 3));
  body.push_back(std::make_unique<ReLU>("r.relu"));
  auto c2 = std::make_unique<Conv2d>("r.c2", 3, 3, 3, 1, 1);
  c2->init_normal(rng, 0.08);
  body.push_back(std::move(c2));
  std::vector<std::unique_ptr<Layer>> shortcut;  // identity
  Network net;
  net.add(std::make_unique<Residual>("r", std::move(body), std::move(shortcut)));
  check_gradients(net, random_tensor({2, 3, 5, 5}, rng), true, 1e-5, 40, rng);
}

TEST_CASE("stacked network end-to-end gradients") {
  Rng rng(110);
  Network net;
  auto c = std::make_unique<Conv2d>("c", 1, 4, 3, 1, 1);
  c->init_kaiming(rng);
  net.add(std::move(c));
  net.add(std::make_unique<BatchNorm2d>("bn", 4));
  net.add(std::make_unique<ReLU>("relu"));
  net.add(std::make_unique<MaxPool2d>("pool", 2, 2));
  net.add(std::make_unique<GlobalAvgPool>("gap"));
  auto fc = std::make_unique<Linear>("fc", 4, 3);
  fc->init_xavier(rng);
  net.add(std::move(fc));
  check_gradients(net, random_tensor({3, 1, 8, 8}, rng), true, 1e-5, 60, rng);
}

TEST_CASE("sgd momentum follows the scalar recursion") {
  // v <- mu*v + (g + wd*w); w <- w - lr*v, checked against a hand-run of the
  // same recursion on a single weight.
  Param p("w", {1});
  p.value.data[0] = 2.0;
  SgdMomentum opt(0.9, 0.1);
  double w = 2.0, v = 0.0;
  const double lr = 0.05;
  for (int step = 0; step < 5; ++step) {
    const double g = 0.3 * w;  // any deterministic pseudo-gradient
    p.grad.data[0] = g;
    opt.step({&p}, lr);
    v = 0.9 * v + (g + 0.1 * w);
    w -= lr * v;
    CHECK(p.value.data[0] == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("adam matches the reference update on a quadratic") {
  Param p("w", {1});
  p.value.data[0] = 1.0;
  Adam opt(0.01, 0.9);
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 8; ++t) {
    const double g = 2.0 * w;
    p.grad.data[0] = g;
    opt.step({&p});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.value.data[0] == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round-trips parameters and running stats") {
  Rng rng(111);
  Network net;
  auto c = std::make_unique<Conv2d>("c", 2, 3, 3, 1, 1);
  c->init_kaiming(rng);
  net.add(std::move(c));
  net.add(std::make_unique<BatchNorm2d>("bn", 3));
  net.forward(random_tensor({4, 2, 5, 5}, rng), true);  // move running stats

  const auto path = (std::filesystem::temp_directory_path() / "slsr_ckpt_test.bin").string();
  save_checkpoint(path, R"({"kind":"test"})", net.all_segments());

  Network net2;
  auto c2 = std::make_unique<Conv2d>("c", 2, 3, 3, 1, 1);
  net2.add(std::move(c2));
  net2.add(std::make_unique<BatchNorm2d>("bn", 3));
  const Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config_json == R"({"kind":"test"})");
  assign_segments(ckpt, net2.all_segments());

  auto a = net.all_segments();
  auto b = net2.all_segments();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    for (size_t j = 0; j < a[i]->value.data.size(); ++j)
      CHECK(b[i]->value.data[j] ==
            doctest::Approx(static_cast<float>(a[i]->value.data[j])).epsilon(1e-7));
  }
  std::filesystem::remove(path);
}

TEST_CASE("loading a checkpoint with a missing segment fails") {
  Rng rng(112);
  Network net;
  auto lin = std::make_unique<Linear>("fc", 3, 2);
  lin->init_xavier(rng);
  net.add(std::move(lin));
  const auto path = (std::filesystem::temp_directory_path() / "slsr_ckpt_miss.bin").string();
  save_checkpoint(path, "{}", net.all_segments());

  Network bigger;
  bigger.add(std::make_unique<Linear>("fc", 3, 2));
  bigger.add(std::make_unique<Linear>("fc2", 2, 2));
  const Checkpoint ckpt = load_checkpoint(path);
  CHECK_THROWS_AS(assign_segments(ckpt, bigger.all_segments()), slsr::DataError);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite activations are reported with the layer name") {
  Network net;
  net.add(std::make_unique<Linear>("exploder", 2, 2));
  net.layer(0);  // keep layer alive; set a weight to inf
  for (int64_t i = 0; i < net.param_count(); ++i) net.set_param(i, 0.0);
  net.set_param(0, std::numeric_limits<double>::infinity());
  Tensor x({1, 2});
  x.data = {1.0, 1.0};
  try {
    net.forward(x, false);
    FAIL("expected a numeric error");
  } catch (const slsr::NumericError& e) {
    CHECK(std::string(e.what()).find("exploder") != std::string::npos);
  }
}

TEST_SUITE_END();
