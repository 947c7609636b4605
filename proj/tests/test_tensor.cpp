#include <doctest.h>

#include <vector>

#include "slsr/rng.hpp"
#include "slsr/tensor.hpp"

using namespace slsr;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv_out_dim covers stride and padding") {
  CHECK(conv_out_dim(32, 5, 2, 2) == 16);
  CHECK(conv_out_dim(224, 7, 2, 3) == 112);
  CHECK(conv_out_dim(4, 3, 1, 0) == 2);
  CHECK(conv_out_dim(4, 3, 1, 1) == 4);
}

TEST_CASE("im2col lays out a 1-channel 3x3 image with k=2 s=1 p=0") {
  // image: 1 2 3 / 4 5 6 / 7 8 9; four 2x2 patches in row-major patch order.
  std::vector<double> img = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const int64_t oh = conv_out_dim(3, 2, 1, 0);
  const int64_t ow = conv_out_dim(3, 2, 1, 0);
  std::vector<double> cols(static_cast<size_t>(4 * oh * ow), 0.0);
  im2col(img.data(), 1, 3, 3, 2, 1, 0, cols.data(), oh * ow);
  // Row r of the matrix holds kernel offset r across all patches.
  const std::vector<double> expected = {
      1, 2, 4, 5,   // offset (0,0)
      2, 3, 5, 6,   // offset (0,1)
      4, 5, 7, 8,   // offset (1,0)
      5, 6, 8, 9};  // offset (1,1)
  CHECK(cols == expected);
}

TEST_CASE("im2col zero-pads out-of-bounds taps") {
  std::vector<double> img = {1, 2, 3, 4};  // 2x2
  const int64_t oh = conv_out_dim(2, 3, 1, 1);
  CHECK(oh == 2);
  std::vector<double> cols(static_cast<size_t>(9 * 4), -1.0);
  im2col(img.data(), 1, 2, 2, 3, 1, 1, cols.data(), 4);
  // Centre tap (offset (1,1)) sees the raw image.
  CHECK(cols[4 * 4 + 0] == 1);
  CHECK(cols[4 * 4 + 1] == 2);
  CHECK(cols[4 * 4 + 2] == 3);
  CHECK(cols[4 * 4 + 3] == 4);
  // Top-left tap of the first patch falls outside -> zero.
  CHECK(cols[0] == 0);
}

TEST_CASE("col2im is the adjoint of im2col") {
  // <im2col(x), y> == <x, col2im(y)> for random x, y pins scatter/gather
  // consistency across strides, padding and channels.
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t c = 1 + static_cast<int64_t>(rng.index(3));
    const int64_t h = 4 + static_cast<int64_t>(rng.index(6));
    const int64_t w = 4 + static_cast<int64_t>(rng.index(6));
    const int64_t k = 2 + static_cast<int64_t>(rng.index(3));
    const int64_t s = 1 + static_cast<int64_t>(rng.index(2));
    const int64_t p = static_cast<int64_t>(rng.index(2));
    const int64_t oh = conv_out_dim(h, k, s, p);
    const int64_t ow = conv_out_dim(w, k, s, p);
    if (oh <= 0 || ow <= 0) continue;

    std::vector<double> x(static_cast<size_t>(c * h * w));
    for (auto& v : x) v = rng.normal();
    std::vector<double> y(static_cast<size_t>(c * k * k * oh * ow));
    for (auto& v : y) v = rng.normal();

    std::vector<double> cx(y.size(), 0.0);
    im2col(x.data(), c, h, w, k, s, p, cx.data(), oh * ow);
    std::vector<double> iy(x.size(), 0.0);
    col2im(y.data(), c, h, w, k, s, p, iy.data(), oh * ow);

    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < y.size(); ++i) lhs += cx[i] * y[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * iy[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("tensor indexing helpers agree with raw layout") {
  Tensor t;
  t.shape = {2, 3, 4, 5};
  t.data.resize(t.numel());
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(i);
  CHECK(t.at4(1, 2, 3, 4) == static_cast<double>(1 * 3 * 4 * 5 + 2 * 4 * 5 + 3 * 5 + 4));
  Tensor u;
  u.shape = {4, 5, 3};
  u.data.resize(u.numel());
  for (size_t i = 0; i < u.data.size(); ++i) u.data[i] = static_cast<double>(i);
  CHECK(u.at3(2, 3, 1) == static_cast<double>(2 * 5 * 3 + 3 * 3 + 1));
}

TEST_SUITE_END();
