#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace slsr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// Dense tensor of doubles. Shape conventions used in the project:
//   images:      H x W x C    (C = 3)
//   activations: N x C x H x W
//   matrices:    rows x cols
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(std::vector<int64_t> s, double fill)
      : shape(std::move(s)), data(numel_of(shape), fill) {}

  static int64_t numel_of(const std::vector<int64_t>& s) {
    if (s.empty()) return 0;
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return numel_of(shape); }
  int64_t dim(size_t i) const { return shape[i]; }
  size_t rank() const { return shape.size(); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 4-D accessor (N, C, H, W).
  double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }

  // 3-D accessor (H, W, C) for images.
  double& at3(int64_t h, int64_t w, int64_t c) {
    return data[static_cast<size_t>((h * shape[1] + w) * shape[2] + c)];
  }
  double at3(int64_t h, int64_t w, int64_t c) const {
    return data[static_cast<size_t>((h * shape[1] + w) * shape[2] + c)];
  }

  MatrixMap as_matrix(int64_t rows, int64_t cols) { return MatrixMap(ptr(), rows, cols); }
  ConstMatrixMap as_matrix(int64_t rows, int64_t cols) const {
    return ConstMatrixMap(ptr(), rows, cols);
  }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// im2col for one image plane set: input (C, H, W) contiguous, kernel k,
// stride s, zero padding p. Writes a (C*k*k) x (OH*OW) block where row
// (c*k*k + ky*k + kx) holds the input value seen by that kernel tap at each
// output position. `ld` is the row pitch of the destination buffer, so a
// batch of images can share one (C*k*k) x (N*OH*OW) matrix.
void im2col(const double* src, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p,
            double* dst, int64_t ld);

// Adjoint of im2col: accumulates a column block back into the (C, H, W)
// image. Caller must zero `dst` first. `ld` as above.
void col2im(const double* cols, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p,
            double* dst, int64_t ld);

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

}  // namespace slsr
