#include "slsr/tensor.hpp"

namespace slsr {

void im2col(const double* src, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p,
            double* dst, int64_t ld) {
  const int64_t oh = conv_out_dim(H, k, s, p);
  const int64_t ow = conv_out_dim(W, k, s, p);
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        double* out_row = dst + ((c * k + ky) * k + kx) * ld;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s - p + ky;
          if (iy < 0 || iy >= H) {
            for (int64_t x = 0; x < ow; ++x) out_row[y * ow + x] = 0.0;
            continue;
          }
          const double* in_row = src + (c * H + iy) * W;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * s - p + kx;
            out_row[y * ow + x] = (ix >= 0 && ix < W) ? in_row[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int64_t C, int64_t H, int64_t W, int64_t k, int64_t s, int64_t p,
            double* dst, int64_t ld) {
  const int64_t oh = conv_out_dim(H, k, s, p);
  const int64_t ow = conv_out_dim(W, k, s, p);
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const double* in_row = cols + ((c * k + ky) * k + kx) * ld;
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          double* out_row = dst + (c * H + iy) * W;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * s - p + kx;
            if (ix >= 0 && ix < W) out_row[ix] += in_row[y * ow + x];
          }
        }
      }
    }
  }
}

}  // namespace slsr
