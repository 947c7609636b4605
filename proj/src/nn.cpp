#include "slsr/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "slsr/common.hpp"

namespace slsr::nn {

bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.data) v = rng.normal(0.0, stddev);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad)
    : Layer(std::move(name)),
      weight(name_ + ".weight", {cout, cin * k * k}),
      bias(name_ + ".bias", {cout}),
      cin_(cin),
      cout_(cout),
      k_(k),
      stride_(stride),
      pad_(pad) {}

void Conv2d::init_kaiming(Rng& rng) {
  fill_normal(weight.value, rng, std::sqrt(2.0 / static_cast<double>(cin_ * k_ * k_)));
  bias.value.zero();
}

void Conv2d::init_normal(Rng& rng, double stddev) {
  fill_normal(weight.value, rng, stddev);
  bias.value.zero();
}

Tensor Conv2d::forward(const Tensor& x, bool /*train*/) {
  const int64_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
  const int64_t oh = conv_out_dim(h, k_, stride_, pad_);
  const int64_t ow = conv_out_dim(w, k_, stride_, pad_);
  const int64_t ckk = cin_ * k_ * k_;
  const int64_t block = oh * ow;
  in_shape_ = x.shape;

  cols_ = Tensor({ckk, n * block});
  for (int64_t i = 0; i < n; ++i)
    im2col(x.ptr() + i * cin_ * h * w, cin_, h, w, k_, stride_, pad_, cols_.ptr() + i * block,
           n * block);

  Matrix y_all = weight.value.as_matrix(cout_, ckk) * cols_.as_matrix(ckk, n * block);

  Tensor out({n, cout_, oh, ow});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cout_; ++c) {
      double* dst = out.ptr() + (i * cout_ + c) * block;
      const double b = bias.value[c];
      for (int64_t j = 0; j < block; ++j) dst[j] = y_all(c, i * block + j) + b;
    }
  return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int64_t n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  const int64_t oh = dy.shape[2], ow = dy.shape[3];
  const int64_t ckk = cin_ * k_ * k_;
  const int64_t block = oh * ow;

  Matrix dy_all(cout_, n * block);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cout_; ++c) {
      const double* src = dy.ptr() + (i * cout_ + c) * block;
      for (int64_t j = 0; j < block; ++j) dy_all(c, i * block + j) = src[j];
    }

  weight.grad.as_matrix(cout_, ckk) += dy_all * cols_.as_matrix(ckk, n * block).transpose();
  {
    auto bg = bias.grad.as_matrix(cout_, 1);
    bg += dy_all.rowwise().sum();
  }

  Matrix dcols = weight.value.as_matrix(cout_, ckk).transpose() * dy_all;
  Tensor dx(in_shape_);
  for (int64_t i = 0; i < n; ++i)
    col2im(dcols.data() + i * block, cin_, h, w, k_, stride_, pad_,
           dx.ptr() + i * cin_ * h * w, n * block);
  return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int64_t cin, int64_t cout, int64_t k,
                                 int64_t stride, int64_t pad, int64_t out_pad)
    : Layer(std::move(name)),
      weight(name_ + ".weight", {cin, cout * k * k}),
      bias(name_ + ".bias", {cout}),
      cin_(cin),
      cout_(cout),
      k_(k),
      stride_(stride),
      pad_(pad),
      out_pad_(out_pad) {
  if (out_pad_ < 0 || out_pad_ >= stride_)
    throw ConfigError(name_ + ": output padding must lie in [0, stride)");
}

void ConvTranspose2d::init_normal(Rng& rng, double stddev) {
  fill_normal(weight.value, rng, stddev);
  bias.value.zero();
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool /*train*/) {
  const int64_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
  const int64_t oh = (h - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
  const int64_t ow = (w - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
  const int64_t ckk = cout_ * k_ * k_;
  const int64_t block = h * w;
  in_shape_ = x.shape;

  // Transposed convolution is the adjoint of a (k, stride, pad) convolution
  // mapping (cout, oh, ow) -> (cin, h, w); forward here is that conv's
  // data-gradient: cols = W^T * x, image = col2im(cols).
  x_mat_ = Tensor({cin_, n * block});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cin_; ++c)
      std::memcpy(x_mat_.ptr() + c * n * block + i * block, x.ptr() + (i * cin_ + c) * block,
                  sizeof(double) * static_cast<size_t>(block));

  Matrix cols = weight.value.as_matrix(cin_, ckk).transpose() * x_mat_.as_matrix(cin_, n * block);

  Tensor out({n, cout_, oh, ow});
  for (int64_t i = 0; i < n; ++i)
    col2im(cols.data() + i * block, cout_, oh, ow, k_, stride_, pad_,
           out.ptr() + i * cout_ * oh * ow, n * block);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cout_; ++c) {
      double* dst = out.ptr() + (i * cout_ + c) * oh * ow;
      const double b = bias.value[c];
      for (int64_t j = 0; j < oh * ow; ++j) dst[j] += b;
    }
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  const int64_t n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  const int64_t oh = dy.shape[2], ow = dy.shape[3];
  const int64_t ckk = cout_ * k_ * k_;
  const int64_t block = h * w;

  Tensor dcols({ckk, n * block});
  for (int64_t i = 0; i < n; ++i)
    im2col(dy.ptr() + i * cout_ * oh * ow, cout_, oh, ow, k_, stride_, pad_,
           dcols.ptr() + i * block, n * block);

  weight.grad.as_matrix(cin_, ckk) +=
      x_mat_.as_matrix(cin_, n * block) * dcols.as_matrix(ckk, n * block).transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cout_; ++c) {
      const double* src = dy.ptr() + (i * cout_ + c) * oh * ow;
      double acc = 0.0;
      for (int64_t j = 0; j < oh * ow; ++j) acc += src[j];
      bias.grad[c] += acc;
    }

  Matrix dx_mat = weight.value.as_matrix(cin_, ckk) * dcols.as_matrix(ckk, n * block);
  Tensor dx(in_shape_);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cin_; ++c)
      std::memcpy(dx.ptr() + (i * cin_ + c) * block, dx_mat.data() + c * n * block + i * block,
                  sizeof(double) * static_cast<size_t>(block));
  return dx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int64_t din, int64_t dout)
    : Layer(std::move(name)),
      weight(name_ + ".weight", {dout, din}),
      bias(name_ + ".bias", {dout}),
      din_(din),
      dout_(dout) {}

void Linear::init_kaiming(Rng& rng) {
  fill_normal(weight.value, rng, std::sqrt(2.0 / static_cast<double>(din_)));
  bias.value.zero();
}

void Linear::init_xavier(Rng& rng) {
  fill_normal(weight.value, rng, std::sqrt(2.0 / static_cast<double>(din_ + dout_)));
  bias.value.zero();
}

void Linear::init_normal(Rng& rng, double stddev) {
  fill_normal(weight.value, rng, stddev);
  bias.value.zero();
}

Tensor Linear::forward(const Tensor& x, bool /*train*/) {
  const int64_t n = x.shape[0];
  x_ = x;
  Tensor out({n, dout_});
  out.as_matrix(n, dout_) =
      x.as_matrix(n, din_) * weight.value.as_matrix(dout_, din_).transpose();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dout_; ++j) out[i * dout_ + j] += bias.value[j];
  return out;
}

Tensor Linear::backward(const Tensor& dy) {
  const int64_t n = dy.shape[0];
  auto dy_m = dy.as_matrix(n, dout_);
  weight.grad.as_matrix(dout_, din_) += dy_m.transpose() * x_.as_matrix(n, din_);
  bias.grad.as_matrix(1, dout_) += dy_m.colwise().sum();
  Tensor dx({n, din_});
  dx.as_matrix(n, din_) = dy_m * weight.value.as_matrix(dout_, din_);
  return dx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int64_t channels, double eps, double momentum)
    : Layer(std::move(name)),
      gamma(name_ + ".gamma", {channels}),
      beta(name_ + ".beta", {channels}),
      running_mean(name_ + ".running_mean", {channels}),
      running_var(name_ + ".running_var", {channels}),
      channels_(channels),
      eps_(eps),
      momentum_(momentum) {
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
  std::fill(running_var.value.data.begin(), running_var.value.data.end(), 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  const int64_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
  const int64_t spatial = h * w;
  const double m = static_cast<double>(n * spatial);
  in_shape_ = x.shape;
  last_train_ = train;

  Tensor mean({channels_});
  Tensor var({channels_});
  if (train) {
    for (int64_t c = 0; c < channels_; ++c) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * channels_ + c) * spatial;
        for (int64_t j = 0; j < spatial; ++j) acc += p[j];
      }
      mean[c] = acc / m;
    }
    for (int64_t c = 0; c < channels_; ++c) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * channels_ + c) * spatial;
        for (int64_t j = 0; j < spatial; ++j) {
          const double d = p[j] - mean[c];
          acc += d * d;
        }
      }
      var[c] = acc / m;
    }
    for (int64_t c = 0; c < channels_; ++c) {
      running_mean.value[c] = (1.0 - momentum_) * running_mean.value[c] + momentum_ * mean[c];
      running_var.value[c] = (1.0 - momentum_) * running_var.value[c] + momentum_ * var[c];
    }
  } else {
    mean = running_mean.value;
    var = running_var.value;
  }

  inv_std_ = Tensor({channels_});
  for (int64_t c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);

  xhat_ = Tensor(x.shape);
  Tensor out(x.shape);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < channels_; ++c) {
      const double* p = x.ptr() + (i * channels_ + c) * spatial;
      double* xh = xhat_.ptr() + (i * channels_ + c) * spatial;
      double* o = out.ptr() + (i * channels_ + c) * spatial;
      const double mu = mean[c], is = inv_std_[c], g = gamma.value[c], b = beta.value[c];
      for (int64_t j = 0; j < spatial; ++j) {
        xh[j] = (p[j] - mu) * is;
        o[j] = g * xh[j] + b;
      }
    }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const int64_t n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  const int64_t spatial = h * w;
  const double m = static_cast<double>(n * spatial);

  Tensor dx(in_shape_);
  for (int64_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double* dyp = dy.ptr() + (i * channels_ + c) * spatial;
      const double* xh = xhat_.ptr() + (i * channels_ + c) * spatial;
      for (int64_t j = 0; j < spatial; ++j) {
        sum_dy += dyp[j];
        sum_dy_xhat += dyp[j] * xh[j];
      }
    }
    gamma.grad[c] += sum_dy_xhat;
    beta.grad[c] += sum_dy;

    const double g = gamma.value[c], is = inv_std_[c];
    if (last_train_) {
      for (int64_t i = 0; i < n; ++i) {
        const double* dyp = dy.ptr() + (i * channels_ + c) * spatial;
        const double* xh = xhat_.ptr() + (i * channels_ + c) * spatial;
        double* dxp = dx.ptr() + (i * channels_ + c) * spatial;
        for (int64_t j = 0; j < spatial; ++j)
          dxp[j] = g * is / m * (m * dyp[j] - sum_dy - xh[j] * sum_dy_xhat);
      }
    } else {
      for (int64_t i = 0; i < n; ++i) {
        const double* dyp = dy.ptr() + (i * channels_ + c) * spatial;
        double* dxp = dx.ptr() + (i * channels_ + c) * spatial;
        for (int64_t j = 0; j < spatial; ++j) dxp[j] = g * is * dyp[j];
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::collect_segments(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ------------------------------------------------------------ activations

Tensor ReLU::forward(const Tensor& x, bool /*train*/) {
  mask_ = Tensor(x.shape);
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask_[i] = x[i] > 0.0 ? 1.0 : 0.0;
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return out;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool /*train*/) {
  mask_ = Tensor(x.shape);
  Tensor out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask_[i] = x[i] > 0.0 ? 1.0 : slope_;
    out[i] = x[i] * mask_[i];
  }
  return out;
}

Tensor LeakyReLU::backward(const Tensor& dy) {
  Tensor dx(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

Tensor Tanh::forward(const Tensor& x, bool /*train*/) {
  y_ = Tensor(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y_[i] = std::tanh(x[i]);
  return y_;
}

Tensor Tanh::backward(const Tensor& dy) {
  Tensor dx(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (1.0 - y_[i] * y_[i]);
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, bool /*train*/) {
  y_ = Tensor(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) y_[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y_;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  Tensor dx(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (1.0 - y_[i]);
  return dx;
}

// --------------------------------------------------------------- pooling

MaxPool2d::MaxPool2d(std::string name, int64_t k, int64_t stride)
    : Layer(std::move(name)), k_(k), stride_(stride) {}

Tensor MaxPool2d::forward(const Tensor& x, bool /*train*/) {
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const int64_t oh = (h - k_) / stride_ + 1;
  const int64_t ow = (w - k_) / stride_ + 1;
  in_shape_ = x.shape;
  Tensor out({n, c, oh, ow});
  argmax_.assign(static_cast<size_t>(out.numel()), 0);
  int64_t oi = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* plane = x.ptr() + (i * c + ch) * h * w;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xo = 0; xo < ow; ++xo, ++oi) {
          double best = -1e300;
          int64_t best_idx = 0;
          for (int64_t ky = 0; ky < k_; ++ky)
            for (int64_t kx = 0; kx < k_; ++kx) {
              const int64_t iy = y * stride_ + ky, ix = xo * stride_ + kx;
              const double v = plane[iy * w + ix];
              if (v > best) {
                best = v;
                best_idx = (i * c + ch) * h * w + iy * w + ix;
              }
            }
          out[oi] = best;
          argmax_[static_cast<size_t>(oi)] = best_idx;
        }
    }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
  Tensor dx(in_shape_);
  for (int64_t i = 0; i < dy.numel(); ++i) dx[argmax_[static_cast<size_t>(i)]] += dy[i];
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool /*train*/) {
  const int64_t n = x.shape[0], c = x.shape[1], spatial = x.shape[2] * x.shape[3];
  in_shape_ = x.shape;
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* p = x.ptr() + (i * c + ch) * spatial;
      double acc = 0.0;
      for (int64_t j = 0; j < spatial; ++j) acc += p[j];
      out[i * c + ch] = acc / static_cast<double>(spatial);
    }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  const int64_t n = in_shape_[0], c = in_shape_[1], spatial = in_shape_[2] * in_shape_[3];
  Tensor dx(in_shape_);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double g = dy[i * c + ch] / static_cast<double>(spatial);
      double* p = dx.ptr() + (i * c + ch) * spatial;
      for (int64_t j = 0; j < spatial; ++j) p[j] = g;
    }
  return dx;
}

Tensor Flatten::forward(const Tensor& x, bool /*train*/) {
  in_shape_ = x.shape;
  Tensor out = x;
  out.shape = {x.shape[0], x.numel() / x.shape[0]};
  return out;
}

Tensor Flatten::backward(const Tensor& dy) {
  Tensor dx = dy;
  dx.shape = in_shape_;
  return dx;
}

Tensor Reshape4d::forward(const Tensor& x, bool /*train*/) {
  Tensor out = x;
  out.shape = {x.shape[0], c_, h_, w_};
  return out;
}

Tensor Reshape4d::backward(const Tensor& dy) {
  Tensor dx = dy;
  dx.shape = {dy.shape[0], c_ * h_ * w_};
  return dx;
}

// -------------------------------------------------------------- Residual

Residual::Residual(std::string name, std::vector<std::unique_ptr<Layer>> body,
                   std::vector<std::unique_ptr<Layer>> shortcut)
    : Layer(std::move(name)), body_(std::move(body)), shortcut_(std::move(shortcut)) {}

Tensor Residual::forward(const Tensor& x, bool train) {
  Tensor b = x;
  for (auto& l : body_) b = l->forward(b, train);
  Tensor s = x;
  for (auto& l : shortcut_) s = l->forward(s, train);
  relu_mask_ = Tensor(b.shape);
  Tensor out(b.shape);
  for (int64_t i = 0; i < b.numel(); ++i) {
    const double v = b[i] + s[i];
    relu_mask_[i] = v > 0.0 ? 1.0 : 0.0;
    out[i] = v > 0.0 ? v : 0.0;
  }
  return out;
}

Tensor Residual::backward(const Tensor& dy) {
  Tensor dz(dy.shape);
  for (int64_t i = 0; i < dy.numel(); ++i) dz[i] = dy[i] * relu_mask_[i];
  Tensor db = dz;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) db = (*it)->backward(db);
  Tensor ds = dz;
  for (auto it = shortcut_.rbegin(); it != shortcut_.rend(); ++it) ds = (*it)->backward(ds);
  for (int64_t i = 0; i < db.numel(); ++i) db[i] += ds[i];
  return db;
}

void Residual::collect_params(std::vector<Param*>& out) {
  for (auto& l : body_) l->collect_params(out);
  for (auto& l : shortcut_) l->collect_params(out);
}

void Residual::collect_segments(std::vector<Param*>& out) {
  for (auto& l : body_) l->collect_segments(out);
  for (auto& l : shortcut_) l->collect_segments(out);
}

// --------------------------------------------------------------- Network

Tensor Network::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& l : layers_) {
    cur = l->forward(cur, train);
    if (!all_finite(cur))
      throw NumericError("non-finite activation in layer '" + l->name() + "'");
  }
  return cur;
}

Tensor Network::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<Param*> Network::all_segments() {
  std::vector<Param*> out;
  for (auto& l : layers_) l->collect_segments(out);
  return out;
}

void Network::zero_grad() {
  for (Param* p : params()) p->grad.zero();
}

int64_t Network::param_count() {
  int64_t n = 0;
  for (Param* p : params()) n += p->value.numel();
  return n;
}

double Network::get_param(int64_t flat_index) {
  for (Param* p : params()) {
    if (flat_index < p->value.numel()) return p->value[flat_index];
    flat_index -= p->value.numel();
  }
  throw std::out_of_range("parameter index");
}

void Network::set_param(int64_t flat_index, double v) {
  for (Param* p : params()) {
    if (flat_index < p->value.numel()) {
      p->value[flat_index] = v;
      return;
    }
    flat_index -= p->value.numel();
  }
  throw std::out_of_range("parameter index");
}

double Network::get_grad(int64_t flat_index) {
  for (Param* p : params()) {
    if (flat_index < p->value.numel()) return p->grad[flat_index];
    flat_index -= p->value.numel();
  }
  throw std::out_of_range("parameter index");
}

// ------------------------------------------------------------- optimizers

void SgdMomentum::step(const std::vector<Param*>& params, double lr) {
  for (Param* p : params) {
    Tensor& v = velocity_.try_emplace(p, p->value.shape).first->second;
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i] + weight_decay_ * p->value[i];
      v[i] = momentum_ * v[i] + g;
      p->value[i] -= lr * v[i];
    }
  }
}

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params) {
    Tensor& m = m_.try_emplace(p, p->value.shape).first->second;
    Tensor& v = v_.try_emplace(p, p->value.shape).first->second;
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ------------------------------------------------------------ checkpoints

namespace {
constexpr char kMagic[8] = {'S', 'L', 'S', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<Param*>& segments) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kVersion);
  write_pod(f, static_cast<uint64_t>(config_json.size()));
  f.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  write_pod(f, static_cast<uint64_t>(segments.size()));
  for (const Param* p : segments) {
    write_pod(f, static_cast<uint64_t>(p->name.size()));
    f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod(f, static_cast<uint64_t>(p->value.numel()));
    for (double v : p->value.data) {
      const float fv = static_cast<float>(v);
      write_pod(f, fv);
    }
  }
  if (!f) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInputError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("bad checkpoint magic: " + path);
  const uint32_t version = read_pod<uint32_t>(f);
  if (version != kVersion) throw DataError("unsupported checkpoint version in " + path);
  Checkpoint ckpt;
  const uint64_t json_len = read_pod<uint64_t>(f);
  ckpt.config_json.resize(json_len);
  f.read(ckpt.config_json.data(), static_cast<std::streamsize>(json_len));
  const uint64_t n_seg = read_pod<uint64_t>(f);
  for (uint64_t i = 0; i < n_seg; ++i) {
    const uint64_t name_len = read_pod<uint64_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t count = read_pod<uint64_t>(f);
    std::vector<float> vals(count);
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    ckpt.segments.emplace_back(std::move(name), std::move(vals));
  }
  if (!f) throw DataError("truncated checkpoint: " + path);
  return ckpt;
}

void assign_segments(const Checkpoint& ckpt, const std::vector<Param*>& segments) {
  std::unordered_map<std::string, const std::vector<float>*> by_name;
  for (const auto& [name, vals] : ckpt.segments) by_name[name] = &vals;
  for (Param* p : segments) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw DataError("checkpoint missing segment: " + p->name);
    if (static_cast<int64_t>(it->second->size()) != p->value.numel())
      throw DataError("checkpoint segment size mismatch: " + p->name);
    for (int64_t i = 0; i < p->value.numel(); ++i)
      p->value[i] = static_cast<double>((*it->second)[static_cast<size_t>(i)]);
  }
}

}  // namespace slsr::nn
