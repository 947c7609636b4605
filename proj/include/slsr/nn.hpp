#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "slsr/rng.hpp"
#include "slsr/tensor.hpp"

namespace slsr::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, std::vector<int64_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

bool all_finite(const Tensor& t);

// A layer owns its parameters and caches whatever its backward pass needs.
// backward() accumulates parameter gradients and returns the input gradient.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Param*>& /*out*/) {}
  // Trainable params plus any non-trainable state that belongs in a
  // checkpoint (batch-norm running statistics).
  virtual void collect_segments(std::vector<Param*>& out) { collect_params(out); }

 protected:
  std::string name_;
};

class Conv2d : public Layer {
 public:
  // weight (Cout, Cin*k*k), bias (Cout)
  Conv2d(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_kaiming(Rng& rng);
  void init_normal(Rng& rng, double stddev);

  Param weight, bias;

 private:
  int64_t cin_, cout_, k_, stride_, pad_;
  Tensor cols_;  // (Cin*k*k, N*OH*OW)
  std::vector<int64_t> in_shape_;
};

class ConvTranspose2d : public Layer {
 public:
  // weight (Cin, Cout*k*k), bias (Cout); output spatial =
  // (H-1)*stride - 2*pad + k + out_pad with out_pad < stride
  ConvTranspose2d(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride,
                  int64_t pad, int64_t out_pad = 0);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_normal(Rng& rng, double stddev);

  Param weight, bias;

 private:
  int64_t cin_, cout_, k_, stride_, pad_, out_pad_;
  Tensor x_mat_;  // (Cin, N*H*W)
  std::vector<int64_t> in_shape_;
};

class Linear : public Layer {
 public:
  // weight (dout, din), bias (dout); input (N, din)
  Linear(std::string name, int64_t din, int64_t dout);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_kaiming(Rng& rng);
  void init_xavier(Rng& rng);
  void init_normal(Rng& rng, double stddev);

  Param weight, bias;

 private:
  int64_t din_, dout_;
  Tensor x_;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, int64_t channels, double eps = 1e-5, double momentum = 0.1);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_segments(std::vector<Param*>& out) override;

  Param gamma, beta;
  // Running statistics ride along in checkpoints but receive no gradient;
  // they appear in collect_segments only, so optimizers never see them.
  Param running_mean, running_var;

 private:
  int64_t channels_;
  double eps_, momentum_;
  bool last_train_ = true;
  Tensor xhat_, inv_std_, x_centered_;
  std::vector<int64_t> in_shape_;
};

class ReLU : public Layer {
 public:
  explicit ReLU(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor mask_;
};

class LeakyReLU : public Layer {
 public:
  LeakyReLU(std::string name, double slope) : Layer(std::move(name)), slope_(slope) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  double slope_;
  Tensor mask_;
};

class Tanh : public Layer {
 public:
  explicit Tanh(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor y_;
};

class Sigmoid : public Layer {
 public:
  explicit Sigmoid(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor y_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(std::string name, int64_t k, int64_t stride);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int64_t k_, stride_;
  std::vector<int64_t> argmax_;
  std::vector<int64_t> in_shape_;
};

class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<int64_t> in_shape_;
};

class Flatten : public Layer {
 public:
  explicit Flatten(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::vector<int64_t> in_shape_;
};

// (N, D) -> (N, C, H, W); used as the generator stem after its projection.
class Reshape4d : public Layer {
 public:
  Reshape4d(std::string name, int64_t c, int64_t h, int64_t w)
      : Layer(std::move(name)), c_(c), h_(h), w_(w) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int64_t c_, h_, w_;
};

// Elementwise residual add of two branches; used by the resnet_style backbone.
// Wraps an inner stack plus an optional projection on the skip path.
class Residual : public Layer {
 public:
  Residual(std::string name, std::vector<std::unique_ptr<Layer>> body,
           std::vector<std::unique_ptr<Layer>> shortcut);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_segments(std::vector<Param*>& out) override;

 private:
  std::vector<std::unique_ptr<Layer>> body_, shortcut_;
  Tensor relu_mask_;
};

class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  // Throws NumericError naming the offending layer on non-finite activations.
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

  std::vector<Param*> params();
  std::vector<Param*> all_segments();  // params plus batch-norm running stats
  void zero_grad();

  // Flat-vector view over trainable parameters, in collect order.
  int64_t param_count();
  double get_param(int64_t flat_index);
  void set_param(int64_t flat_index, double v);
  double get_grad(int64_t flat_index);

  size_t layer_count() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Classical SGD: v = momentum*v + (g + weight_decay*theta); theta -= lr*v.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<Param*>& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::unordered_map<const Param*, Tensor> velocity_;
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Param*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<const Param*, Tensor> m_, v_;
};

// Versioned checkpoint container:
//   magic "SLSRCKPT", u32 version, u64 json length, config JSON blob,
//   u64 segment count, then per segment: u64 name length, name bytes,
//   u64 element count, elements as little-endian float32.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, std::vector<float>>> segments;
};

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<Param*>& segments);
Checkpoint load_checkpoint(const std::string& path);
void assign_segments(const Checkpoint& ckpt, const std::vector<Param*>& segments);

}  // namespace slsr::nn
