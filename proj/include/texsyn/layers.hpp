#pragma once

#include <memory>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn::nn {

/// Geometry of a strided convolution from `image` down to `cols` positions.
/// A transposed convolution uses the same geometry with the roles swapped.
struct ConvGeometry {
  Extent image;
  Extent cols;
  Extent kernel;
  Extent stride;
  Extent pad;  // leading pad per axis

  std::size_t taps() const noexcept { return kernel.volume(); }
};

/// 'same' downsampling: out = ceil(in / stride), leading pad = floor(total / 2).
ConvGeometry same_downsample(Extent in, Extent kernel, Extent stride);

/// Size-multiplying upsampling: out = in * stride (requires kernel >= stride).
ConvGeometry same_upsample(Extent in, Extent kernel, Extent stride);

/// Unfolds channels x image into (channels * taps) rows of g.cols.volume()
/// columns; `ld` is the row stride of `cols`.
template <typename T>
void im2col(const T* image, int channels, const ConvGeometry& g, T* cols, std::size_t ld);

/// Adjoint of im2col; accumulates into `image`.
template <typename T>
void col2im(const T* cols, int channels, const ConvGeometry& g, T* image, std::size_t ld);

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, const Context& ctx) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) = 0;
  virtual void collect(std::vector<Param<T>*>&) {}
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, int in_features, int out_channels, Extent out_extent);
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;
  void collect(std::vector<Param<T>*>& out) override;

 private:
  int in_, out_c_;
  Extent out_s_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

/// Strided convolution with 'same' ceil-division padding.
template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(std::string name, int in_channels, int out_channels, Extent kernel, Extent stride);
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;
  void collect(std::vector<Param<T>*>& out) override;

 private:
  bool direct() const noexcept {
    return cout_ <= 4 && stride_.d == 1 && stride_.h == 1 && stride_.w == 1;
  }
  template <typename F>
  void for_each_tap_row(F&& f) const;
  Tensor<T> forward_direct(const Tensor<T>& x);
  Tensor<T> backward_direct(const Tensor<T>& dy, const Context& ctx);

  int cin_, cout_;
  Extent kernel_, stride_;
  ConvGeometry geom_{};
  Param<T> w_, b_;
  Tensor<T> x_;
};

/// Transposed convolution whose output is exactly input * stride.
template <typename T>
class ConvTranspose final : public Layer<T> {
 public:
  ConvTranspose(std::string name, int in_channels, int out_channels, Extent kernel, Extent stride);
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;
  void collect(std::vector<Param<T>*>& out) override;

 private:
  int cin_, cout_;
  Extent kernel_, stride_;
  ConvGeometry geom_{};
  Param<T> w_, b_;
  Tensor<T> x_;
};

/// Per-channel batch normalization. Running statistics follow
/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, double momentum, double eps = 1e-5);
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;
  void collect(std::vector<Param<T>*>& out) override;

 private:
  int c_;
  double momentum_, eps_;
  Param<T> gamma_, beta_, mean_, var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  bool train_cache_ = false;
};

enum class Activation { ReLU, LeakyReLU, Tanh, Sigmoid };

template <typename T>
class Act final : public Layer<T> {
 public:
  explicit Act(Activation kind, T alpha = T(0.2)) : kind_(kind), alpha_(alpha) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;

 private:
  Activation kind_;
  T alpha_;
  Tensor<T> cache_;  // input for (Leaky)ReLU, output for Tanh/Sigmoid
};

/// Inverted dropout; identity in inference mode.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx) override;

 private:
  double rate_;
  std::vector<T> mask_;
};

template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  bool empty() const noexcept { return layers_.empty(); }
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx);
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx);
  std::vector<Param<T>*> params();

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace texsyn::nn
