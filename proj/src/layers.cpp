#include "texsyn/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "texsyn/error.hpp"

namespace texsyn::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

// Columns per GEMM; small feature maps are batched across samples.
constexpr std::size_t kGroupCols = 1024;

int group_size(std::size_t positions, int batch) {
  const auto g = static_cast<int>(std::max<std::size_t>(1, kGroupCols / std::max<std::size_t>(positions, 1)));
  return std::clamp(g, 1, std::max(batch, 1));
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// [n0, n0+gn) samples of an [n][c][p] tensor -> c x (gn*p) matrix.
template <typename T>
void gather(const Tensor<T>& t, int n0, int gn, T* out) {
  const std::size_t p = t.s.volume();
  const std::size_t ld = static_cast<std::size_t>(gn) * p;
  for (int j = 0; j < gn; ++j) {
    const T* src = t.sample(n0 + j);
    for (int ch = 0; ch < t.c; ++ch)
      std::copy_n(src + static_cast<std::size_t>(ch) * p, p, out + static_cast<std::size_t>(ch) * ld + j * p);
  }
}

template <typename T>
void scatter(const T* in, int n0, int gn, Tensor<T>& t) {
  const std::size_t p = t.s.volume();
  const std::size_t ld = static_cast<std::size_t>(gn) * p;
  for (int j = 0; j < gn; ++j) {
    T* dst = t.sample(n0 + j);
    for (int ch = 0; ch < t.c; ++ch)
      std::copy_n(in + static_cast<std::size_t>(ch) * ld + j * p, p, dst + static_cast<std::size_t>(ch) * p);
  }
}

// Range of output indices o in [0, out) with 0 <= o*s - pad + k < in.
inline void valid_range(int out, int in, int s, int pad, int k, int& lo, int& hi) {
  lo = pad - k > 0 ? ceil_div(pad - k, s) : 0;
  const int top = in - 1 + pad - k;
  hi = top < 0 ? 0 : std::min(out, top / s + 1);
  lo = std::min(lo, out);
  if (hi < lo) hi = lo;
}

}  // namespace

Extent to_extent(std::span<const int> dims) {
  if (dims.size() == 2) return Extent{1, dims[0], dims[1]};
  if (dims.size() == 3) return Extent{dims[0], dims[1], dims[2]};
  throw ShapeError("expected 2 or 3 dims");
}

std::vector<int> to_dims(const Extent& e, int ndim) {
  if (ndim == 2) return {e.h, e.w};
  return {e.d, e.h, e.w};
}

ConvGeometry same_downsample(Extent in, Extent kernel, Extent stride) {
  auto axis = [](int i, int k, int s, int& out, int& pad) {
    out = ceil_div(i, s);
    pad = std::max((out - 1) * s + k - i, 0) / 2;
  };
  ConvGeometry g;
  g.image = in;
  g.kernel = kernel;
  g.stride = stride;
  axis(in.d, kernel.d, stride.d, g.cols.d, g.pad.d);
  axis(in.h, kernel.h, stride.h, g.cols.h, g.pad.h);
  axis(in.w, kernel.w, stride.w, g.cols.w, g.pad.w);
  return g;
}

ConvGeometry same_upsample(Extent in, Extent kernel, Extent stride) {
  if (kernel.d < stride.d || kernel.h < stride.h || kernel.w < stride.w)
    throw SpecError("transposed convolution requires kernel >= stride");
  ConvGeometry g;
  g.cols = in;
  g.kernel = kernel;
  g.stride = stride;
  g.image = Extent{in.d * stride.d, in.h * stride.h, in.w * stride.w};
  g.pad = Extent{(kernel.d - stride.d) / 2, (kernel.h - stride.h) / 2, (kernel.w - stride.w) / 2};
  return g;
}

template <typename T>
void im2col(const T* image, int channels, const ConvGeometry& g, T* cols, std::size_t ld) {
  const Extent &I = g.image, &O = g.cols, &K = g.kernel, &S = g.stride, &P = g.pad;
  const std::size_t plane = static_cast<std::size_t>(O.h) * O.w;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    const T* img = image + static_cast<std::size_t>(c) * I.volume();
    for (int kz = 0; kz < K.d; ++kz)
      for (int ky = 0; ky < K.h; ++ky)
        for (int kx = 0; kx < K.w; ++kx, ++row) {
          T* dst = cols + row * ld;
          int xlo, xhi;
          valid_range(O.w, I.w, S.w, P.w, kx, xlo, xhi);
          for (int oz = 0; oz < O.d; ++oz) {
            const int iz = oz * S.d - P.d + kz;
            T* dz = dst + static_cast<std::size_t>(oz) * plane;
            if (iz < 0 || iz >= I.d) {
              std::fill_n(dz, plane, T(0));
              continue;
            }
            for (int oy = 0; oy < O.h; ++oy) {
              const int iy = oy * S.h - P.h + ky;
              T* d = dz + static_cast<std::size_t>(oy) * O.w;
              if (iy < 0 || iy >= I.h) {
                std::fill_n(d, O.w, T(0));
                continue;
              }
              const T* src = img + (static_cast<std::size_t>(iz) * I.h + iy) * I.w;
              for (int ox = 0; ox < xlo; ++ox) d[ox] = T(0);
              if (S.w == 1) {
                const T* s0 = src + (xlo - P.w + kx);
                for (int ox = xlo; ox < xhi; ++ox) d[ox] = s0[ox - xlo];
              } else {
                for (int ox = xlo; ox < xhi; ++ox) d[ox] = src[ox * S.w - P.w + kx];
              }
              for (int ox = xhi; ox < O.w; ++ox) d[ox] = T(0);
            }
          }
        }
  }
}

template <typename T>
void col2im(const T* cols, int channels, const ConvGeometry& g, T* image, std::size_t ld) {
  const Extent &I = g.image, &O = g.cols, &K = g.kernel, &S = g.stride, &P = g.pad;
  const std::size_t plane = static_cast<std::size_t>(O.h) * O.w;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    T* img = image + static_cast<std::size_t>(c) * I.volume();
    for (int kz = 0; kz < K.d; ++kz)
      for (int ky = 0; ky < K.h; ++ky)
        for (int kx = 0; kx < K.w; ++kx, ++row) {
          const T* src = cols + row * ld;
          int xlo, xhi;
          valid_range(O.w, I.w, S.w, P.w, kx, xlo, xhi);
          for (int oz = 0; oz < O.d; ++oz) {
            const int iz = oz * S.d - P.d + kz;
            if (iz < 0 || iz >= I.d) continue;
            const T* sz = src + static_cast<std::size_t>(oz) * plane;
            for (int oy = 0; oy < O.h; ++oy) {
              const int iy = oy * S.h - P.h + ky;
              if (iy < 0 || iy >= I.h) continue;
              const T* s = sz + static_cast<std::size_t>(oy) * O.w;
              T* d = img + (static_cast<std::size_t>(iz) * I.h + iy) * I.w;
              for (int ox = xlo; ox < xhi; ++ox) d[ox * S.w - P.w + kx] += s[ox];
            }
          }
        }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::string name, int in_features, int out_channels, Extent out_extent)
    : in_(in_features), out_c_(out_channels), out_s_(out_extent) {
  const int out = out_c_ * static_cast<int>(out_s_.volume());
  w_ = Param<T>{name + ".weight", {out, in_}, Buffer<T>(static_cast<std::size_t>(out) * in_), {}, true};
  b_ = Param<T>{name + ".bias", {out}, Buffer<T>(static_cast<std::size_t>(out)), {}, true};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, const Context&) {
  if (static_cast<int>(x.per_sample()) != in_)
    throw ShapeError("dense layer expects " + std::to_string(in_) + " features, got " +
                     std::to_string(x.per_sample()));
  x_ = x;
  const int out = out_c_ * static_cast<int>(out_s_.volume());
  Tensor<T> y(x.n, out_c_, out_s_);
  CMapM<T> X(x.v.data(), x.n, in_);
  CMapM<T> W(w_.value.data(), out, in_);
  MapM<T> Y(y.v.data(), x.n, out);
  Y.noalias() = X * W.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(b_.value.data(), out);
  Y.rowwise() += b;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  const int out = out_c_ * static_cast<int>(out_s_.volume());
  CMapM<T> dY(dy.v.data(), dy.n, out);
  CMapM<T> W(w_.value.data(), out, in_);
  if (ctx.param_grads) {
    CMapM<T> X(x_.v.data(), x_.n, in_);
    MapM<T> dW(w_.grad.data(), out, in_);
    dW.noalias() += dY.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(b_.grad.data(), out);
    db += dY.colwise().sum();
  }
  Tensor<T> dx(x_.n, x_.c, x_.s);
  MapM<T> dX(dx.v.data(), x_.n, in_);
  dX.noalias() = dY * W;
  return dx;
}

template <typename T>
void Dense<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---------------------------------------------------------------------------

template <typename T>
Conv<T>::Conv(std::string name, int in_channels, int out_channels, Extent kernel, Extent stride)
    : cin_(in_channels), cout_(out_channels), kernel_(kernel), stride_(stride) {
  const int taps = static_cast<int>(kernel.volume());
  std::vector<int> shape{cout_, cin_};
  if (kernel.d > 1) shape.push_back(kernel.d);
  shape.push_back(kernel.h);
  shape.push_back(kernel.w);
  w_ = Param<T>{name + ".weight", shape, Buffer<T>(static_cast<std::size_t>(cout_) * cin_ * taps), {}, true};
  b_ = Param<T>{name + ".bias", {cout_}, Buffer<T>(static_cast<std::size_t>(cout_)), {}, true};
}

template <typename T>
Tensor<T> Conv<T>::forward(const Tensor<T>& x, const Context&) {
  if (x.c != cin_) throw ShapeError("conv expects " + std::to_string(cin_) + " channels");
  geom_ = same_downsample(x.s, kernel_, stride_);
  x_ = x;
  if (direct()) return forward_direct(x);
  Tensor<T> y(x.n, cout_, geom_.cols);
  const std::size_t p = geom_.cols.volume();
  const auto ck = static_cast<Eigen::Index>(cin_ * geom_.taps());
  const int g = group_size(p, x.n);
  Buffer<T> cols(static_cast<std::size_t>(ck) * g * p), ybuf(static_cast<std::size_t>(cout_) * g * p);
  CMapM<T> W(w_.value.data(), cout_, ck);
  for (int n0 = 0; n0 < x.n; n0 += g) {
    const int gn = std::min(g, x.n - n0);
    const std::size_t ld = static_cast<std::size_t>(gn) * p;
    for (int j = 0; j < gn; ++j) im2col(x.sample(n0 + j), cin_, geom_, cols.data() + j * p, ld);
    MapM<T> Y(ybuf.data(), cout_, static_cast<Eigen::Index>(ld));
    Y.noalias() = W * CMapM<T>(cols.data(), ck, static_cast<Eigen::Index>(ld));
    for (int co = 0; co < cout_; ++co) Y.row(co).array() += b_.value[co];
    scatter(ybuf.data(), n0, gn, y);
  }
  return y;
}

template <typename T>
Tensor<T> Conv<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  if (direct()) return backward_direct(dy, ctx);
  Tensor<T> dx(x_.n, cin_, x_.s);
  const std::size_t p = geom_.cols.volume();
  const auto ck = static_cast<Eigen::Index>(cin_ * geom_.taps());
  const int g = group_size(p, x_.n);
  Buffer<T> cols(static_cast<std::size_t>(ck) * g * p), dyb(static_cast<std::size_t>(cout_) * g * p);
  CMapM<T> W(w_.value.data(), cout_, ck);
  MapM<T> dW(w_.grad.data(), cout_, ck);
  for (int n0 = 0; n0 < x_.n; n0 += g) {
    const int gn = std::min(g, x_.n - n0);
    const std::size_t ld = static_cast<std::size_t>(gn) * p;
    const auto eld = static_cast<Eigen::Index>(ld);
    gather(dy, n0, gn, dyb.data());
    CMapM<T> dY(dyb.data(), cout_, eld);
    MapM<T> C(cols.data(), ck, eld);
    if (ctx.param_grads) {
      for (int j = 0; j < gn; ++j) im2col(x_.sample(n0 + j), cin_, geom_, cols.data() + j * p, ld);
      dW.noalias() += dY * C.transpose();
      for (int co = 0; co < cout_; ++co) b_.grad[co] += dY.row(co).sum();
    }
    C.noalias() = W.transpose() * dY;
    for (int j = 0; j < gn; ++j) col2im(cols.data() + j * p, cin_, geom_, dx.sample(n0 + j), ld);
  }
  return dx;
}

// Stride-1 convolutions with few output channels skip im2col: each kernel tap
// becomes a row-wise axpy (forward, input gradient) or dot product (weights).
template <typename T>
template <typename F>
void Conv<T>::for_each_tap_row(F&& f) const {
  const Extent &I = geom_.image, &O = geom_.cols, &K = geom_.kernel, &P = geom_.pad;
  int tap = 0;
  for (int kz = 0; kz < K.d; ++kz)
    for (int ky = 0; ky < K.h; ++ky)
      for (int kx = 0; kx < K.w; ++kx, ++tap) {
        int xlo, xhi;
        valid_range(O.w, I.w, 1, P.w, kx, xlo, xhi);
        if (xlo >= xhi) continue;
        for (int oz = 0; oz < O.d; ++oz) {
          const int iz = oz - P.d + kz;
          if (iz < 0 || iz >= I.d) continue;
          for (int oy = 0; oy < O.h; ++oy) {
            const int iy = oy - P.h + ky;
            if (iy < 0 || iy >= I.h) continue;
            const std::size_t orow = (static_cast<std::size_t>(oz) * O.h + oy) * O.w + xlo;
            const std::size_t irow = (static_cast<std::size_t>(iz) * I.h + iy) * I.w + (xlo - P.w + kx);
            f(tap, orow, irow, xhi - xlo);
          }
        }
      }
}

template <typename T>
Tensor<T> Conv<T>::forward_direct(const Tensor<T>& x) {
  Tensor<T> y(x.n, cout_, geom_.cols);
  const std::size_t ip = geom_.image.volume(), op = geom_.cols.volume();
  const int taps = geom_.taps();
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout_; ++co) {
      T* yc = y.sample(i) + co * op;
      std::fill_n(yc, op, b_.value[co]);
      for (int ci = 0; ci < cin_; ++ci) {
        const T* xc = x.sample(i) + ci * ip;
        const T* w = w_.value.data() + (static_cast<std::size_t>(co) * cin_ + ci) * taps;
        for_each_tap_row([&](int tap, std::size_t orow, std::size_t irow, int len) {
          const T wt = w[tap];
          T* d = yc + orow;
          const T* s = xc + irow;
          for (int k = 0; k < len; ++k) d[k] += wt * s[k];
        });
      }
    }
  return y;
}

template <typename T>
Tensor<T> Conv<T>::backward_direct(const Tensor<T>& dy, const Context& ctx) {
  Tensor<T> dx(x_.n, cin_, x_.s);
  const std::size_t ip = geom_.image.volume(), op = geom_.cols.volume();
  const int taps = geom_.taps();
  for (int i = 0; i < dy.n; ++i)
    for (int co = 0; co < cout_; ++co) {
      const T* g = dy.sample(i) + co * op;
      if (ctx.param_grads) {
        T acc = 0;
        for (std::size_t k = 0; k < op; ++k) acc += g[k];
        b_.grad[co] += acc;
      }
      for (int ci = 0; ci < cin_; ++ci) {
        const T* xc = x_.sample(i) + ci * ip;
        T* dxc = dx.sample(i) + ci * ip;
        const std::size_t wo = (static_cast<std::size_t>(co) * cin_ + ci) * taps;
        const T* w = w_.value.data() + wo;
        T* dw = ctx.param_grads ? w_.grad.data() + wo : nullptr;
        for_each_tap_row([&](int tap, std::size_t orow, std::size_t irow, int len) {
          const T wt = w[tap];
          const T* gr = g + orow;
          T* d = dxc + irow;
          for (int k = 0; k < len; ++k) d[k] += wt * gr[k];
          if (dw) {
            const T* s = xc + irow;
            T acc = 0;
            for (int k = 0; k < len; ++k) acc += gr[k] * s[k];
            dw[tap] += acc;
          }
        });
      }
    }
  return dx;
}

template <typename T>
void Conv<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---------------------------------------------------------------------------

template <typename T>
ConvTranspose<T>::ConvTranspose(std::string name, int in_channels, int out_channels, Extent kernel,
                                Extent stride)
    : cin_(in_channels), cout_(out_channels), kernel_(kernel), stride_(stride) {
  const int taps = static_cast<int>(kernel.volume());
  std::vector<int> shape{cin_, cout_};
  if (kernel.d > 1) shape.push_back(kernel.d);
  shape.push_back(kernel.h);
  shape.push_back(kernel.w);
  w_ = Param<T>{name + ".weight", shape, Buffer<T>(static_cast<std::size_t>(cout_) * cin_ * taps), {}, true};
  b_ = Param<T>{name + ".bias", {cout_}, Buffer<T>(static_cast<std::size_t>(cout_)), {}, true};
}

template <typename T>
Tensor<T> ConvTranspose<T>::forward(const Tensor<T>& x, const Context&) {
  if (x.c != cin_) throw ShapeError("transposed conv expects " + std::to_string(cin_) + " channels");
  geom_ = same_upsample(x.s, kernel_, stride_);
  x_ = x;
  Tensor<T> y(x.n, cout_, geom_.image);
  const std::size_t p = geom_.cols.volume();
  const auto ck = static_cast<Eigen::Index>(cout_ * geom_.taps());
  const int g = group_size(p, x.n);
  Buffer<T> xb(static_cast<std::size_t>(cin_) * g * p), cols(static_cast<std::size_t>(ck) * g * p);
  CMapM<T> W(w_.value.data(), cin_, ck);
  for (int n0 = 0; n0 < x.n; n0 += g) {
    const int gn = std::min(g, x.n - n0);
    const std::size_t ld = static_cast<std::size_t>(gn) * p;
    const auto eld = static_cast<Eigen::Index>(ld);
    gather(x, n0, gn, xb.data());
    MapM<T>(cols.data(), ck, eld).noalias() = W.transpose() * CMapM<T>(xb.data(), cin_, eld);
    for (int j = 0; j < gn; ++j) col2im(cols.data() + j * p, cout_, geom_, y.sample(n0 + j), ld);
  }
  const std::size_t q = geom_.image.volume();
  for (int i = 0; i < y.n; ++i)
    for (int co = 0; co < cout_; ++co) {
      T* d = y.sample(i) + static_cast<std::size_t>(co) * q;
      const T b = b_.value[co];
      for (std::size_t k = 0; k < q; ++k) d[k] += b;
    }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  Tensor<T> dx(x_.n, cin_, x_.s);
  const std::size_t p = geom_.cols.volume();
  const auto ck = static_cast<Eigen::Index>(cout_ * geom_.taps());
  const int g = group_size(p, x_.n);
  Buffer<T> xb(static_cast<std::size_t>(cin_) * g * p), cols(static_cast<std::size_t>(ck) * g * p);
  CMapM<T> W(w_.value.data(), cin_, ck);
  MapM<T> dW(w_.grad.data(), cin_, ck);
  for (int n0 = 0; n0 < x_.n; n0 += g) {
    const int gn = std::min(g, x_.n - n0);
    const std::size_t ld = static_cast<std::size_t>(gn) * p;
    const auto eld = static_cast<Eigen::Index>(ld);
    for (int j = 0; j < gn; ++j) im2col(dy.sample(n0 + j), cout_, geom_, cols.data() + j * p, ld);
    CMapM<T> C(cols.data(), ck, eld);
    MapM<T> X(xb.data(), cin_, eld);
    if (ctx.param_grads) {
      gather(x_, n0, gn, xb.data());
      dW.noalias() += X * C.transpose();
    }
    X.noalias() = W * C;
    scatter(xb.data(), n0, gn, dx);
  }
  if (ctx.param_grads) {
    const std::size_t q = geom_.image.volume();
    for (int i = 0; i < dy.n; ++i)
      for (int co = 0; co < cout_; ++co) {
        const T* d = dy.sample(i) + static_cast<std::size_t>(co) * q;
        T acc = 0;
        for (std::size_t k = 0; k < q; ++k) acc += d[k];
        b_.grad[co] += acc;
      }
  }
  return dx;
}

template <typename T>
void ConvTranspose<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, int channels, double momentum, double eps)
    : c_(channels), momentum_(momentum), eps_(eps) {
  const auto n = static_cast<std::size_t>(channels);
  gamma_ = Param<T>{name + ".gamma", {channels}, Buffer<T>(n, T(1)), {}, true};
  beta_ = Param<T>{name + ".beta", {channels}, Buffer<T>(n, T(0)), {}, true};
  mean_ = Param<T>{name + ".running_mean", {channels}, Buffer<T>(n, T(0)), {}, false};
  var_ = Param<T>{name + ".running_var", {channels}, Buffer<T>(n, T(1)), {}, false};
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, const Context& ctx) {
  if (x.c != c_) throw ShapeError("batchnorm channel mismatch");
  Tensor<T> y(x.n, x.c, x.s);
  const std::size_t p = x.s.volume();
  const double m = static_cast<double>(x.n) * static_cast<double>(p);
  train_cache_ = ctx.mode == Mode::Train;
  if (train_cache_) {
    xhat_ = Tensor<T>(x.n, x.c, x.s);
    inv_std_.assign(static_cast<std::size_t>(c_), T(0));
  }
  for (int ch = 0; ch < c_; ++ch) {
    double mean, var;
    if (train_cache_) {
      double s = 0;
      for (int i = 0; i < x.n; ++i) {
        const T* d = x.sample(i) + ch * p;
        for (std::size_t k = 0; k < p; ++k) s += d[k];
      }
      mean = s / m;
      double ss = 0;
      for (int i = 0; i < x.n; ++i) {
        const T* d = x.sample(i) + ch * p;
        for (std::size_t k = 0; k < p; ++k) {
          const double e = d[k] - mean;
          ss += e * e;
        }
      }
      var = ss / m;
      if (ctx.update_stats) {
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        mean_.value[ch] = static_cast<T>(momentum_ * mean_.value[ch] + (1 - momentum_) * mean);
        var_.value[ch] = static_cast<T>(momentum_ * var_.value[ch] + (1 - momentum_) * unbiased);
      }
    } else {
      mean = mean_.value[ch];
      var = var_.value[ch];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    const T mu = static_cast<T>(mean);
    const T g = gamma_.value[ch], b = beta_.value[ch];
    if (train_cache_) inv_std_[ch] = inv;
    for (int i = 0; i < x.n; ++i) {
      const T* d = x.sample(i) + ch * p;
      T* o = y.sample(i) + ch * p;
      T* h = train_cache_ ? xhat_.sample(i) + ch * p : nullptr;
      for (std::size_t k = 0; k < p; ++k) {
        const T xh = (d[k] - mu) * inv;
        if (h) h[k] = xh;
        o[k] = g * xh + b;
      }
    }
  }
  if (!train_cache_) {
    // keep running-statistic inverse std for inference-mode backward
    inv_std_.resize(static_cast<std::size_t>(c_));
    for (int ch = 0; ch < c_; ++ch)
      inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var_.value[ch]) + eps_));
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  Tensor<T> dx(dy.n, dy.c, dy.s);
  const std::size_t p = dy.s.volume();
  const double m = static_cast<double>(dy.n) * static_cast<double>(p);
  for (int ch = 0; ch < c_; ++ch) {
    const T g = gamma_.value[ch];
    const T inv = inv_std_[ch];
    if (!train_cache_) {
      for (int i = 0; i < dy.n; ++i) {
        const T* d = dy.sample(i) + ch * p;
        T* o = dx.sample(i) + ch * p;
        for (std::size_t k = 0; k < p; ++k) o[k] = d[k] * g * inv;
      }
      continue;
    }
    double sdy = 0, sdyx = 0;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.sample(i) + ch * p;
      const T* h = xhat_.sample(i) + ch * p;
      for (std::size_t k = 0; k < p; ++k) {
        sdy += d[k];
        sdyx += static_cast<double>(d[k]) * h[k];
      }
    }
    if (ctx.param_grads) {
      gamma_.grad[ch] += static_cast<T>(sdyx);
      beta_.grad[ch] += static_cast<T>(sdy);
    }
    const T scale = static_cast<T>(g * inv / m);
    const T a = static_cast<T>(sdy), bx = static_cast<T>(sdyx), mm = static_cast<T>(m);
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.sample(i) + ch * p;
      const T* h = xhat_.sample(i) + ch * p;
      T* o = dx.sample(i) + ch * p;
      for (std::size_t k = 0; k < p; ++k) o[k] = scale * (mm * d[k] - a - h[k] * bx);
    }
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&mean_);
  out.push_back(&var_);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Act<T>::forward(const Tensor<T>& x, const Context&) {
  Tensor<T> y(x.n, x.c, x.s);
  const std::size_t n = x.v.size();
  switch (kind_) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < n; ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
      cache_ = x;
      break;
    case Activation::LeakyReLU:
      for (std::size_t i = 0; i < n; ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : alpha_ * x.v[i];
      cache_ = x;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < n; ++i) y.v[i] = std::tanh(x.v[i]);
      cache_ = y;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        const T v = x.v[i];
        if (v >= T(0)) {
          y.v[i] = T(1) / (T(1) + std::exp(-v));
        } else {
          const T e = std::exp(v);
          y.v[i] = e / (T(1) + e);
        }
      }
      cache_ = y;
      break;
  }
  return y;
}

template <typename T>
Tensor<T> Act<T>::backward(const Tensor<T>& dy, const Context&) {
  Tensor<T> dx(dy.n, dy.c, dy.s);
  const std::size_t n = dy.v.size();
  const auto& c = cache_.v;
  switch (kind_) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < n; ++i) dx.v[i] = c[i] > T(0) ? dy.v[i] : T(0);
      break;
    case Activation::LeakyReLU:
      for (std::size_t i = 0; i < n; ++i) dx.v[i] = c[i] > T(0) ? dy.v[i] : alpha_ * dy.v[i];
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < n; ++i) dx.v[i] = dy.v[i] * (T(1) - c[i] * c[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx.v[i] = dy.v[i] * c[i] * (T(1) - c[i]);
      break;
  }
  return dx;
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const Context& ctx) {
  if (ctx.mode != Mode::Train || rate_ <= 0.0) {
    mask_.clear();
    return x;
  }
  if (!ctx.rng) throw Error("dropout in training mode needs an rng");
  Tensor<T> y(x.n, x.c, x.s);
  mask_.resize(x.v.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
  // Each 64-bit draw yields two 32-bit uniforms.
  constexpr double kInv32 = 1.0 / 4294967296.0;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    if (i % 2 == 0) bits = (*ctx.rng)();
    const double u = static_cast<double>(i % 2 == 0 ? bits & 0xffffffffu : bits >> 32) * kInv32;
    mask_[i] = u < rate_ ? T(0) : keep_scale;
    y.v[i] = x.v[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy, const Context&) {
  if (mask_.empty()) return dy;
  Tensor<T> dx(dy.n, dy.c, dy.s);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = dy.v[i] * mask_[i];
  return dx;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const Context& ctx) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front()->forward(x, ctx);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, ctx);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  Tensor<T> g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, ctx);
  return g;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) l->collect(out);
  return out;
}

#define TEXSYN_INSTANTIATE(T)                                                               \
  template void im2col<T>(const T*, int, const ConvGeometry&, T*, std::size_t);             \
  template void col2im<T>(const T*, int, const ConvGeometry&, T*, std::size_t);             \
  template class Dense<T>;                                                                  \
  template class Conv<T>;                                                                   \
  template class ConvTranspose<T>;                                                          \
  template class BatchNorm<T>;                                                              \
  template class Act<T>;                                                                    \
  template class Dropout<T>;                                                                \
  template class Sequential<T>;

TEXSYN_INSTANTIATE(float)
TEXSYN_INSTANTIATE(double)

#undef TEXSYN_INSTANTIATE

}  // namespace texsyn::nn
