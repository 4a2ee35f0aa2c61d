#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace texsyn::nn {

/// 64-byte aligned allocator. Vectorized kernels pick their loop peeling from
/// pointer alignment, so a fixed alignment keeps floating-point summation
/// order (and therefore results) independent of where buffers land in memory.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// Spatial extent; 2D data uses d == 1.
struct Extent {
  int d = 1, h = 1, w = 1;

  std::size_t volume() const noexcept {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Maps 2- or 3-entry dims (row-major axis order) onto an Extent.
Extent to_extent(std::span<const int> dims);
std::vector<int> to_dims(const Extent& e, int ndim);

/// Batch tensor laid out [n][c][d][h][w].
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  Extent s;
  Buffer<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, Extent s_)
      : n(n_), c(c_), s(s_), v(static_cast<std::size_t>(n_) * c_ * s_.volume(), T(0)) {}

  std::size_t per_sample() const noexcept { return static_cast<std::size_t>(c) * s.volume(); }
  T* sample(int i) noexcept { return v.data() + static_cast<std::size_t>(i) * per_sample(); }
  const T* sample(int i) const noexcept { return v.data() + static_cast<std::size_t>(i) * per_sample(); }
};

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;
  /// Buffers (batchnorm running statistics) are serialized but not optimized.
  bool trainable = true;
};

enum class Mode { Train, Infer };

/// Per-call execution options. Dropout draws its masks from `rng`.
struct Context {
  Mode mode = Mode::Infer;
  std::mt19937_64* rng = nullptr;
  bool update_stats = true;
  bool param_grads = true;
};

/// Serializable parameter tensor (always float32 on disk).
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using NetParams = std::vector<NamedTensor>;

}  // namespace texsyn::nn
