#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace texsyn {

enum class ValueDomain { Binary01, ModelRange };

/// Dense 2D or 3D scalar grid in row-major order.
///
/// Axis order is (row, col) for 2D and (depth, row, col) for 3D. Binary01
/// grids hold exactly {0, 1}; ModelRange grids hold finite values in [-1, 1]
/// (the range of the generator's tanh output). Grids are immutable once
/// constructed.
class TextureGrid {
 public:
  TextureGrid() = default;
  TextureGrid(std::vector<int> dims, std::vector<float> data, ValueDomain domain,
              int foreground = 1);

  static TextureGrid filled(std::vector<int> dims, float value, ValueDomain domain);

  const std::vector<int>& dims() const noexcept { return dims_; }
  int ndim() const noexcept { return static_cast<int>(dims_.size()); }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const float> data() const noexcept { return data_; }
  ValueDomain domain() const noexcept { return domain_; }
  int foreground() const noexcept { return foreground_; }

  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// True when cell `i` belongs to the declared foreground phase (Binary01 only).
  bool is_foreground(std::size_t i) const noexcept {
    return static_cast<int>(data_[i]) == foreground_;
  }

  friend bool operator==(const TextureGrid&, const TextureGrid&) = default;

 private:
  std::vector<int> dims_;
  std::vector<float> data_;
  ValueDomain domain_ = ValueDomain::Binary01;
  int foreground_ = 1;
};

std::size_t product(std::span<const int> dims);

/// Row-major strides for `dims`.
std::vector<std::size_t> strides_of(std::span<const int> dims);

/// Loads a grayscale PNG (2D) or SGRD file (2D/3D), chosen by extension.
TextureGrid load_texture(const std::filesystem::path& path);

/// Writes a Binary01 grid as PNG (2D only) or SGRD, chosen by extension.
void save_texture(const TextureGrid& grid, const std::filesystem::path& path);

TextureGrid to_model_range(const TextureGrid& grid);

/// value > threshold -> 1, else 0.
TextureGrid binarize(const TextureGrid& grid, double threshold = 0.0);

// Format-specific entry points.
TextureGrid read_png(const std::filesystem::path& path);
void write_png(const TextureGrid& grid, const std::filesystem::path& path);
TextureGrid read_sgrd(const std::filesystem::path& path);
void write_sgrd(const TextureGrid& grid, const std::filesystem::path& path);

/// float32 NumPy array of any grid; used for raw (unbinarized) generator output.
void write_npy(const TextureGrid& grid, const std::filesystem::path& path);

}  // namespace texsyn
