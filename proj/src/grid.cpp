#include "texsyn/grid.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "texsyn/error.hpp"

namespace texsyn {

std::size_t product(std::span<const int> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::vector<std::size_t> strides_of(std::span<const int> dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (int a = static_cast<int>(dims.size()) - 2; a >= 0; --a)
    s[a] = s[a + 1] * static_cast<std::size_t>(dims[a + 1]);
  return s;
}

TextureGrid::TextureGrid(std::vector<int> dims, std::vector<float> data, ValueDomain domain,
                         int foreground)
    : dims_(std::move(dims)), data_(std::move(data)), domain_(domain), foreground_(foreground) {
  if (dims_.size() != 2 && dims_.size() != 3)
    throw ShapeError("texture grid must have 2 or 3 dims, got " + std::to_string(dims_.size()));
  for (int d : dims_)
    if (d <= 0) throw ShapeError("texture grid dims must be positive");
  if (product(dims_) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match dims product " + std::to_string(product(dims_)));
  if (domain_ == ValueDomain::Binary01) {
    for (float v : data_)
      if (v != 0.0f && v != 1.0f) throw DomainError("Binary01 grid holds a value other than 0/1");
  } else {
    for (float v : data_)
      if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
        throw DomainError("ModelRange grid holds a value outside [-1, 1]");
  }
}

TextureGrid TextureGrid::filled(std::vector<int> dims, float value, ValueDomain domain) {
  const std::size_t n = product(dims);
  return TextureGrid(std::move(dims), std::vector<float>(n, value), domain);
}

TextureGrid to_model_range(const TextureGrid& grid) {
  if (grid.domain() != ValueDomain::Binary01)
    throw DomainError("to_model_range expects a Binary01 grid");
  std::vector<float> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid[i] > 0.5f ? 1.0f : -1.0f;
  return TextureGrid(grid.dims(), std::move(out), ValueDomain::ModelRange, grid.foreground());
}

TextureGrid binarize(const TextureGrid& grid, double threshold) {
  if (!std::isfinite(threshold)) throw DomainError("binarize threshold must be finite");
  if (grid.domain() != ValueDomain::ModelRange)
    throw DomainError("binarize expects a ModelRange grid");
  std::vector<float> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(grid[i]) > threshold ? 1.0f : 0.0f;
  return TextureGrid(grid.dims(), std::move(out), ValueDomain::Binary01, grid.foreground());
}

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

}  // namespace

TextureGrid load_texture(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".sgrd") return read_sgrd(path);
  throw FormatError(path.string() + ": unrecognized extension '" + ext + "' (expected .png or .sgrd)");
}

void save_texture(const TextureGrid& grid, const std::filesystem::path& path) {
  if (grid.domain() != ValueDomain::Binary01)
    throw DomainError("save_texture expects a Binary01 grid; binarize first");
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(grid, path);
  if (ext == ".sgrd") return write_sgrd(grid, path);
  throw FormatError(path.string() + ": unrecognized extension '" + ext + "' (expected .png or .sgrd)");
}

}  // namespace texsyn
