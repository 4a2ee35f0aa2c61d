#include "texsyn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "texsyn/error.hpp"

namespace texsyn::nn {

namespace {

constexpr char kMagic[4] = {'T', 'X', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string where) : b_(bytes), where_(std::move(where)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* field) {
    need(n * 4, field);
    out.resize(n);
    std::memcpy(out.data(), b_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (b_.size() - pos_ < n) throw FormatError(where_ + "truncated " + field);
  }
  const std::string& b_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

NetParams Checkpoint::group(const std::string& prefix) const {
  NetParams out;
  for (const auto& t : tensors)
    if (t.name.starts_with(prefix)) out.push_back(NamedTensor{t.name.substr(prefix.size()), t.shape, t.data});
  return out;
}

void Checkpoint::add_group(const std::string& prefix, const NetParams& params) {
  for (const auto& t : params) tensors.push_back(NamedTensor{prefix + t.name, t.shape, t.data});
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  const std::string meta = ckpt.meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t count = 1;
    for (int d : t.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != t.data.size()) throw ShapeError("tensor '" + t.name + "' data does not match its shape");
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(tmp.string() + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, path.string() + ": ");
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw FormatError(path.string() + ": bad checkpoint magic");
  const auto version = r.u32("version");
  if (version != kVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = r.u32("metadata length");
  ckpt.meta = nlohmann::json::parse(r.str(meta_len, "metadata"));
  const auto count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u32("name length"), "name");
    const auto nd = r.u32("ndim");
    std::size_t n = 1;
    for (std::uint32_t a = 0; a < nd; ++a) {
      t.shape.push_back(static_cast<int>(r.u32("dims")));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    r.floats(t.data, n, "tensor data");
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes after last tensor");
  return ckpt;
}

}  // namespace texsyn::nn
