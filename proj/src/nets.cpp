#include "texsyn/nets.hpp"

#include <algorithm>
#include <sstream>

#include "texsyn/error.hpp"

namespace texsyn::nn {

namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "x" : "") << v[i];
  return os.str();
}

Extent axis_extent(const std::vector<int>& per_axis, int ndim) {
  return ndim == 2 ? Extent{1, per_axis[0], per_axis[1]} : Extent{per_axis[0], per_axis[1], per_axis[2]};
}

void check_axes(const std::vector<int>& v, int ndim, const char* what) {
  if (static_cast<int>(v.size()) != ndim)
    throw SpecError(std::string(what) + " must have one entry per spatial axis (" + std::to_string(ndim) + ")");
  for (int x : v)
    if (x < 1) throw SpecError(std::string(what) + " entries must be >= 1");
}

std::vector<int> axes_from_json(const nlohmann::json& j, int ndim) {
  if (j.is_number_integer()) return std::vector<int>(static_cast<std::size_t>(ndim), j.get<int>());
  return j.get<std::vector<int>>();
}

// Deterministic initialization: weights ~ N(0, std), biases and beta zero,
// gamma one, running statistics (0, 1).
template <typename T>
void initialize(const std::vector<Param<T>*>& params, double init_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Param<T>* p : params) {
    p->grad.assign(p->value.size(), T(0));
    const bool is_weight = p->name.size() > 7 && p->name.ends_with(".weight");
    if (!is_weight) continue;
    std::normal_distribution<double> normal(0.0, init_std);
    for (auto& v : p->value) v = static_cast<T>(normal(rng));
  }
}

}  // namespace

std::vector<int> GeneratorSpec::scale() const {
  std::vector<int> s(stride.size(), 1);
  for (std::size_t a = 0; a < stride.size(); ++a)
    for (int l = 0; l < depth(); ++l) s[a] *= stride[a];
  return s;
}

std::vector<int> GeneratorSpec::output_dims_for(const std::vector<int>& lattice) const {
  const auto s = scale();
  std::vector<int> out(lattice.size());
  for (std::size_t a = 0; a < lattice.size(); ++a) out[a] = lattice[a] * s[a];
  return out;
}

std::vector<int> GeneratorSpec::output_dims() const { return output_dims_for(lattice_dims); }

void GeneratorSpec::validate() const {
  if (ndim() != 2 && ndim() != 3) throw SpecError("generator lattice must be 2D or 3D");
  for (int d : lattice_dims)
    if (d < 1) throw SpecError("generator lattice dims must be positive");
  if (filters.empty()) throw SpecError("generator needs at least one up-convolution layer");
  for (int f : filters)
    if (f < 1) throw SpecError("generator filter counts must be positive");
  check_axes(kernel, ndim(), "generator kernel");
  check_axes(stride, ndim(), "generator stride");
  for (int a = 0; a < ndim(); ++a)
    if (kernel[a] < stride[a]) throw SpecError("generator kernel must be >= stride on every axis");
  if (latent_mode == LatentMode::Fc && latent_dim < 1) throw SpecError("latent_dim must be positive");
  if (lattice_channels < 0) throw SpecError("lattice_channels must be non-negative");
  if (!(batchnorm_momentum >= 0.0 && batchnorm_momentum < 1.0))
    throw SpecError("batchnorm momentum must lie in [0, 1)");
  if (!(init_std > 0.0)) throw SpecError("init_std must be positive");
}

std::vector<std::vector<int>> DiscriminatorSpec::feature_dims() const {
  std::vector<std::vector<int>> out;
  std::vector<int> cur = input_dims;
  for (std::size_t l = 0; l < filters.size(); ++l) {
    for (std::size_t a = 0; a < cur.size(); ++a) cur[a] = (cur[a] + stride[a] - 1) / stride[a];
    out.push_back(cur);
  }
  return out;
}

void DiscriminatorSpec::validate() const {
  if (ndim() != 2 && ndim() != 3) throw SpecError("discriminator input must be 2D or 3D");
  for (int d : input_dims)
    if (d < 1) throw SpecError("discriminator input dims must be positive");
  if (filters.empty()) throw SpecError("discriminator needs at least one conv layer");
  for (int f : filters)
    if (f < 1) throw SpecError("discriminator filter counts must be positive");
  check_axes(kernel, ndim(), "discriminator kernel");
  check_axes(stride, ndim(), "discriminator stride");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw SpecError("dropout rate must lie in [0, 1)");
  if (!(batchnorm_momentum >= 0.0 && batchnorm_momentum < 1.0))
    throw SpecError("batchnorm momentum must lie in [0, 1)");
  if (!(init_std > 0.0)) throw SpecError("init_std must be positive");
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = nlohmann::json{{"latent_dim", s.latent_dim},
                     {"latent_mode", s.latent_mode == LatentMode::Fc ? "fc" : "direct"},
                     {"lattice", s.lattice_dims},
                     {"lattice_channels", s.lattice_channels},
                     {"filters", s.filters},
                     {"kernel", s.kernel},
                     {"stride", s.stride},
                     {"batchnorm", s.use_batchnorm},
                     {"batchnorm_momentum", s.batchnorm_momentum},
                     {"init_std", s.init_std}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  s = GeneratorSpec{};
  s.lattice_dims = j.at("lattice").get<std::vector<int>>();
  s.filters = j.at("filters").get<std::vector<int>>();
  const int nd = static_cast<int>(s.lattice_dims.size());
  s.latent_dim = j.value("latent_dim", 100);
  const std::string mode = j.value("latent_mode", std::string("direct"));
  if (mode == "fc") {
    s.latent_mode = LatentMode::Fc;
  } else if (mode == "direct") {
    s.latent_mode = LatentMode::Direct;
  } else {
    throw SpecError("latent_mode must be 'fc' or 'direct', got '" + mode + "'");
  }
  s.lattice_channels = j.value("lattice_channels", 0);
  s.kernel = axes_from_json(j.value("kernel", nlohmann::json(nd == 3 ? 3 : 5)), nd);
  s.stride = axes_from_json(j.value("stride", nlohmann::json(2)), nd);
  s.use_batchnorm = j.value("batchnorm", true);
  s.batchnorm_momentum = j.value("batchnorm_momentum", 0.8);
  s.init_std = j.value("init_std", 0.02);
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = nlohmann::json{{"input_dims", s.input_dims},
                     {"filters", s.filters},
                     {"kernel", s.kernel},
                     {"stride", s.stride},
                     {"dropout", s.dropout_rate},
                     {"batchnorm", s.use_batchnorm},
                     {"batchnorm_momentum", s.batchnorm_momentum},
                     {"init_std", s.init_std}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  s = DiscriminatorSpec{};
  s.input_dims = j.at("input_dims").get<std::vector<int>>();
  s.filters = j.at("filters").get<std::vector<int>>();
  const int nd = static_cast<int>(s.input_dims.size());
  s.kernel = axes_from_json(j.value("kernel", nlohmann::json(nd == 3 ? 3 : 5)), nd);
  s.stride = axes_from_json(j.value("stride", nlohmann::json(2)), nd);
  s.dropout_rate = j.value("dropout", 0.25);
  s.use_batchnorm = j.value("batchnorm", true);
  s.batchnorm_momentum = j.value("batchnorm_momentum", 0.8);
  s.init_std = j.value("init_std", 0.02);
}

std::vector<int> projective_field(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<int> pf(static_cast<std::size_t>(spec.ndim()), 1);
  for (int a = 0; a < spec.ndim(); ++a) {
    for (int l = 0; l < spec.depth(); ++l) pf[a] = (pf[a] - 1) * spec.stride[a] + spec.kernel[a];
    pf[a] = pf[a] - 1 + spec.kernel[a];
  }
  return pf;
}

std::string projective_field_warning(const GeneratorSpec& spec, const std::vector<int>& segment_dims) {
  const auto pf = projective_field(spec);
  if (segment_dims.size() != pf.size()) return {};
  for (std::size_t a = 0; a < pf.size(); ++a)
    if (segment_dims[a] < 2 * pf[a])
      return "segment " + join(segment_dims) + " holds fewer than two projective fields (" + join(pf) +
             ") along axis " + std::to_string(a);
  return {};
}

// ---------------------------------------------------------------------------

template <typename T>
Generator<T>::Generator(GeneratorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  build();
  initialize(params(), spec_.init_std, seed);
}

template <typename T>
Generator<T>::Generator(GeneratorSpec spec, const NetParams& params) : spec_(std::move(spec)) {
  spec_.validate();
  build();
  import_params(this->params(), params);
}

template <typename T>
void Generator<T>::build() {
  const int nd = spec_.ndim();
  const Extent kernel = axis_extent(spec_.kernel, nd);
  const Extent stride = axis_extent(spec_.stride, nd);
  const int d = spec_.channels();
  if (spec_.latent_mode == LatentMode::Fc) {
    head_.add(std::make_unique<Dense<T>>("fc", spec_.latent_dim, d, to_extent(spec_.lattice_dims)));
    head_.add(std::make_unique<Act<T>>(Activation::ReLU));
  }
  int in = d;
  for (int l = 0; l < spec_.depth(); ++l) {
    const int out = spec_.filters[l];
    body_.add(std::make_unique<ConvTranspose<T>>("up" + std::to_string(l), in, out, kernel, stride));
    if (spec_.use_batchnorm)
      body_.add(std::make_unique<BatchNorm<T>>("bn" + std::to_string(l), out, spec_.batchnorm_momentum));
    body_.add(std::make_unique<Act<T>>(Activation::ReLU));
    in = out;
  }
  body_.add(std::make_unique<Conv<T>>("out", in, 1, kernel, Extent{1, 1, 1}));
  body_.add(std::make_unique<Act<T>>(Activation::Tanh));
}

template <typename T>
Tensor<T> Generator<T>::sample_lattice(int n, const std::vector<int>& lattice, std::mt19937_64& rng) const {
  Tensor<T> z(n, spec_.channels(), to_extent(lattice));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : z.v) v = static_cast<T>(normal(rng));
  return z;
}

template <typename T>
Tensor<T> Generator<T>::sample_input(int n, std::mt19937_64& rng) const {
  if (spec_.latent_mode == LatentMode::Direct) return sample_lattice(n, spec_.lattice_dims, rng);
  Tensor<T> z(n, spec_.latent_dim, Extent{});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : z.v) v = static_cast<T>(normal(rng));
  return z;
}

template <typename T>
Tensor<T> Generator<T>::head(const Tensor<T>& z, const Context& ctx) {
  if (spec_.latent_mode != LatentMode::Fc) throw SpecError("generator has no fully connected head");
  return head_.forward(z, ctx);
}

template <typename T>
Tensor<T> Generator<T>::body(const Tensor<T>& lattice, const Context& ctx) {
  if (lattice.c != spec_.channels())
    throw ShapeError("latent lattice has " + std::to_string(lattice.c) + " channels, expected " +
                     std::to_string(spec_.channels()));
  return body_.forward(lattice, ctx);
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& input, const Context& ctx) {
  if (spec_.latent_mode == LatentMode::Fc) {
    if (static_cast<int>(input.per_sample()) != spec_.latent_dim)
      throw ShapeError("latent vectors must have length " + std::to_string(spec_.latent_dim));
    return body(head_.forward(input, ctx), ctx);
  }
  return body(input, ctx);
}

template <typename T>
Tensor<T> Generator<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  Tensor<T> g = body_.backward(dy, ctx);
  if (spec_.latent_mode == LatentMode::Fc) g = head_.backward(g, ctx);
  return g;
}

template <typename T>
std::vector<Param<T>*> Generator<T>::params() {
  auto out = head_.params();
  auto b = body_.params();
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

template <typename T>
NetParams Generator<T>::export_params() {
  return nn::export_params(params());
}

template <typename T>
void Generator<T>::zero_grad() {
  for (auto* p : params()) p->grad.assign(p->value.size(), T(0));
}

// ---------------------------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  build();
  initialize(params(), spec_.init_std, seed);
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorSpec spec, const NetParams& params) : spec_(std::move(spec)) {
  spec_.validate();
  build();
  import_params(this->params(), params);
}

template <typename T>
void Discriminator<T>::build() {
  const int nd = spec_.ndim();
  const Extent kernel = axis_extent(spec_.kernel, nd);
  const Extent stride = axis_extent(spec_.stride, nd);
  int in = 1;
  for (std::size_t l = 0; l < spec_.filters.size(); ++l) {
    const int out = spec_.filters[l];
    net_.add(std::make_unique<Conv<T>>("conv" + std::to_string(l), in, out, kernel, stride));
    if (spec_.use_batchnorm && l > 0)
      net_.add(std::make_unique<BatchNorm<T>>("bn" + std::to_string(l), out, spec_.batchnorm_momentum));
    net_.add(std::make_unique<Act<T>>(Activation::LeakyReLU, T(0.2)));
    net_.add(std::make_unique<Dropout<T>>(spec_.dropout_rate));
    in = out;
  }
  const auto last = to_extent(spec_.feature_dims().back());
  net_.add(std::make_unique<Dense<T>>("fc", in * static_cast<int>(last.volume()), 1, Extent{}));
  net_.add(std::make_unique<Act<T>>(Activation::Sigmoid));
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& x, const Context& ctx) {
  if (x.c != 1 || x.s != to_extent(spec_.input_dims))
    throw ShapeError("discriminator expects single-channel input of dims " + join(spec_.input_dims));
  return net_.forward(x, ctx);
}

template <typename T>
Tensor<T> Discriminator<T>::backward(const Tensor<T>& dy, const Context& ctx) {
  return net_.backward(dy, ctx);
}

template <typename T>
std::vector<Param<T>*> Discriminator<T>::params() {
  return net_.params();
}

template <typename T>
NetParams Discriminator<T>::export_params() {
  return nn::export_params(params());
}

template <typename T>
void Discriminator<T>::zero_grad() {
  for (auto* p : params()) p->grad.assign(p->value.size(), T(0));
}

// ---------------------------------------------------------------------------

template <typename T>
void import_params(const std::vector<Param<T>*>& dst, const NetParams& params) {
  for (Param<T>* p : dst) {
    const auto it = std::find_if(params.begin(), params.end(),
                                 [&](const NamedTensor& t) { return t.name == p->name; });
    if (it == params.end()) throw ShapeError("missing parameter '" + p->name + "'");
    if (it->shape != p->shape)
      throw ShapeError("parameter '" + p->name + "' has shape " + join(it->shape) + ", expected " +
                       join(p->shape));
    p->value.assign(it->data.begin(), it->data.end());
    p->grad.assign(p->value.size(), T(0));
  }
}

template <typename T>
NetParams export_params(const std::vector<Param<T>*>& src) {
  NetParams out;
  out.reserve(src.size());
  for (const Param<T>* p : src)
    out.push_back(NamedTensor{p->name, p->shape, std::vector<float>(p->value.begin(), p->value.end())});
  return out;
}

NetParams build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  return Generator<float>(spec, seed).export_params();
}

NetParams build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  return Discriminator<float>(spec, seed).export_params();
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template void import_params<float>(const std::vector<Param<float>*>&, const NetParams&);
template void import_params<double>(const std::vector<Param<double>*>&, const NetParams&);
template NetParams export_params<float>(const std::vector<Param<float>*>&);
template NetParams export_params<double>(const std::vector<Param<double>*>&);

}  // namespace texsyn::nn
