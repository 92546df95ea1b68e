#include "affgrasp/nets/network.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "affgrasp/error.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::nets {

namespace k = kernels;

namespace {

std::atomic<std::uint64_t> g_next_instance{1};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  out.erase(std::remove(out.begin(), out.end(), '_'), out.end());
  out.erase(std::remove(out.begin(), out.end(), '-'), out.end());
  return out;
}

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidArgument, "bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::EncDec: return "ENC_DEC";
    case ArchKind::UNet: return "UNET";
    case ArchKind::ResUNet: return "RES_UNET";
  }
  return "UNKNOWN";
}

ArchKind parse_arch(std::string_view name) {
  const std::string n = lower(name);
  if (n == "encdec") return ArchKind::EncDec;
  if (n == "unet") return ArchKind::UNet;
  if (n == "resunet") return ArchKind::ResUNet;
  throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + std::string(name) + "'");
}

void NetworkSpec::validate() const {
  if (stages < 1 || convs_per_stage < 1) throw Error(ErrorCode::InvalidArgument, "stages and convs_per_stage must be >= 1");
  if (static_cast<int>(stage_widths.size()) != stages) {
    throw Error(ErrorCode::InvalidArgument, "need one width per stage");
  }
  for (std::size_t s = 0; s < stage_widths.size(); ++s) {
    if (stage_widths[s] <= 0 || (s > 0 && stage_widths[s] < stage_widths[s - 1])) {
      throw Error(ErrorCode::InvalidArgument, "stage widths must be positive and nondecreasing");
    }
  }
  if (input_resolution <= 0 || input_resolution % (1 << stages) != 0) {
    throw Error(ErrorCode::ShapeError, "resolution " + std::to_string(input_resolution) + " is not divisible by 2^" +
                                           std::to_string(stages));
  }
}

std::string NetworkSpec::to_text() const {
  std::ostringstream out;
  out << "kind=" << to_string(kind) << ";stages=" << stages << ";convs_per_stage=" << convs_per_stage << ";widths=";
  for (std::size_t s = 0; s < stage_widths.size(); ++s) out << (s ? "," : "") << stage_widths[s];
  out << ";resolution=" << input_resolution;
  return out.str();
}

NetworkSpec NetworkSpec::from_text(std::string_view text) {
  NetworkSpec spec;
  spec.stage_widths.clear();
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "malformed spec item");
    const auto key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "kind") {
      spec.kind = parse_arch(value);
    } else if (key == "stages") {
      spec.stages = parse_int(value, key);
    } else if (key == "convs_per_stage") {
      spec.convs_per_stage = parse_int(value, key);
    } else if (key == "resolution") {
      spec.input_resolution = parse_int(value, key);
    } else if (key == "widths") {
      std::size_t p = 0;
      while (p <= value.size()) {
        auto c = value.find(',', p);
        if (c == std::string_view::npos) c = value.size();
        spec.stage_widths.push_back(parse_int(value.substr(p, c - p), key));
        p = c + 1;
      }
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown spec key '" + std::string(key) + "'");
    }
    pos = end + 1;
  }
  spec.validate();
  return spec;
}

Layout make_layout(const NetworkSpec& spec) {
  spec.validate();
  Layout layout;
  layout.concat_skips = spec.kind != ArchKind::EncDec;
  const bool residual = spec.kind == ArchKind::ResUNet;
  int next = 0;
  auto conv_bn = [&](int cin, int cout, int ksize) {
    ConvBnRef r;
    r.cin = cin;
    r.cout = cout;
    r.ksize = ksize;
    r.weight = next++;
    r.bias = next++;
    r.gamma = next++;
    r.beta = next++;
    r.running_mean = next++;
    r.running_var = next++;
    return r;
  };
  auto stage = [&](int cin, int mid, int cout) {
    StageRef st;
    st.cin = cin;
    st.cout = cout;
    st.residual = residual;
    for (int j = 0; j < spec.convs_per_stage; ++j) {
      const int in = j == 0 ? cin : mid;
      const int out = j + 1 == spec.convs_per_stage ? cout : mid;
      st.convs.push_back(conv_bn(in, out, 3));
    }
    if (residual && cin != cout) st.projection = conv_bn(cin, cout, 1);
    return st;
  };

  const auto& w = spec.stage_widths;
  for (int s = 0; s < spec.stages; ++s) {
    layout.encoder.push_back(stage(s == 0 ? 1 : w[s - 1], w[s], w[s]));
  }
  layout.decoder.resize(spec.stages);
  for (int s = spec.stages - 1; s >= 0; --s) {
    const int cin = w[s] + (layout.concat_skips ? w[s] : 0);
    const int cout = s > 0 ? w[s - 1] : w[0];
    layout.decoder[s] = stage(cin, w[s], cout);
  }
  layout.head_cin = w[0];
  layout.head_weight = next++;
  layout.head_bias = next++;
  return layout;
}

// ---- Parameters -------------------------------------------------------------------------

template <typename T>
Parameters<T>::Parameters() : instance_(g_next_instance.fetch_add(1)) {}

template <typename T>
Parameters<T>::Parameters(const Parameters& other)
    : spec(other.spec),
      layout(other.layout),
      tensors(other.tensors),
      instance_(g_next_instance.fetch_add(1)),
      version_(other.version_) {}

template <typename T>
Parameters<T>& Parameters<T>::operator=(const Parameters& other) {
  if (this != &other) {
    spec = other.spec;
    layout = other.layout;
    tensors = other.tensors;
    instance_ = g_next_instance.fetch_add(1);
    version_ = other.version_;
  }
  return *this;
}

template <typename T>
std::size_t Parameters<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (t.trainable) n += t.values.size();
  }
  return n;
}

template <typename T>
template <typename U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out;
  out.spec = spec;
  out.layout = layout;
  for (const auto& t : tensors) {
    ParamTensor<U> u{t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end()), t.trainable};
    out.tensors.push_back(std::move(u));
  }
  return out;
}

template <typename T>
Parameters<T> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  Parameters<T> p;
  p.spec = spec;
  p.layout = make_layout(spec);
  Rng rng(mix_seed(seed, 0xC0));
  std::normal_distribution<double> normal(0.0, 1.0);

  auto add = [&](std::string name, std::vector<int> shape, bool trainable) -> ParamTensor<T>& {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    p.tensors.push_back({std::move(name), std::move(shape), std::vector<T>(count, T(0)), trainable});
    return p.tensors.back();
  };
  auto conv_bn = [&](const ConvBnRef& r, const std::string& name) {
    const int k3 = r.ksize * r.ksize * r.ksize;
    auto& wt = add(name + ".weight", {r.cout, r.cin, r.ksize, r.ksize, r.ksize}, true);
    const double stddev = std::sqrt(2.0 / (r.cin * k3));
    for (auto& v : wt.values) v = static_cast<T>(stddev * normal(rng));
    add(name + ".bias", {r.cout}, true);
    auto& gamma = add(name + ".bn_scale", {r.cout}, true);
    std::fill(gamma.values.begin(), gamma.values.end(), T(1));
    add(name + ".bn_shift", {r.cout}, true);
    add(name + ".bn_running_mean", {r.cout}, false);
    auto& var = add(name + ".bn_running_var", {r.cout}, false);
    std::fill(var.values.begin(), var.values.end(), T(1));
  };
  auto stage = [&](const StageRef& st, const std::string& name) {
    for (std::size_t j = 0; j < st.convs.size(); ++j) conv_bn(st.convs[j], name + ".conv" + std::to_string(j));
    if (st.projection) conv_bn(*st.projection, name + ".shortcut");
  };
  // Creation order must match the index assignment in make_layout.
  for (std::size_t s = 0; s < p.layout.encoder.size(); ++s) stage(p.layout.encoder[s], "enc" + std::to_string(s));
  for (int s = static_cast<int>(p.layout.decoder.size()) - 1; s >= 0; --s) {
    stage(p.layout.decoder[s], "dec" + std::to_string(s));
  }
  auto& head = add("head.weight", {1, p.layout.head_cin, 1, 1, 1}, true);
  const double stddev = std::sqrt(2.0 / p.layout.head_cin);
  for (auto& v : head.values) v = static_cast<T>(stddev * normal(rng));
  add("head.bias", {1}, true);
  return p;
}

// ---- forward / backward -----------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> conv_bn_forward(const Parameters<T>& p, const ConvBnRef& r, const Tensor<T>& x, Mode mode,
                          ConvBnCache<T>* cache) {
  Tensor<T> conv = k::conv3d_forward(x, p.view(r.weight), p.view(r.bias), r.cout, r.ksize);
  if (mode == Mode::Infer) {
    return k::batchnorm_forward_infer(conv, p.view(r.gamma), p.view(r.beta), p.view(r.running_mean),
                                      p.view(r.running_var));
  }
  k::BatchNormCache<T> bn;
  Tensor<T> y = k::batchnorm_forward_train(conv, p.view(r.gamma), p.view(r.beta), bn);
  if (cache) {
    cache->input = x;
    cache->bn = std::move(bn);
  }
  return y;
}

template <typename T>
void accumulate(std::vector<T>& into, const std::vector<T>& g) {
  if (into.empty()) into.assign(g.size(), T(0));
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

template <typename T>
Tensor<T> conv_bn_backward(const Parameters<T>& p, const ConvBnRef& r, const ConvBnCache<T>& cache,
                           const Tensor<T>& dy, Gradients<T>& grads, bool need_dx) {
  auto bn = k::batchnorm_backward(cache.bn, p.view(r.gamma), dy);
  accumulate(grads[r.gamma], bn.dgamma);
  accumulate(grads[r.beta], bn.dbeta);
  auto conv = k::conv3d_backward(cache.input, p.view(r.weight), bn.dx, r.ksize, need_dx);
  accumulate(grads[r.weight], conv.dweight);
  accumulate(grads[r.bias], conv.dbias);
  return std::move(conv.dx);
}

template <typename T>
Tensor<T> stage_forward(const Parameters<T>& p, const StageRef& st, const Tensor<T>& x, Mode mode,
                        StageCache<T>* cache) {
  if (cache) {
    cache->convs.resize(st.convs.size());
    cache->activations.clear();
  }
  Tensor<T> h = x;
  const std::size_t plain = st.residual ? st.convs.size() - 1 : st.convs.size();
  for (std::size_t j = 0; j < plain; ++j) {
    h = conv_bn_forward(p, st.convs[j], h, mode, cache ? &cache->convs[j] : nullptr);
    k::relu_inplace(h);
    if (cache) cache->activations.push_back(h);
  }
  if (st.residual) {
    Tensor<T> main = conv_bn_forward(p, st.convs.back(), h, mode, cache ? &cache->convs.back() : nullptr);
    if (st.projection) {
      if (cache) cache->projection.emplace();
      k::add_inplace(main, conv_bn_forward(p, *st.projection, x, mode, cache ? &*cache->projection : nullptr));
    } else {
      k::add_inplace(main, x);
    }
    k::relu_inplace(main);
    h = std::move(main);
  }
  if (cache) cache->output = h;
  return h;
}

template <typename T>
Tensor<T> stage_backward(const Parameters<T>& p, const StageRef& st, const StageCache<T>& cache,
                         const Tensor<T>& dout, Gradients<T>& grads, bool need_dx) {
  if (!st.residual) {
    Tensor<T> g = dout;
    for (int j = static_cast<int>(st.convs.size()) - 1; j >= 0; --j) {
      g = k::relu_backward(cache.activations[j], g);
      g = conv_bn_backward(p, st.convs[j], cache.convs[j], g, grads, need_dx || j > 0);
    }
    return g;
  }
  const Tensor<T> ds = k::relu_backward(cache.output, dout);
  Tensor<T> g = conv_bn_backward(p, st.convs.back(), cache.convs.back(), ds, grads, need_dx || st.convs.size() > 1);
  for (int j = static_cast<int>(st.convs.size()) - 2; j >= 0; --j) {
    g = k::relu_backward(cache.activations[j], g);
    g = conv_bn_backward(p, st.convs[j], cache.convs[j], g, grads, need_dx || j > 0);
  }
  if (!need_dx) {
    if (st.projection) conv_bn_backward(p, *st.projection, *cache.projection, ds, grads, false);
    return {};
  }
  if (st.projection) {
    k::add_inplace(g, conv_bn_backward(p, *st.projection, *cache.projection, ds, grads, true));
  } else {
    k::add_inplace(g, ds);
  }
  return g;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Parameters<T>& p, const Tensor<T>& input, Mode mode) {
  const int r = p.spec.input_resolution;
  if (input.c != 1 || input.d != r || input.h != r || input.w != r || input.n < 1) {
    throw Error(ErrorCode::ShapeError, "network expects (n,1," + std::to_string(r) + "," + std::to_string(r) + "," +
                                           std::to_string(r) + "), got " + input.shape_string());
  }
  const Layout& L = p.layout;
  const int stages = static_cast<int>(L.encoder.size());
  ForwardResult<T> result;
  ForwardCache<T>* cache = nullptr;
  if (mode == Mode::Train) {
    result.cache.emplace();
    cache = &*result.cache;
    cache->instance = p.instance();
    cache->version = p.version();
    cache->encoder.resize(stages);
    cache->decoder.resize(stages);
    cache->pool_argmax.resize(stages);
    cache->decoder_up_channels.assign(stages, 0);
  }

  std::vector<Tensor<T>> skips(stages);
  Tensor<T> h = input;
  for (int s = 0; s < stages; ++s) {
    skips[s] = stage_forward(p, L.encoder[s], h, mode, cache ? &cache->encoder[s] : nullptr);
    std::vector<std::uint32_t> argmax;
    h = k::maxpool3d_forward(skips[s], argmax);
    if (cache) cache->pool_argmax[s] = std::move(argmax);
  }
  for (int s = stages - 1; s >= 0; --s) {
    Tensor<T> u = k::upsample3d_forward(h);
    if (cache) cache->decoder_up_channels[s] = u.c;
    if (L.concat_skips) u = k::concat_channels(u, skips[s]);
    h = stage_forward(p, L.decoder[s], u, mode, cache ? &cache->decoder[s] : nullptr);
  }
  Tensor<T> logits = k::conv3d_forward(h, p.view(L.head_weight), p.view(L.head_bias), 1, 1);
  k::sigmoid_inplace(logits);
  if (cache) {
    cache->head_input = std::move(h);
    cache->probabilities = logits;
  }
  result.probabilities = std::move(logits);
  return result;
}

template <typename T>
Gradients<T> backward(const Parameters<T>& p, const ForwardCache<T>& cache, const Tensor<T>& dprob) {
  if (cache.instance != p.instance() || cache.version != p.version()) {
    throw Error(ErrorCode::CacheMismatch, "forward cache does not belong to the current parameters");
  }
  if (!cache.probabilities.same_shape(dprob)) {
    throw Error(ErrorCode::ShapeError, "loss gradient shape " + dprob.shape_string() + " does not match output");
  }
  const Layout& L = p.layout;
  const int stages = static_cast<int>(L.encoder.size());
  Gradients<T> grads(p.tensors.size());

  Tensor<T> dlogit = dprob;
  for (std::size_t i = 0; i < dlogit.size(); ++i) {
    const T q = cache.probabilities.data[i];
    dlogit.data[i] *= q * (T(1) - q);
  }
  auto head = k::conv3d_backward(cache.head_input, p.view(L.head_weight), dlogit, 1, true);
  accumulate(grads[L.head_weight], head.dweight);
  accumulate(grads[L.head_bias], head.dbias);

  std::vector<Tensor<T>> dskips(stages);
  Tensor<T> dh = std::move(head.dx);
  for (int s = 0; s < stages; ++s) {
    Tensor<T> du = stage_backward(p, L.decoder[s], cache.decoder[s], dh, grads, true);
    if (L.concat_skips) {
      Tensor<T> dup;
      k::split_channels(du, cache.decoder_up_channels[s], dup, dskips[s]);
      du = std::move(dup);
    }
    dh = k::upsample3d_backward(du);
  }
  for (int s = stages - 1; s >= 0; --s) {
    const Tensor<T>& e = cache.encoder[s].output;
    Tensor<T> de = k::maxpool3d_backward(dh, cache.pool_argmax[s], e.n, e.c, e.d, e.h, e.w);
    if (L.concat_skips) k::add_inplace(de, dskips[s]);
    dh = stage_backward(p, L.encoder[s], cache.encoder[s], de, grads, s > 0);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (p.tensors[i].trainable && grads[i].empty()) grads[i].assign(p.tensors[i].values.size(), T(0));
  }
  return grads;
}

template <typename T>
void update_running_stats(Parameters<T>& p, const ForwardCache<T>& cache, double momentum) {
  auto update = [&](const ConvBnRef& r, const ConvBnCache<T>& c) {
    auto rm = p.view(r.running_mean);
    auto rv = p.view(r.running_var);
    for (int ch = 0; ch < r.cout; ++ch) {
      rm[ch] = static_cast<T>(momentum * rm[ch] + (1.0 - momentum) * c.bn.mean[ch]);
      rv[ch] = static_cast<T>(momentum * rv[ch] + (1.0 - momentum) * c.bn.var[ch]);
    }
  };
  auto stage = [&](const StageRef& st, const StageCache<T>& sc) {
    for (std::size_t j = 0; j < st.convs.size(); ++j) update(st.convs[j], sc.convs[j]);
    if (st.projection) update(*st.projection, *sc.projection);
  };
  for (std::size_t s = 0; s < p.layout.encoder.size(); ++s) stage(p.layout.encoder[s], cache.encoder[s]);
  for (std::size_t s = 0; s < p.layout.decoder.size(); ++s) stage(p.layout.decoder[s], cache.decoder[s]);
}

template <typename T>
Tensor<T> stack_grids(std::span<const geom::VoxelGrid> grids) {
  if (grids.empty()) throw Error(ErrorCode::EmptyInput, "no grids to stack");
  const int r = grids[0].resolution;
  Tensor<T> t(static_cast<int>(grids.size()), 1, r, r, r);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i].resolution != r) throw Error(ErrorCode::ShapeError, "grids differ in resolution");
    std::transform(grids[i].values.begin(), grids[i].values.end(), t.plane(static_cast<int>(i), 0),
                   [](double v) { return static_cast<T>(v); });
  }
  return t;
}

std::vector<std::uint8_t> predict_point_labels(const Parameters<float>& params, const geom::PointCloud& cloud,
                                               double threshold) {
  const int r = params.spec.input_resolution;
  const auto normalized = geom::normalize_cloud(cloud, r);
  std::vector<geom::VoxelGrid> grid{geom::voxelize(normalized.cloud, r, normalized.transform)};
  const auto out = forward(params, stack_grids<float>(grid), Mode::Infer);
  geom::VoxelGrid prob(r, normalized.transform);
  std::copy(out.probabilities.data.begin(), out.probabilities.data.end(), prob.values.begin());
  return geom::voxel_mask_to_point_labels(cloud, prob, threshold);
}

#define AFFGRASP_INSTANTIATE_NETWORK(T)                                                          \
  template class Parameters<T>;                                                                 \
  template Parameters<T> build_network<T>(const NetworkSpec&, std::uint64_t);                   \
  template ForwardResult<T> forward(const Parameters<T>&, const Tensor<T>&, Mode);              \
  template Gradients<T> backward(const Parameters<T>&, const ForwardCache<T>&, const Tensor<T>&); \
  template void update_running_stats(Parameters<T>&, const ForwardCache<T>&, double);           \
  template Tensor<T> stack_grids<T>(std::span<const geom::VoxelGrid>);

AFFGRASP_INSTANTIATE_NETWORK(float)
AFFGRASP_INSTANTIATE_NETWORK(double)

template Parameters<double> Parameters<float>::cast<double>() const;
template Parameters<float> Parameters<double>::cast<float>() const;

}  // namespace affgrasp::nets
