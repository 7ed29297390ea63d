#include "ddpolab/models.hpp"

#include <cmath>
#include <stdexcept>

#include "ddpolab/layers.hpp"
#include "ddpolab/rng.hpp"

namespace ddpolab::nn {

bool ModelParams::has(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw std::invalid_argument("no parameter \"" + name + "\" in " + arch);
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw std::invalid_argument("no parameter \"" + name + "\" in " + arch);
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

const Tensor& GradSet::at(const std::string& name) const {
  for (const auto& [gname, g] : grads) {
    if (gname == name) return g;
  }
  throw std::invalid_argument("no gradient \"" + name + "\"");
}

bool GradSet::all_finite() const {
  for (const auto& [gname, g] : grads) {
    if (!g.all_finite()) return false;
  }
  return true;
}

std::size_t GradSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [gname, g] : grads) n += g.size();
  return n;
}

namespace {

ArchSpec make_denoiser16_spec() {
  return {kDenoiser16,
          {1, 16, 16},
          {{"cond.w", {16, kCondDim}},
           {"cond.b", {16}},
           {"conv1.w", {16, 1, 3, 3}},
           {"conv1.b", {16}},
           {"conv2.w", {32, 16, 3, 3}},
           {"conv2.b", {32}},
           {"conv3.w", {16, 32, 3, 3}},
           {"conv3.b", {16}},
           {"conv4.w", {1, 16, 3, 3}},
           {"conv4.b", {1}}}};
}

ArchSpec make_classifier16_spec() {
  return {kClassifier16,
          {1, 16, 16},
          {{"conv1.w", {16, 1, 3, 3}},
           {"conv1.b", {16}},
           {"conv2.w", {32, 16, 3, 3}},
           {"conv2.b", {32}},
           {"fc1.w", {32, 512}},
           {"fc1.b", {32}},
           {"fc2.w", {6, 32}},
           {"fc2.b", {6}}}};
}

ArchSpec make_toydenoiser2_spec() {
  return {kToyDenoiser2,
          {1, 2, 2},
          {{"cond.w", {1, kCondDim}},
           {"cond.b", {1}},
           {"conv.w", {1, 1, 3, 3}},
           {"conv.b", {1}}}};
}

ArchSpec make_toyclassifier4_spec() {
  return {kToyClassifier4,
          {1, 4, 4},
          {{"conv1.w", {2, 1, 3, 3}},
           {"conv1.b", {2}},
           {"fc2.w", {6, 8}},
           {"fc2.b", {6}}}};
}

}  // namespace

const ArchSpec& arch_spec(const std::string& arch) {
  static const ArchSpec denoiser16 = make_denoiser16_spec();
  static const ArchSpec classifier16 = make_classifier16_spec();
  static const ArchSpec toydenoiser2 = make_toydenoiser2_spec();
  static const ArchSpec toyclassifier4 = make_toyclassifier4_spec();
  if (arch == kDenoiser16) return denoiser16;
  if (arch == kClassifier16) return classifier16;
  if (arch == kToyDenoiser2) return toydenoiser2;
  if (arch == kToyClassifier4) return toyclassifier4;
  throw std::invalid_argument("unknown architecture \"" + arch + "\"");
}

bool is_denoiser_arch(const std::string& arch) {
  return arch == kDenoiser16 || arch == kToyDenoiser2;
}

bool is_classifier_arch(const std::string& arch) {
  return arch == kClassifier16 || arch == kToyClassifier4;
}

ModelParams init_params(const std::string& arch, std::uint64_t seed) {
  const ArchSpec& spec = arch_spec(arch);
  Rng rng(stage_seed(seed, "init/" + arch));
  ModelParams p;
  p.arch = arch;
  for (const auto& [name, shape] : spec.params) {
    Tensor t = Tensor::zeros(shape);
    const bool is_weight = name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    if (is_weight) {
      // fan-in: all extents past the first
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= static_cast<std::size_t>(shape[i]);
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>(rng.normal() * std_dev);
      }
    }
    p.entries.push_back({name, std::move(t)});
  }
  return p;
}

void validate_params(const ModelParams& params) {
  const ArchSpec& spec = arch_spec(params.arch);
  if (params.entries.size() != spec.params.size()) {
    throw std::invalid_argument(params.arch + ": expected " +
                                std::to_string(spec.params.size()) + " parameters, have " +
                                std::to_string(params.entries.size()));
  }
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    const auto& [name, shape] = spec.params[i];
    const auto& e = params.entries[i];
    if (e.name != name) {
      throw std::invalid_argument(params.arch + ": parameter " + std::to_string(i) +
                                  " is \"" + e.name + "\", expected \"" + name + "\"");
    }
    if (e.value.shape() != shape) {
      throw std::invalid_argument(params.arch + ": parameter \"" + name + "\" has shape " +
                                  e.value.shape_str() + ", expected " +
                                  Tensor::zeros(shape).shape_str());
    }
  }
}

Tensor cond_vector(int t, const AttributeVector& c) {
  if (!c.valid()) throw std::invalid_argument("cond_vector: invalid attribute vector");
  Tensor emb = time_embedding(t, kTimeEmbedDim);
  Tensor out = Tensor::zeros({kCondDim});
  for (int i = 0; i < kTimeEmbedDim; ++i) out[i] = emb[i];
  for (int i = 0; i < kNumAttributes; ++i) {
    out[kTimeEmbedDim + i] = static_cast<float>(c.bits[i]);
  }
  return out;
}

namespace {

// The two execution contexts share the network definitions below, so the
// pure sampling path and the taped training path are the same arithmetic.
struct PureCtx {
  using Var = Tensor;
  const ModelParams& p;

  const Tensor& param(const std::string& name) const { return p.at(name); }
  const Tensor& input(const Tensor& t) const { return t; }
  Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b) const {
    return conv3x3(x, w, b);
  }
  Tensor aff(const Tensor& x, const Tensor& w, const Tensor& b) const { return affine(x, w, b); }
  Tensor act(const Tensor& x) const { return silu(x); }
  Tensor sum(const Tensor& a, const Tensor& b) const { return add(a, b); }
  Tensor cbias(const Tensor& x, const Tensor& b) const { return channel_bias(x, b); }
  Tensor down2(const Tensor& x) const { return nearest_down2(x); }
  Tensor up2(const Tensor& x) const { return nearest_up2(x); }
  Tensor pool2(const Tensor& x) const { return avgpool2(x); }
  Tensor flat(const Tensor& x) const {
    return reshape(x, {static_cast<int>(x.size())});
  }
};

struct TapeCtx {
  using Var = VarId;
  Tape& tape;
  const TapedParams& tp;

  VarId param(const std::string& name) const { return tp.id(name); }
  VarId input(const Tensor& t) const { return tape.leaf(t); }
  VarId conv(VarId x, VarId w, VarId b) const { return tape.conv3x3(x, w, b); }
  VarId aff(VarId x, VarId w, VarId b) const { return tape.affine(x, w, b); }
  VarId act(VarId x) const { return tape.silu(x); }
  VarId sum(VarId a, VarId b) const { return tape.add(a, b); }
  VarId cbias(VarId x, VarId b) const { return tape.channel_bias(x, b); }
  VarId down2(VarId x) const { return tape.nearest_down2(x); }
  VarId up2(VarId x) const { return tape.nearest_up2(x); }
  VarId pool2(VarId x) const { return tape.avgpool2(x); }
  VarId flat(VarId x) const { return tape.flatten(x); }
};

template <class C>
typename C::Var denoiser16_net(C& c, typename C::Var x, const Tensor& cond) {
  auto cb = c.aff(c.input(cond), c.param("cond.w"), c.param("cond.b"));
  auto e1 = c.act(c.cbias(c.conv(x, c.param("conv1.w"), c.param("conv1.b")), cb));
  auto e2 = c.act(c.conv(c.down2(e1), c.param("conv2.w"), c.param("conv2.b")));
  auto mid = c.sum(c.up2(c.down2(e2)), e2);
  auto d2 = c.act(c.conv(mid, c.param("conv3.w"), c.param("conv3.b")));
  auto d1 = c.sum(c.up2(d2), e1);
  return c.conv(d1, c.param("conv4.w"), c.param("conv4.b"));
}

template <class C>
typename C::Var toydenoiser2_net(C& c, typename C::Var x, const Tensor& cond) {
  auto cb = c.aff(c.input(cond), c.param("cond.w"), c.param("cond.b"));
  return c.cbias(c.conv(x, c.param("conv.w"), c.param("conv.b")), cb);
}

template <class C>
typename C::Var denoiser_net(C& c, const std::string& arch, typename C::Var x,
                             const Tensor& cond) {
  if (arch == kDenoiser16) return denoiser16_net(c, x, cond);
  if (arch == kToyDenoiser2) return toydenoiser2_net(c, x, cond);
  throw std::invalid_argument("\"" + arch + "\" is not a denoiser architecture");
}

template <class C>
std::pair<typename C::Var, typename C::Var> classifier16_net(C& c, typename C::Var x) {
  auto h1 = c.pool2(c.act(c.conv(x, c.param("conv1.w"), c.param("conv1.b"))));
  auto h2 = c.pool2(c.act(c.conv(h1, c.param("conv2.w"), c.param("conv2.b"))));
  auto f = c.act(c.aff(c.flat(h2), c.param("fc1.w"), c.param("fc1.b")));
  auto z = c.aff(f, c.param("fc2.w"), c.param("fc2.b"));
  return {z, f};
}

template <class C>
std::pair<typename C::Var, typename C::Var> toyclassifier4_net(C& c, typename C::Var x) {
  auto h = c.pool2(c.act(c.conv(x, c.param("conv1.w"), c.param("conv1.b"))));
  auto f = c.flat(h);
  auto z = c.aff(f, c.param("fc2.w"), c.param("fc2.b"));
  return {z, f};
}

template <class C>
std::pair<typename C::Var, typename C::Var> classifier_net(C& c, const std::string& arch,
                                                           typename C::Var x) {
  if (arch == kClassifier16) return classifier16_net(c, x);
  if (arch == kToyClassifier4) return toyclassifier4_net(c, x);
  throw std::invalid_argument("\"" + arch + "\" is not a classifier architecture");
}

}  // namespace

namespace {

void check_image_shape(const std::string& arch, const Tensor& x, const char* what) {
  const ArchSpec& spec = arch_spec(arch);
  if (x.shape() != spec.image_shape) {
    throw std::invalid_argument(std::string(what) + ": input " + x.shape_str() +
                                " does not match " + arch);
  }
}

}  // namespace

Tensor denoiser_forward(const ModelParams& params, const Tensor& x_t, int t,
                        const AttributeVector& c) {
  check_image_shape(params.arch, x_t, "denoiser_forward");
  check_finite(x_t, "denoiser_forward input");
  PureCtx ctx{params};
  Tensor out = denoiser_net(ctx, params.arch, x_t, cond_vector(t, c));
  check_finite(out, "denoiser_forward output");
  return out;
}

VarId taped_denoiser_forward(Tape& tape, const TapedParams& tp, const std::string& arch,
                             VarId x_t, int t, const AttributeVector& c) {
  check_image_shape(arch, tape.value(x_t), "taped_denoiser_forward");
  TapeCtx ctx{tape, tp};
  return denoiser_net(ctx, arch, x_t, cond_vector(t, c));
}

ClassifierOut classifier_forward(const ModelParams& params, const Tensor& x) {
  if (!is_classifier_arch(params.arch)) {
    throw std::invalid_argument("classifier_forward: params are \"" + params.arch + "\"");
  }
  check_image_shape(params.arch, x, "classifier_forward");
  check_finite(x, "classifier_forward input");
  PureCtx ctx{params};
  auto [z, f] = classifier_net(ctx, params.arch, x);
  check_finite(z, "classifier logits");
  return {std::move(z), std::move(f)};
}

VarId taped_classifier_logits(Tape& tape, const TapedParams& tp, const std::string& arch,
                              VarId x) {
  check_image_shape(arch, tape.value(x), "taped_classifier_logits");
  TapeCtx ctx{tape, tp};
  return classifier_net(ctx, arch, x).first;
}

}  // namespace ddpolab::nn
