#include "mssp/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "mssp/rng.hpp"

namespace mssp {

using layers::Mode;

template <typename T>
void ParamMap<T>::insert(std::string name, Tensor<T> value) {
  if (contains(name)) throw ShapeError("duplicate tensor name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
const Tensor<T>* ParamMap<T>::find(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
Tensor<T>* ParamMap<T>::find(std::string_view name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
const Tensor<T>& ParamMap<T>::get(std::string_view name) const {
  if (const Tensor<T>* t = find(name)) return *t;
  throw ShapeError("missing tensor '" + std::string(name) + "'");
}

template <typename T>
Tensor<T>& ParamMap<T>::get(std::string_view name) {
  if (Tensor<T>* t = find(name)) return *t;
  throw ShapeError("missing tensor '" + std::string(name) + "'");
}

template class ParamMap<float>;
template class ParamMap<double>;

bool is_learnable(std::string_view name) {
  return !name.ends_with(".running_mean") && !name.ends_with(".running_var");
}

SpPool parse_sp_pool(std::string_view text) {
  if (text == "avg") return SpPool::avg;
  if (text == "max") return SpPool::max;
  throw ConfigError("sp_pool must be 'avg' or 'max', got '" + std::string(text) + "'");
}

std::string_view to_string(SpPool pool) { return pool == SpPool::avg ? "avg" : "max"; }

namespace {

constexpr std::size_t kTrunkChannels[] = {kInputChannels, 32, 64, 128};
constexpr std::size_t kBranchChannels = 32;
constexpr std::size_t kFuseChannels = 64;
constexpr std::size_t kPooledExtent = kPatchSize / 2;

std::string trunk_name(std::size_t i) { return "conv3_" + std::to_string(i + 1); }
std::string trunk_bn_name(std::size_t i) { return "bn3_" + std::to_string(i + 1); }
std::string branch_conv_name(std::size_t i) { return "conv1_" + std::to_string(i + 1); }
std::string branch_deconv_name(std::size_t i) { return "deconv_" + std::to_string(i + 1); }

void add_conv(std::vector<RosterEntry>& r, const std::string& name, std::size_t k, std::size_t cin,
              std::size_t cout) {
  r.push_back({name + ".weight", {k, k, cin, cout}});
  r.push_back({name + ".bias", {cout}});
}

void add_bn(std::vector<RosterEntry>& r, const std::string& name, std::size_t c) {
  r.push_back({name + ".gamma", {c}});
  r.push_back({name + ".beta", {c}});
  r.push_back({name + ".running_mean", {c}});
  r.push_back({name + ".running_var", {c}});
}

}  // namespace

std::vector<RosterEntry> model_roster(const ModelConfig& config) {
  std::vector<RosterEntry> r;
  add_bn(r, "bn_in", kInputChannels);
  for (std::size_t i = 0; i < 3; ++i) {
    add_conv(r, trunk_name(i), 3, kTrunkChannels[i], kTrunkChannels[i + 1]);
    if (config.conv_bn) add_bn(r, trunk_bn_name(i), kTrunkChannels[i + 1]);
  }
  for (std::size_t i = 0; i < kBranchScales.size(); ++i) {
    add_conv(r, branch_conv_name(i), 1, kTrunkChannels[3], kBranchChannels);
    // Upsampling stride brings the (16 / s)-sized pooled map back to 16×16.
    add_conv(r, branch_deconv_name(i), kBranchScales[i], kBranchChannels, kBranchChannels);
  }
  const std::size_t concat_channels = kBranchScales.size() * kBranchChannels + kTrunkChannels[3];
  add_conv(r, "conv3_4", 3, concat_channels, kFuseChannels);
  if (config.conv_bn) add_bn(r, "bn3_4", kFuseChannels);
  add_conv(r, "conv1_5", 1, kFuseChannels, kClasses);
  add_conv(r, "deconv_5", 2, kClasses, kClasses);
  return r;
}

std::size_t learnable_parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const RosterEntry& e : model_roster(config)) {
    if (!is_learnable(e.name)) continue;
    std::size_t n = 1;
    for (std::size_t d : e.dims) n *= d;
    total += n;
  }
  return total;
}

ModelParams<float> init_params(std::uint64_t seed, const ModelConfig& config) {
  Rng rng = make_rng(seed, "init");
  ModelParams<float> params;
  for (RosterEntry& e : model_roster(config)) {
    Tensor<float> t(e.dims);
    const std::string_view name = e.name;
    if (name.ends_with(".weight")) {
      // Convolutions: fan_in = k·k·Cin. Stride-k transposed convolutions feed
      // each output pixel from exactly Cin inputs, so fan_in = Cin.
      const bool deconv = name.starts_with("deconv_");
      const double fan_in = deconv ? static_cast<double>(e.dims[2])
                                   : static_cast<double>(e.dims[0] * e.dims[1] * e.dims[2]);
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
      for (float& v : t.data()) v = static_cast<float>(normal(rng));
    } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      t.fill(1.0f);
    }
    params.insert(std::move(e.name), std::move(t));
  }
  return params;
}

template <typename T>
void validate_roster(const ModelParams<T>& params, const ModelConfig& config) {
  const std::vector<RosterEntry> roster = model_roster(config);
  for (const auto& [name, t] : params) {
    bool known = false;
    for (const RosterEntry& e : roster) known = known || e.name == name;
    if (!known) throw ShapeError("unexpected tensor '" + name + "'");
  }
  for (const RosterEntry& e : roster) {
    const Tensor<T>* t = params.find(e.name);
    if (!t) throw ShapeError("missing tensor '" + e.name + "'");
    if (t->dims() != e.dims) {
      throw ShapeError("tensor '" + e.name + "' has dims " + dims_to_string(t->dims()) +
                       ", expected " + dims_to_string(e.dims));
    }
  }
}

namespace {

template <typename T>
struct Ctx {
  const ModelParams<T>& params;
  const ModelConfig& config;
  Mode mode;
  ParamMap<T>* updates = nullptr;                  // forward only
  std::map<std::string, Tensor<T>>* grads = nullptr;  // backward only

  const Tensor<T>& p(const std::string& name) const { return params.get(name); }
};

template <typename T>
layers::BatchNormResult<T> run_bn(Ctx<T>& ctx, const std::string& bn, const Tensor<T>& x) {
  layers::RunningStats<T> stats{ctx.p(bn + ".running_mean"), ctx.p(bn + ".running_var")};
  auto r = layers::batchnorm_forward(x, ctx.p(bn + ".gamma"), ctx.p(bn + ".beta"), stats, ctx.mode,
                                     static_cast<T>(ctx.config.bn_momentum),
                                     static_cast<T>(ctx.config.bn_epsilon));
  if (ctx.mode == Mode::train) {
    ctx.updates->insert(bn + ".running_mean", r.running.mean);
    ctx.updates->insert(bn + ".running_var", r.running.var);
  }
  return r;
}

template <typename T>
void stash_bn_grads(Ctx<T>& ctx, const std::string& bn, layers::LayerGrads<T>& g) {
  (*ctx.grads)[bn + ".gamma"] = std::move(g.d_params.at("gamma"));
  (*ctx.grads)[bn + ".beta"] = std::move(g.d_params.at("beta"));
}

template <typename T>
void stash_conv_grads(Ctx<T>& ctx, const std::string& conv, layers::LayerGrads<T>& g) {
  (*ctx.grads)[conv + ".weight"] = std::move(g.d_params.at("weight"));
  (*ctx.grads)[conv + ".bias"] = std::move(g.d_params.at("bias"));
}

// conv → optional BN → optional ReLU
template <typename T>
ConvUnitTrace<T> unit_forward(Ctx<T>& ctx, const std::string& conv, const std::string& bn,
                              const Tensor<T>& x, std::size_t padding, bool relu) {
  ConvUnitTrace<T> u;
  Tensor<T> y = layers::conv2d_forward(x, ctx.p(conv + ".weight"), ctx.p(conv + ".bias"), 1, padding);
  if (!bn.empty()) {
    auto r = run_bn(ctx, bn, y);
    u.bn = std::move(r.cache);
    y = std::move(r.output);
  }
  u.output = relu ? layers::relu_forward(y) : std::move(y);
  return u;
}

template <typename T>
Tensor<T> unit_backward(Ctx<T>& ctx, const std::string& conv, const std::string& bn,
                        const Tensor<T>& x, const ConvUnitTrace<T>& u, Tensor<T> d_out,
                        std::size_t padding, bool relu) {
  if (relu) d_out = layers::relu_backward(u.output, d_out);
  if (!bn.empty()) {
    if (!u.bn) throw ShapeError("trace is missing the BN cache for '" + bn + "'");
    auto g = layers::batchnorm_backward(*u.bn, d_out);
    stash_bn_grads(ctx, bn, g);
    d_out = std::move(g.d_input);
  }
  auto g = layers::conv2d_backward(x, ctx.p(conv + ".weight"), d_out, 1, padding);
  stash_conv_grads(ctx, conv, g);
  return std::move(g.d_input);
}

Dims per_sample(const Dims& d) { return Dims(d.begin() + 1, d.end()); }

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Dims>> ForwardTrace<T>::table_rows() const {
  std::vector<std::pair<std::string, Dims>> rows;
  rows.emplace_back("Input", per_sample(input.dims()));
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    rows.emplace_back("Conv-3." + std::to_string(i + 1), per_sample(trunk[i].output.dims()));
  }
  rows.emplace_back("MP-2", per_sample(pooled.dims()));
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& b = branches[i];
    rows.emplace_back("SP-" + std::to_string(b.scale), per_sample(b.pooled.dims()));
    rows.emplace_back("Conv-1." + std::to_string(i + 1), per_sample(b.conv.output.dims()));
    rows.emplace_back("DeConv." + std::to_string(i + 1), per_sample(b.upsampled.dims()));
  }
  rows.emplace_back("Concat", per_sample(concat.dims()));
  rows.emplace_back("Conv-3.4", per_sample(fuse.output.dims()));
  rows.emplace_back("Conv-1.5", per_sample(head.dims()));
  rows.emplace_back("DeConv.5", per_sample(logits.dims()));
  return rows;
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& config,
                         const Tensor<T>& batch, Mode mode) {
  const Dims& d = batch.dims();
  if (d.size() != 4 || d[1] != kPatchSize || d[2] != kPatchSize || d[3] != kInputChannels) {
    throw ShapeError("forward: input must be N x 32 x 32 x 3, got " + dims_to_string(d));
  }
  ForwardResult<T> result;
  ForwardTrace<T>& tr = result.trace;
  Ctx<T> ctx{params, config, mode, &result.running_updates, nullptr};
  tr.mode = mode;
  tr.input = batch;

  auto bn = run_bn(ctx, "bn_in", batch);
  tr.bn_in = std::move(bn.cache);
  tr.bn_in_output = std::move(bn.output);

  const Tensor<T>* x = &tr.bn_in_output;
  for (std::size_t i = 0; i < tr.trunk.size(); ++i) {
    tr.trunk[i] = unit_forward(ctx, trunk_name(i), config.conv_bn ? trunk_bn_name(i) : "", *x, 1, true);
    x = &tr.trunk[i].output;
  }

  auto mp = layers::maxpool_forward(*x, 2, 2);
  tr.pooled = std::move(mp.output);
  tr.pool_cache = std::move(mp.cache);

  std::vector<const Tensor<T>*> parts;
  for (std::size_t i = 0; i < kBranchScales.size(); ++i) {
    BranchTrace<T>& b = tr.branches[i];
    b.scale = kBranchScales[i];
    if (config.sp_pool == SpPool::avg) {
      b.pooled = layers::avgpool_forward(tr.pooled, b.scale);
    } else {
      auto r = layers::maxpool_forward(tr.pooled, b.scale, b.scale);
      b.pooled = std::move(r.output);
      b.pool_cache = std::move(r.cache);
    }
    b.conv = unit_forward(ctx, branch_conv_name(i), "", b.pooled, 0, true);
    const std::string deconv = branch_deconv_name(i);
    b.upsampled = layers::deconv2d_forward(b.conv.output, params.get(deconv + ".weight"),
                                           params.get(deconv + ".bias"), kPooledExtent / b.pooled.dim(1));
    parts.push_back(&b.upsampled);
  }
  parts.push_back(&tr.pooled);
  tr.concat = layers::concat_channels(parts);

  tr.fuse = unit_forward(ctx, "conv3_4", config.conv_bn ? "bn3_4" : "", tr.concat, 1, true);
  tr.head = layers::conv2d_forward(tr.fuse.output, params.get("conv1_5.weight"),
                                   params.get("conv1_5.bias"), 1, 0);
  tr.logits = layers::deconv2d_forward(tr.head, params.get("deconv_5.weight"),
                                       params.get("deconv_5.bias"), 2);
  result.logits = tr.logits;
  return result;
}

template <typename T>
ParamMap<T> backward(const ModelParams<T>& params, const ModelConfig& config,
                     const ForwardTrace<T>& tr, const Tensor<T>& d_logits) {
  if (d_logits.dims() != tr.logits.dims()) {
    throw ShapeError("backward: d_logits dims " + dims_to_string(d_logits.dims()) +
                     " do not match trace logits " + dims_to_string(tr.logits.dims()));
  }
  std::map<std::string, Tensor<T>> staged;
  Ctx<T> ctx{params, config, tr.mode, nullptr, &staged};

  auto g5 = layers::deconv2d_backward(tr.head, params.get("deconv_5.weight"), d_logits, 2);
  stash_conv_grads(ctx, std::string("deconv_5"), g5);
  auto g15 = layers::conv2d_backward(tr.fuse.output, params.get("conv1_5.weight"), g5.d_input, 1, 0);
  stash_conv_grads(ctx, std::string("conv1_5"), g15);

  Tensor<T> d_concat = unit_backward(ctx, "conv3_4", config.conv_bn ? "bn3_4" : "", tr.concat,
                                     tr.fuse, std::move(g15.d_input), 1, true);

  std::vector<std::size_t> groups;
  for (const auto& b : tr.branches) groups.push_back(b.upsampled.dims().back());
  groups.push_back(tr.pooled.dims().back());
  std::vector<Tensor<T>> d_parts = layers::split_channels(d_concat, groups);

  Tensor<T> d_pooled = std::move(d_parts.back());
  for (std::size_t i = 0; i < tr.branches.size(); ++i) {
    const BranchTrace<T>& b = tr.branches[i];
    const std::string deconv = branch_deconv_name(i);
    auto gd = layers::deconv2d_backward(b.conv.output, params.get(deconv + ".weight"), d_parts[i],
                                        kPooledExtent / b.pooled.dim(1));
    stash_conv_grads(ctx, deconv, gd);
    Tensor<T> d_branch_in =
        unit_backward(ctx, branch_conv_name(i), "", b.pooled, b.conv, std::move(gd.d_input), 0, true);
    Tensor<T> d_mp = b.pool_cache ? layers::maxpool_backward(*b.pool_cache, d_branch_in)
                                  : layers::avgpool_backward(d_branch_in, b.scale);
    if (d_mp.dims() != d_pooled.dims()) throw ShapeError("backward: branch gradient dims mismatch");
    for (std::size_t k = 0; k < d_mp.size(); ++k) d_pooled[k] += d_mp[k];
  }

  Tensor<T> d = layers::maxpool_backward(tr.pool_cache, d_pooled);
  for (std::size_t i = tr.trunk.size(); i-- > 0;) {
    const Tensor<T>& x = i == 0 ? tr.bn_in_output : tr.trunk[i - 1].output;
    d = unit_backward(ctx, trunk_name(i), config.conv_bn ? trunk_bn_name(i) : "", x, tr.trunk[i],
                      std::move(d), 1, true);
  }
  auto gbn = layers::batchnorm_backward(tr.bn_in, d);
  stash_bn_grads(ctx, std::string("bn_in"), gbn);

  ParamMap<T> grads;
  for (const auto& [name, t] : params) {
    if (!is_learnable(name)) continue;
    auto it = staged.find(name);
    if (it == staged.end()) throw ShapeError("backward: no gradient produced for '" + name + "'");
    if (it->second.dims() != t.dims()) {
      throw ShapeError("backward: gradient for '" + name + "' has dims " +
                       dims_to_string(it->second.dims()) + ", parameter has " + dims_to_string(t.dims()));
    }
    grads.insert(name, std::move(it->second));
  }
  return grads;
}

template <typename T>
void commit_running_stats(ModelParams<T>& params, const ParamMap<T>& updates) {
  for (const auto& [name, t] : updates) {
    Tensor<T>& dst = params.get(name);
    if (dst.dims() != t.dims()) throw ShapeError("running stat '" + name + "' dims mismatch");
    dst = t;
  }
}

#define MSSP_INSTANTIATE_MODEL(T)                                                                  \
  template struct ForwardTrace<T>;                                                                 \
  template void validate_roster(const ModelParams<T>&, const ModelConfig&);                        \
  template ForwardResult<T> forward(const ModelParams<T>&, const ModelConfig&, const Tensor<T>&,   \
                                    Mode);                                                          \
  template ParamMap<T> backward(const ModelParams<T>&, const ModelConfig&, const ForwardTrace<T>&, \
                                const Tensor<T>&);                                                  \
  template void commit_running_stats(ModelParams<T>&, const ParamMap<T>&);

MSSP_INSTANTIATE_MODEL(float)
MSSP_INSTANTIATE_MODEL(double)

}  // namespace mssp
