#include "voxdec/model.hpp"

#include <cmath>
#include <random>

#include "voxdec/error.hpp"

namespace voxdec {
namespace {

constexpr ConvGeometry kPointwise{1, 0};
constexpr ConvGeometry kSame3{1, 1};
constexpr ConvGeometry kDown3{2, 1};

Tensor activate(const Tensor& x, bool identity) { return identity ? x : relu(x); }

Tensor activate_vjp(const Tensor& x, const Tensor& up, ReluMode mode, bool identity) {
  return identity ? up : relu_vjp(x, up, mode);
}

ConvLayer conv_layer(std::size_t cout, std::size_t cin, std::size_t k) {
  return {Tensor({cout, cin, k, k, k}), Tensor({cout})};
}

DenseLayer dense_layer(std::size_t out, std::size_t in) { return {Tensor({out, in}), Tensor({out})}; }

// Zero-filled weights with the layout implied by cfg.
ModelWeights layout(const ModelConfig& cfg) {
  ModelWeights m;
  m.embed = conv_layer(cfg.c, cfg.t, 1);
  m.stem = conv_layer(cfg.stem_width, cfg.c, 3);
  std::size_t in = cfg.stem_width;
  for (auto width : cfg.stage_widths) {
    Stage stage;
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      ResidualBlock block;
      block.conv1 = conv_layer(width, in, 3);
      block.conv2 = conv_layer(width, width, 3);
      if (in != width) block.proj = conv_layer(width, in, 1);
      block.squeeze = dense_layer(width / cfg.reduction, 2 * width);
      block.excite = dense_layer(width, width / cfg.reduction);
      stage.blocks.push_back(std::move(block));
      in = width;
    }
    stage.down = conv_layer(width, width, 3);
    m.stages.push_back(std::move(stage));
  }
  m.head = dense_layer(cfg.classes, cfg.features_per_frame());
  return m;
}

template <class Weights, class Fn>
void visit(Weights& m, Fn&& fn) {
  auto conv = [&](const std::string& name, auto& layer) {
    fn(name + ".w", layer.w);
    fn(name + ".b", layer.b);
  };
  conv("embed", m.embed);
  conv("stem", m.stem);
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    auto& stage = m.stages[s];
    const std::string sp = "stage" + std::to_string(s);
    for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
      auto& block = stage.blocks[b];
      const std::string bp = sp + ".block" + std::to_string(b);
      conv(bp + ".conv1", block.conv1);
      conv(bp + ".conv2", block.conv2);
      if (block.proj) conv(bp + ".proj", *block.proj);
      conv(bp + ".squeeze", block.squeeze);
      conv(bp + ".excite", block.excite);
    }
    conv(sp + ".down", stage.down);
  }
  conv("head", m.head);
}

Tensor add(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

}  // namespace

void ModelConfig::validate() const {
  if (t < 1 || c < 1 || stem_width < 1) throw DomainError("model config: t, c and stem_width must be positive");
  if (stage_widths.empty()) throw DomainError("model config: at least one residual stage is required");
  if (blocks_per_stage < 1) throw DomainError("model config: blocks_per_stage must be >= 1");
  if (classes < 2) throw DomainError("model config: need at least 2 classes");
  if (reduction < 1) throw DomainError("model config: reduction must be >= 1");
  for (auto w : stage_widths) {
    if (w == 0 || w % reduction != 0)
      throw DomainError("model config: reduction " + std::to_string(reduction) + " must divide stage width " +
                        std::to_string(w));
  }
  if (final_width() % t != 0)
    throw DomainError("model config: final stage width " + std::to_string(final_width()) +
                      " is not divisible by window length " + std::to_string(t));
  if (grid.d == 0 || grid.h == 0 || grid.w == 0) throw DomainError("model config: grid extents must be positive");
}

void ModelWeights::for_each(const std::function<void(const std::string&, Tensor&)>& fn) { visit(*this, fn); }

void ModelWeights::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit(*this, fn);
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelWeights ModelWeights::zeros_like() const {
  ModelWeights z = *this;
  z.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

ModelWeights& ModelWeights::operator+=(const ModelWeights& other) {
  std::vector<const Tensor*> theirs;
  other.for_each([&](const std::string&, const Tensor& t) { theirs.push_back(&t); });
  std::size_t i = 0;
  for_each([&](const std::string&, Tensor& t) {
    if (i >= theirs.size()) throw ShapeError("model weights have different structure");
    t += *theirs[i++];
  });
  if (i != theirs.size()) throw ShapeError("model weights have different structure");
  return *this;
}

ModelWeights& ModelWeights::operator*=(double s) {
  for_each([s](const std::string&, Tensor& t) { t *= s; });
  return *this;
}

bool operator==(const ModelWeights& a, const ModelWeights& b) {
  std::vector<const Tensor*> lhs, rhs;
  a.for_each([&](const std::string&, const Tensor& t) { lhs.push_back(&t); });
  b.for_each([&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i)
    if (!(*lhs[i] == *rhs[i])) return false;
  return true;
}

ModelWeights init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights m = layout(cfg);
  std::mt19937_64 rng(seed);
  m.for_each([&](const std::string& name, Tensor& t) {
    if (name.ends_with(".b")) return;
    const double fan_in = static_cast<double>(t.size() / t.dim(0));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : t.values()) v = normal(rng);
  });
  return m;
}

void check_weights(const ModelConfig& cfg, const ModelWeights& weights) {
  cfg.validate();
  const ModelWeights expected = layout(cfg);
  std::vector<std::pair<std::string, Dims>> want, got;
  expected.for_each([&](const std::string& n, const Tensor& t) { want.emplace_back(n, t.dims()); });
  weights.for_each([&](const std::string& n, const Tensor& t) {
    got.emplace_back(n, t.dims());
    if (!t.all_finite()) throw NumericError("weight array " + n + " contains non-finite values");
  });
  if (want != got) throw ShapeError("model weights do not match the configured architecture");
}

Tensor time_embed(const Tensor& window, const ModelWeights& weights, const ModelConfig& cfg) {
  if (window.rank() != 4 || window.dim(0) != cfg.t)
    throw ShapeError("time embedding expects " + std::to_string(cfg.t) + " frames, got window " +
                     format_dims(window.dims()));
  return conv3d(window, weights.embed.w, weights.embed.b, kPointwise);
}

namespace {

struct AttentionTrace {
  Tensor descriptor, hidden_pre, hidden, scores, y;
};

AttentionTrace attention_forward(const Tensor& x, const DenseLayer& squeeze, const DenseLayer& excite,
                                 bool identity) {
  const auto channels = x.dim(0);
  if (squeeze.w.rank() != 2 || squeeze.w.dim(1) != 2 * channels || excite.w.rank() != 2 ||
      excite.w.dim(0) != channels || excite.w.dim(1) != squeeze.w.dim(0))
    throw ShapeError("channel attention parameters do not match " + std::to_string(channels) + " channels");
  AttentionTrace tr;
  const Tensor avg = pool_global(x, PoolKind::avg);
  const Tensor mx = pool_global(x, PoolKind::max);
  tr.descriptor = Tensor({2 * channels});
  for (std::size_t c = 0; c < channels; ++c) {
    tr.descriptor[2 * c] = avg[c];
    tr.descriptor[2 * c + 1] = mx[c];
  }
  tr.hidden_pre = dense(tr.descriptor, squeeze.w, squeeze.b);
  tr.hidden = activate(tr.hidden_pre, identity);
  tr.scores = sigmoid(dense(tr.hidden, excite.w, excite.b));
  tr.y = x;
  for (std::size_t c = 0; c < channels; ++c)
    for (auto& v : tr.y.slice(c)) v *= tr.scores[c];
  return tr;
}



// Shared reverse sweep. Returns the input gradient when want_input is set.
Tensor reverse_sweep(const ForwardCache& cache, const Tensor& dlogits, const ModelWeights& weights,
                     const ModelConfig& cfg, ReluMode mode, ModelWeights* param_grads, bool want_input) {
  const bool identity = cfg.identity_activations;
  const bool want_w = param_grads != nullptr;
  const auto t = cfg.t;
  const auto k = cfg.classes;
  const auto g = cfg.features_per_frame();

  // decode head
  Tensor dpooled({cfg.final_width()});
  {
    const Tensor& hw = weights.head.w;
    Tensor dw(hw.dims()), db({k});
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t c = 0; c < k; ++c) {
        const double u = dlogits[f * k + c];
        db[c] += u;
        for (std::size_t j = 0; j < g; ++j) {
          dw[c * g + j] += u * cache.pooled[f * g + j];
          dpooled[f * g + j] += hw[c * g + j] * u;
        }
      }
    if (want_w) {
      param_grads->head.w = std::move(dw);
      param_grads->head.b = std::move(db);
    }
  }

  Tensor dh = pool_global_vjp(Tensor(cache.final_dims), PoolKind::avg, dpooled);

  for (std::size_t s = cfg.stage_widths.size(); s-- > 0;) {
    const auto& sc = cache.stages[s];
    const auto& stage = weights.stages[s];
    {
      Tensor dpre = activate_vjp(sc.down_pre, dh, mode, identity);
      ConvGrads cg = conv3d_vjp(sc.down_input, stage.down.w, kDown3, dpre, true, want_w);
      dh = std::move(cg.x);
      if (want_w) {
        param_grads->stages[s].down.w = std::move(cg.w);
        param_grads->stages[s].down.b = std::move(cg.b);
      }
    }
    for (std::size_t b = stage.blocks.size(); b-- > 0;) {
      const auto& bc = sc.blocks[b];
      const auto& block = stage.blocks[b];
      const auto channels = bc.r2.dim(0);

      // y = r2 * scores (broadcast per channel)
      Tensor dr2(bc.r2.dims());
      Tensor dscore({channels});
      for (std::size_t c = 0; c < channels; ++c) {
        const auto up = dh.slice(c);
        const auto x = bc.r2.slice(c);
        auto dst = dr2.slice(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) {
          dst[i] = up[i] * bc.scores[c];
          acc += up[i] * x[i];
        }
        dscore[c] = acc;
      }
      Tensor dexc_pre = sigmoid_vjp(bc.scores, dscore);
      DenseGrads eg = dense_vjp(bc.hidden, block.excite.w, dexc_pre);
      Tensor dhidden_pre = activate_vjp(bc.hidden_pre, eg.x, mode, identity);
      DenseGrads sg = dense_vjp(bc.descriptor, block.squeeze.w, dhidden_pre);
      {
        Tensor davg({channels}), dmax({channels});
        for (std::size_t c = 0; c < channels; ++c) {
          davg[c] = sg.x[2 * c];
          dmax[c] = sg.x[2 * c + 1];
        }
        dr2 += pool_global_vjp(bc.r2, PoolKind::avg, davg);
        dr2 += pool_global_vjp(bc.r2, PoolKind::max, dmax);
      }

      Tensor dz = activate_vjp(bc.z, dr2, mode, identity);
      ConvGrads c2 = conv3d_vjp(bc.r1, block.conv2.w, kSame3, dz, true, want_w);
      Tensor da1 = activate_vjp(bc.a1, c2.x, mode, identity);
      ConvGrads c1 = conv3d_vjp(bc.input, block.conv1.w, kSame3, da1, true, want_w);
      Tensor din = std::move(c1.x);
      ConvGrads cp;
      if (block.proj) {
        cp = conv3d_vjp(bc.input, block.proj->w, kPointwise, dz, true, want_w);
        din += cp.x;
      } else {
        din += dz;
      }
      if (want_w) {
        auto& gb = param_grads->stages[s].blocks[b];
        gb.conv1 = {std::move(c1.w), std::move(c1.b)};
        gb.conv2 = {std::move(c2.w), std::move(c2.b)};
        if (block.proj) gb.proj = ConvLayer{std::move(cp.w), std::move(cp.b)};
        gb.squeeze = {std::move(sg.w), std::move(sg.b)};
        gb.excite = {std::move(eg.w), std::move(eg.b)};
      }
      dh = std::move(din);
    }
  }

  Tensor dstem = activate_vjp(cache.stem_pre, dh, mode, identity);
  ConvGrads cs = conv3d_vjp(cache.embedded, weights.stem.w, kSame3, dstem, true, want_w);
  ConvGrads ce = conv3d_vjp(cache.window, weights.embed.w, kPointwise, cs.x, want_input, want_w);
  if (want_w) {
    param_grads->stem = {std::move(cs.w), std::move(cs.b)};
    param_grads->embed = {std::move(ce.w), std::move(ce.b)};
  }
  return want_input ? std::move(ce.x) : Tensor{};
}

void require_cache(const ForwardCache& cache) {
  if (!cache.valid) throw DomainError("backward pass needs a forward cache; run forward first");
}

}  // namespace

AttentionOutput channel_attention(const Tensor& x, const DenseLayer& squeeze, const DenseLayer& excite,
                                  bool identity_activations) {
  auto tr = attention_forward(x, squeeze, excite, identity_activations);
  return {std::move(tr.y), std::move(tr.scores)};
}

Tensor decode_frames(const Tensor& feature, const DenseLayer& head, std::size_t t) {
  if (t == 0 || feature.size() % t != 0)
    throw ShapeError("decoder: feature length " + std::to_string(feature.size()) + " is not divisible by " +
                     std::to_string(t) + " frames");
  const auto g = feature.size() / t;
  if (head.w.rank() != 2 || head.w.dim(1) != g)
    throw ShapeError("decoder head expects " + std::to_string(g) + " features per frame");
  const auto k = head.w.dim(0);
  Tensor logits({t, k});
  for (std::size_t f = 0; f < t; ++f) {
    const Tensor group({g}, {feature.values().begin() + static_cast<long>(f * g),
                             feature.values().begin() + static_cast<long>((f + 1) * g)});
    const Tensor row = dense(group, head.w, head.b);
    std::copy(row.values().begin(), row.values().end(), logits.data() + f * k);
  }
  return logits;
}

ForwardResult forward(const Tensor& window, const ModelWeights& weights, const ModelConfig& cfg) {
  cfg.validate();
  if (window.dims() != Dims{cfg.t, cfg.grid.d, cfg.grid.h, cfg.grid.w})
    throw ShapeError("forward expects a window of " + format_dims({cfg.t, cfg.grid.d, cfg.grid.h, cfg.grid.w}) +
                     ", got " + format_dims(window.dims()));
  if (weights.stages.size() != cfg.stage_widths.size())
    throw ShapeError("model weights have " + std::to_string(weights.stages.size()) + " stages, config has " +
                     std::to_string(cfg.stage_widths.size()));
  const bool identity = cfg.identity_activations;

  ForwardResult out;
  ForwardCache& cache = out.cache;
  cache.window = window;
  cache.embedded = time_embed(window, weights, cfg);
  cache.stem_pre = conv3d(cache.embedded, weights.stem.w, weights.stem.b, kSame3);
  Tensor h = activate(cache.stem_pre, identity);

  for (std::size_t s = 0; s < weights.stages.size(); ++s) {
    const auto& stage = weights.stages[s];
    ForwardCache::StageCache sc;
    for (const auto& block : stage.blocks) {
      ForwardCache::BlockCache bc;
      bc.input = std::move(h);
      bc.a1 = conv3d(bc.input, block.conv1.w, block.conv1.b, kSame3);
      bc.r1 = activate(bc.a1, identity);
      Tensor a2 = conv3d(bc.r1, block.conv2.w, block.conv2.b, kSame3);
      bc.z = block.proj ? add(std::move(a2), conv3d(bc.input, block.proj->w, block.proj->b, kPointwise))
                        : add(std::move(a2), bc.input);
      bc.r2 = activate(bc.z, identity);
      auto tr = attention_forward(bc.r2, block.squeeze, block.excite, identity);
      bc.descriptor = std::move(tr.descriptor);
      bc.hidden_pre = std::move(tr.hidden_pre);
      bc.hidden = std::move(tr.hidden);
      bc.scores = std::move(tr.scores);
      h = std::move(tr.y);
      sc.blocks.push_back(std::move(bc));
    }
    sc.down_input = std::move(h);
    sc.down_pre = conv3d(sc.down_input, stage.down.w, stage.down.b, kDown3);
    h = activate(sc.down_pre, identity);
    cache.stages.push_back(std::move(sc));
  }

  cache.final_dims = h.dims();
  cache.pooled = pool_global(h, PoolKind::avg);
  cache.logits = decode_frames(cache.pooled, weights.head, cfg.t);
  cache.valid = true;
  out.logits = cache.logits;
  out.probs = softmax_rows(cache.logits);
  return out;
}

ParamGrads backward_standard(const ForwardCache& cache, std::span<const int> labels, const ModelWeights& weights,
                             const ModelConfig& cfg) {
  require_cache(cache);
  const SoftmaxXent xent = softmax_xent(cache.logits, labels);
  ParamGrads out;
  out.loss = xent.loss;
  out.grads = weights.zeros_like();
  reverse_sweep(cache, xent.grad_logits, weights, cfg, ReluMode::standard, &out.grads, false);
  return out;
}

Tensor backward_input(const ForwardCache& cache, const Tensor& logit_seed, const ModelWeights& weights,
                      const ModelConfig& cfg, ReluMode mode) {
  require_cache(cache);
  if (logit_seed.dims() != cache.logits.dims())
    throw ShapeError("logit seed must be " + format_dims(cache.logits.dims()) + ", got " +
                     format_dims(logit_seed.dims()));
  return reverse_sweep(cache, logit_seed, weights, cfg, mode, nullptr, true);
}

}  // namespace voxdec
