#pragma once

// The three transformers: spatial encoder T_f (ViT-style, class-token
// readout), causal temporal classifier T_c and causal temporal locator T_l.
// T_c and T_l are independent parameter sets; they share only the input
// features. Pre-norm blocks with GELU MLPs, final layer norm.

#include <string>
#include <vector>

#include "glitr/autodiff.hpp"
#include "glitr/glimpse.hpp"
#include "glitr/rng.hpp"

namespace glitr {

struct EncoderConfig {
  // Desk-scale defaults. Paper scale uses ViT-S for the spatial encoder and
  // temporal transformers with 768 dims, 6 heads, depth 4; untrainable here.
  int embed_dim = 64;
  int spatial_depth = 4;
  int spatial_heads = 4;
  int temporal_depth = 2;
  int temporal_heads = 4;
  int mlp_ratio = 4;
  int num_classes = 8;
  int max_t = 8;

  void validate() const {
    if (embed_dim % spatial_heads != 0 || embed_dim % temporal_heads != 0)
      throw std::invalid_argument("embed_dim must be divisible by head counts");
    if (embed_dim % 4 != 0)
      throw std::invalid_argument("embed_dim must be divisible by 4 for position embeddings");
    if (num_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (max_t < 1) throw std::invalid_argument("max_t must be >= 1");
  }
};

inline constexpr int kMaxTokens = 1024;
inline constexpr double kInitStd = 0.02;

template <typename T>
struct LinearLayer {
  Var<T> w, b;  // w is [in, out]

  LinearLayer() = default;
  LinearLayer(ParamSet<T>& ps, const std::string& name, int in, int out, Pcg32& rng) {
    w = ps.add(name + ".w", TensorT<T>::randn({in, out}, rng, T(kInitStd)));
    b = ps.add(name + ".b", TensorT<T>({out}));
  }

  Var<T> forward(const Var<T>& x) const { return add_rowvec(matmul(x, w), b); }
};

template <typename T>
struct LayerNormLayer {
  Var<T> gain, bias;

  LayerNormLayer() = default;
  LayerNormLayer(ParamSet<T>& ps, const std::string& name, int d) {
    gain = ps.add(name + ".gain", TensorT<T>::full({d}, T(1)));
    bias = ps.add(name + ".bias", TensorT<T>({d}));
  }

  Var<T> forward(const Var<T>& x) const { return layer_norm(x, gain, bias); }
};

template <typename T>
struct TransformerBlock {
  int d = 0, heads = 0;
  LayerNormLayer<T> ln1, ln2;
  LinearLayer<T> qkv, proj, fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(ParamSet<T>& ps, const std::string& name, int d_, int heads_, int mlp_ratio,
                   Pcg32& rng)
      : d(d_), heads(heads_) {
    ln1 = LayerNormLayer<T>(ps, name + ".ln1", d);
    qkv = LinearLayer<T>(ps, name + ".qkv", d, 3 * d, rng);
    proj = LinearLayer<T>(ps, name + ".proj", d, d, rng);
    ln2 = LayerNormLayer<T>(ps, name + ".ln2", d);
    fc1 = LinearLayer<T>(ps, name + ".fc1", d, mlp_ratio * d, rng);
    fc2 = LinearLayer<T>(ps, name + ".fc2", mlp_ratio * d, d, rng);
  }

  // mask nullptr means full attention
  Var<T> forward(Var<T> x, const TensorT<T>* mask) const {
    int t = x.value().rows();
    int dh = d / heads;
    TensorT<T> open;
    if (!mask) {
      open = TensorT<T>({t, t});
      mask = &open;
    }
    Var<T> h = ln1.forward(x);
    Var<T> qkv_out = qkv.forward(h);
    std::vector<Var<T>> head_out;
    head_out.reserve(heads);
    for (int hh = 0; hh < heads; ++hh) {
      Var<T> q = slice_cols(qkv_out, hh * dh, (hh + 1) * dh);
      Var<T> k = slice_cols(qkv_out, d + hh * dh, d + (hh + 1) * dh);
      Var<T> v = slice_cols(qkv_out, 2 * d + hh * dh, 2 * d + (hh + 1) * dh);
      head_out.push_back(masked_attention(q, k, v, *mask));
    }
    x = add(x, proj.forward(concat_cols(head_out)));
    Var<T> m = ln2.forward(x);
    return add(x, fc2.forward(gelu(fc1.forward(m))));
  }
};

// ViT-style per-image encoder: learnable class token prepended, position
// embeddings added to the patch tokens, class-token output returned
// without any classification head.
template <typename T>
struct SpatialEncoder {
  int d = 0;
  Var<T> class_token;  // [1, d]
  LinearLayer<T> patch_proj;
  std::vector<TransformerBlock<T>> blocks;
  LayerNormLayer<T> final_ln;

  SpatialEncoder() = default;
  SpatialEncoder(ParamSet<T>& ps, const std::string& name, const EncoderConfig& cfg,
                 int patch_dim, Pcg32& rng)
      : d(cfg.embed_dim) {
    class_token = ps.add(name + ".cls", TensorT<T>::randn({1, d}, rng, T(kInitStd)));
    patch_proj = LinearLayer<T>(ps, name + ".patch_proj", patch_dim, d, rng);
    for (int i = 0; i < cfg.spatial_depth; ++i)
      blocks.emplace_back(ps, name + ".blk" + std::to_string(i), d, cfg.spatial_heads,
                          cfg.mlp_ratio, rng);
    final_ln = LayerNormLayer<T>(ps, name + ".ln_out", d);
  }

  // patches [N, p*p*C], pos [N, d] -> class-token feature [1, d]
  Var<T> encode(const Var<T>& patches, const Var<T>& pos) const {
    int n = patches.value().rows();
    detail::require(n + 1 <= kMaxTokens, "spatial_encode: too many tokens");
    detail::require(pos.value().rows() == n && pos.value().cols() == d,
                    "spatial_encode: pos embedding shape mismatch");
    Var<T> tok = add(patch_proj.forward(patches), pos);
    Var<T> x = concat_rows<T>({class_token, tok});
    for (const auto& b : blocks) x = b.forward(x, nullptr);
    x = final_ln.forward(x);
    return slice_rows(x, 0, 1);
  }
};

// Causal (or, for the offline oracle, bidirectional) transformer over the
// per-timestep feature sequence. Learned temporal position embeddings, no
// separate class token; output at index s depends only on features [1..s]
// when causal.
template <typename T>
struct TemporalEncoder {
  int d = 0, max_t = 0;
  bool causal = true;
  Var<T> temporal_pos;  // [max_t, d]
  std::vector<TransformerBlock<T>> blocks;
  LayerNormLayer<T> final_ln;

  TemporalEncoder() = default;
  TemporalEncoder(ParamSet<T>& ps, const std::string& name, const EncoderConfig& cfg,
                  bool causal_, Pcg32& rng)
      : d(cfg.embed_dim), max_t(cfg.max_t), causal(causal_) {
    temporal_pos = ps.add(name + ".pos", TensorT<T>::randn({max_t, d}, rng, T(kInitStd)));
    for (int i = 0; i < cfg.temporal_depth; ++i)
      blocks.emplace_back(ps, name + ".blk" + std::to_string(i), d, cfg.temporal_heads,
                          cfg.mlp_ratio, rng);
    final_ln = LayerNormLayer<T>(ps, name + ".ln_out", d);
  }

  Var<T> encode(const Var<T>& features) const {
    int t = features.value().rows();
    if (t > max_t) throw std::invalid_argument("temporal_encode: sequence longer than max_t");
    Var<T> x = add(features, slice_rows(temporal_pos, 0, t));
    TensorT<T> mask;
    if (causal) mask = causal_mask<T>(t);
    for (const auto& b : blocks) x = b.forward(x, causal ? &mask : nullptr);
    return final_ln.forward(x);
  }
};

// single affine map d -> K
template <typename T>
Var<T> classify(const LinearLayer<T>& head, const Var<T>& hidden) {
  return head.forward(hidden);
}

// affine map d -> 2 squashed by tanh, so locations stay inside (-1,1)^2
template <typename T>
Var<T> locate(const LinearLayer<T>& head, const Var<T>& hidden) {
  return tanh_op(head.forward(hidden));
}

template <typename T>
struct TemporalClassifier {
  TemporalEncoder<T> enc;
  LinearLayer<T> head;

  TemporalClassifier() = default;
  TemporalClassifier(ParamSet<T>& ps, const std::string& name, const EncoderConfig& cfg,
                     Pcg32& rng) {
    enc = TemporalEncoder<T>(ps, name + ".enc", cfg, /*causal=*/true, rng);
    head = LinearLayer<T>(ps, name + ".head", cfg.embed_dim, cfg.num_classes, rng);
  }

  // [t, d] -> per-step logits [t, K]
  Var<T> logits_all(const Var<T>& features) const {
    return classify(head, enc.encode(features));
  }
};

template <typename T>
struct TemporalLocator {
  TemporalEncoder<T> enc;
  LinearLayer<T> head;

  TemporalLocator() = default;
  TemporalLocator(ParamSet<T>& ps, const std::string& name, const EncoderConfig& cfg, Pcg32& rng) {
    enc = TemporalEncoder<T>(ps, name + ".enc", cfg, /*causal=*/true, rng);
    head = LinearLayer<T>(ps, name + ".head", cfg.embed_dim, 2, rng);
  }

  // [t, d] -> next-glimpse centers [t, 2]; row s is the location for step s+1
  Var<T> locations_all(const Var<T>& features) const {
    return locate(head, enc.encode(features));
  }
};

// T_f + T_c + T_l with a shared registry; the common backbone of the
// teacher, the student and the offline oracle stand-in.
template <typename T>
struct EncoderStack {
  EncoderConfig cfg;
  GlimpseGeometry geom;
  ParamSet<T> params;
  SpatialEncoder<T> t_f;
  TemporalClassifier<T> t_c;
  TemporalLocator<T> t_l;

  EncoderStack() = default;
  EncoderStack(const EncoderConfig& cfg_, const GlimpseGeometry& geom_, uint64_t seed)
      : cfg(cfg_), geom(geom_) {
    cfg.validate();
    geom.validate();
    Pcg32 rng(seed);
    t_f = SpatialEncoder<T>(params, "t_f", cfg, geom.patch_dim(), rng);
    t_c = TemporalClassifier<T>(params, "t_c", cfg, rng);
    t_l = TemporalLocator<T>(params, "t_l", cfg, rng);
  }

  // fresh stack with identical values; optionally frozen
  EncoderStack clone(bool trainable = true) const {
    EncoderStack out(cfg, geom, /*seed=*/0);
    out.params.copy_values_from(params);
    out.params.set_trainable(trainable);
    return out;
  }
};

}  // namespace glitr
