#pragma once

// Tiny transformer shared by the causal policy LM and the bidirectional
// cross-encoder. Pre-norm blocks, learned positions, relu FFN. The builder
// emits the whole forward pass onto a Graph; `trainable` decides whether the
// weights enter as parameters or as constants.

#include <string>
#include <vector>

#include "relsum/graph.hpp"
#include "relsum/rng.hpp"

namespace relsum {

struct TransformerSpec {
  int vocab = 0;
  int max_seq = 128;
  int width = 64;
  int heads = 2;
  int layers = 2;
  int ffn_mult = 4;
  bool causal = false;
  // Encoder-only option: mask the diagonal so a position cannot attend to
  // itself. Self-logits otherwise dominate token-identity matching, which is
  // exactly the signal a relevance cross-encoder needs.
  bool mask_self = false;

  int head_dim() const { return width / heads; }

  void validate() const {
    if (vocab < 2 || max_seq < 1 || width < 1 || heads < 1 || layers < 1 || ffn_mult < 1)
      fail(Errc::bad_argument, "transformer spec: sizes must be positive");
    if (width % heads != 0) fail(Errc::bad_argument, "transformer spec: width must divide into heads");
  }
};

inline ParameterStore init_transformer(const TransformerSpec& spec, uint64_t seed, double init_std = 0.02) {
  spec.validate();
  Rng rng(seed);
  ParameterStore p;
  p.add("emb.tok", Tensor::randn({spec.vocab, spec.width}, rng, init_std));
  p.add("emb.pos", Tensor::randn({spec.max_seq, spec.width}, rng, init_std));
  const int ffn = spec.width * spec.ffn_mult;
  for (int l = 0; l < spec.layers; ++l) {
    const std::string b = "blk" + std::to_string(l) + ".";
    p.add(b + "ln1.g", Tensor::full({spec.width}, 1.0));
    p.add(b + "ln1.b", Tensor::zeros({spec.width}));
    p.add(b + "attn.wq", Tensor::randn({spec.width, spec.width}, rng, init_std));
    p.add(b + "attn.wk", Tensor::randn({spec.width, spec.width}, rng, init_std));
    p.add(b + "attn.wv", Tensor::randn({spec.width, spec.width}, rng, init_std));
    p.add(b + "attn.wo", Tensor::randn({spec.width, spec.width}, rng, init_std));
    p.add(b + "attn.bq", Tensor::zeros({spec.width}));
    // no key bias: softmax is invariant to uniform shifts, its gradient is identically zero
    p.add(b + "attn.bv", Tensor::zeros({spec.width}));
    p.add(b + "attn.bo", Tensor::zeros({spec.width}));
    p.add(b + "ln2.g", Tensor::full({spec.width}, 1.0));
    p.add(b + "ln2.b", Tensor::zeros({spec.width}));
    p.add(b + "ffn.w1", Tensor::randn({spec.width, ffn}, rng, init_std));
    p.add(b + "ffn.b1", Tensor::zeros({ffn}));
    p.add(b + "ffn.w2", Tensor::randn({ffn, spec.width}, rng, init_std));
    p.add(b + "ffn.b2", Tensor::zeros({spec.width}));
  }
  p.add("lnf.g", Tensor::full({spec.width}, 1.0));
  p.add("lnf.b", Tensor::zeros({spec.width}));
  return p;
}

namespace detail {

inline Value bind(Graph& g, const ParameterStore& store, const std::string& name, bool trainable) {
  const Tensor& t = store.get(name);
  return trainable ? g.param(name, t) : g.constant_ref(t);
}

}  // namespace detail

// Final hidden states [n, width] for a token sequence.
inline Value transformer_states(Graph& g, const TransformerSpec& spec, const ParameterStore& store,
                                const std::vector<int>& tokens, bool trainable) {
  const int n = static_cast<int>(tokens.size());
  if (n == 0) fail(Errc::bad_argument, "transformer: empty token sequence");
  if (n > spec.max_seq)
    fail(Errc::bad_argument, "transformer: sequence of " + std::to_string(n) +
                                 " exceeds context window " + std::to_string(spec.max_seq));
  auto P = [&](const std::string& name) { return detail::bind(g, store, name, trainable); };

  Value x = g.add(g.embed(P("emb.tok"), tokens), g.slice(P("emb.pos"), 0, 0, n));

  Value mask{};
  if ((spec.causal || spec.mask_self) && n > 1) {
    Tensor m({n, n});
    if (spec.causal)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.at(i, j) = -1e9;
    if (spec.mask_self)
      for (int i = 0; i < n; ++i) m.at(i, i) = -1e9;
    mask = g.constant(std::move(m));
  }

  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(spec.head_dim()));
  for (int l = 0; l < spec.layers; ++l) {
    const std::string b = "blk" + std::to_string(l) + ".";
    Value ln = g.layer_norm(x, P(b + "ln1.g"), P(b + "ln1.b"));
    Value q = g.add(g.matmul(ln, P(b + "attn.wq")), P(b + "attn.bq"));
    Value k = g.matmul(ln, P(b + "attn.wk"));
    Value v = g.add(g.matmul(ln, P(b + "attn.wv")), P(b + "attn.bv"));

    Value heads{};
    for (int h = 0; h < spec.heads; ++h) {
      const int off = h * spec.head_dim();
      Value qh = g.slice(q, 1, off, spec.head_dim());
      Value kh = g.slice(k, 1, off, spec.head_dim());
      Value vh = g.slice(v, 1, off, spec.head_dim());
      Value scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_hd);
      if (mask.valid()) scores = g.add(scores, mask);
      Value out = g.matmul(g.softmax(scores), vh);
      heads = h == 0 ? out : g.concat(heads, out);
    }
    Value attn = g.add(g.matmul(heads, P(b + "attn.wo")), P(b + "attn.bo"));
    x = g.add(x, attn);

    Value ln2 = g.layer_norm(x, P(b + "ln2.g"), P(b + "ln2.b"));
    Value h1 = g.relu(g.add(g.matmul(ln2, P(b + "ffn.w1")), P(b + "ffn.b1")));
    Value h2 = g.add(g.matmul(h1, P(b + "ffn.w2")), P(b + "ffn.b2"));
    x = g.add(x, h2);
  }
  return g.layer_norm(x, P("lnf.g"), P("lnf.b"));
}

}  // namespace relsum
