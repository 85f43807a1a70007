#pragma once

// The frozen relevance environment: context assembly for [t], [t;d], [t;s],
// a tiny cross-encoder scored from the [CLS] state, its one-time training,
// Eq-style reward computation, and a closed-form oracle scorer for tests.

#include <algorithm>
#include <optional>
#include <vector>

#include "relsum/corpus.hpp"
#include "relsum/optim.hpp"
#include "relsum/transformer.hpp"

namespace relsum {

using ProductContext = std::vector<int>;

// Title first, then separator, then the extra text truncated to fit the
// budget. The budget covers the whole product-side context.
inline ProductContext build_context(const std::vector<int>& title, const std::optional<std::vector<int>>& extra,
                                    int budget) {
  if (budget < static_cast<int>(title.size()))
    fail(Errc::bad_argument, "build_context: budget " + std::to_string(budget) + " below title length " +
                                 std::to_string(title.size()));
  ProductContext ctx = title;
  if (extra && !extra->empty()) {
    if (static_cast<int>(ctx.size()) + 1 < budget) {
      ctx.push_back(Vocab::kSep);
      const int room = budget - static_cast<int>(ctx.size());
      const int take = std::min<int>(room, static_cast<int>(extra->size()));
      ctx.insert(ctx.end(), extra->begin(), extra->begin() + take);
    }
  }
  return ctx;
}

struct RewardConfig {
  int layers = 2;
  int width = 64;
  int heads = 2;
  int ffn_mult = 4;
  int max_seq = 128;
  int context_budget = 56;
  double init_std = 0.02;
  double tok_emb_std = 0.1;  // token identity must dominate positional noise
  double qk_identity = 1.5;  // scale of the near-identity query/key init
  // training
  double lr = 3e-4;
  double weight_decay = 0.01;
  int batch = 16;
  int max_epochs = 12;
  double gate = 0.15;  // freeze once held-out mean |r - l| drops below this
  double holdout_frac = 0.1;

  TransformerSpec spec(int vocab) const {
    TransformerSpec s;
    s.vocab = vocab;
    s.max_seq = max_seq;
    s.width = width;
    s.heads = heads;
    s.layers = layers;
    s.ffn_mult = ffn_mult;
    s.causal = false;
    s.mask_self = true;  // relevance scoring is token matching; self-logits drown it
    return s;
  }
};

struct RewardScore {
  double r = 0.0;       // relevance in (0,1)
  double reward = 0.0;  // -|r - l|, in [-1, 0]
};

class CrossEncoderReward {
 public:
  CrossEncoderReward(const RewardConfig& cfg, int vocab_size, uint64_t seed)
      : cfg_(cfg), spec_(cfg.spec(vocab_size)) {
    params_ = init_transformer(spec_, seed, cfg.init_std);
    Rng rng(derive_seed(seed, 0x88));
    for (auto& v : params_.get("emb.tok").data) v = rng.next_normal() * cfg.tok_emb_std;
    // near-identity query/key maps: same-token attention works from step one
    for (int l = 0; l < spec_.layers; ++l)
      for (const char* nm : {".attn.wq", ".attn.wk"}) {
        Tensor& w = params_.get("blk" + std::to_string(l) + nm);
        for (int i = 0; i < w.shape[0]; ++i) w.at(i, i) += cfg.qk_identity;
      }
    params_.add("mlp.w1", Tensor::randn({spec_.width, spec_.width}, rng, cfg.init_std));
    params_.add("mlp.b1", Tensor::zeros({spec_.width}));
    params_.add("mlp.w2", Tensor::randn({spec_.width, 1}, rng, cfg.init_std));
    params_.add("mlp.b2", Tensor::zeros({1}));
  }

  CrossEncoderReward(const RewardConfig& cfg, int vocab_size, ParameterStore params, bool frozen)
      : cfg_(cfg), spec_(cfg.spec(vocab_size)), params_(std::move(params)), frozen_(frozen) {}

  const RewardConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  const ParameterStore& params() const { return params_; }
  uint64_t fingerprint() const { return params_.fingerprint(); }

  // Refused once frozen; the frozen flag travels with the checkpoint.
  ParameterStore& mutable_params() {
    if (frozen_) fail(Errc::frozen_violation, "reward model is frozen; refusing to expose trainable parameters");
    return params_;
  }

  // sigmoid(MLP([CLS] state)) over [CLS] query [SEP] context
  Value score_graph(Graph& g, const std::vector<int>& query, const ProductContext& context,
                    bool trainable) const {
    if (frozen_ && trainable) fail(Errc::frozen_violation, "cannot train a frozen reward model");
    std::vector<int> tokens;
    tokens.reserve(query.size() + context.size() + 2);
    tokens.push_back(Vocab::kCls);
    tokens.insert(tokens.end(), query.begin(), query.end());
    tokens.push_back(Vocab::kSep);
    tokens.insert(tokens.end(), context.begin(), context.end());
    Value states = transformer_states(g, spec_, params_, tokens, trainable);
    Value cls = g.slice(states, 0, 0, 1);
    auto P = [&](const char* name) {
      return trainable ? g.param(name, params_.get(name)) : g.constant_ref(params_.get(name));
    };
    Value h = g.relu(g.add(g.matmul(cls, P("mlp.w1")), P("mlp.b1")));
    return g.sigmoid(g.add(g.matmul(h, P("mlp.w2")), P("mlp.b2")));
  }

  // Frozen, pure scoring: rewards must be stable.
  double score(const std::vector<int>& query, const ProductContext& context) const {
    if (!frozen_) fail(Errc::frozen_violation, "score: reward model must be frozen first");
    Graph g;
    return g.out(score_graph(g, query, context, false)).value();
  }

 private:
  RewardConfig cfg_;
  TransformerSpec spec_;
  ParameterStore params_;
  bool frozen_ = false;
};

// reward = -|r(q, [t;s]) - l|
inline RewardScore reward_of(const CrossEncoderReward& model, const std::vector<int>& query,
                             const std::vector<int>& title, const std::vector<int>& summary, double label) {
  if (label < 0.0 || label > 1.0) fail(Errc::bad_argument, "reward_of: label outside [0,1]");
  RewardScore s;
  s.r = model.score(query, build_context(title, summary, model.config().context_budget));
  s.reward = -std::fabs(s.r - label);
  return s;
}

// Deterministic test oracle: fraction of query targets the product carries.
inline double oracle_score(const Query& query, const Product& product) {
  if (query.targets.empty()) fail(Errc::bad_argument, "oracle_score: query has no targets");
  int matched = 0;
  for (int t : query.targets)
    if (std::binary_search(product.attributes.begin(), product.attributes.end(), t)) ++matched;
  return static_cast<double>(matched) / static_cast<double>(query.targets.size());
}

struct RewardTrainLog {
  std::vector<double> train_loss_per_epoch;
  std::vector<double> holdout_mae_per_epoch;
  int epochs_run = 0;
  double final_holdout_mae = 0.0;
};

// One-time supervised training on judged pairs with [t;d] contexts, squared
// error against the graded label; freezes at the gate.
inline CrossEncoderReward train_reward(const Corpus& corpus, const std::vector<JudgedPair>& pairs,
                                       const RewardConfig& cfg, uint64_t seed, RewardTrainLog* log = nullptr) {
  bool seen[3] = {false, false, false};
  for (const JudgedPair& p : pairs) {
    if (p.label == 0.0) seen[0] = true;
    if (p.label == 0.5) seen[1] = true;
    if (p.label == 1.0) seen[2] = true;
  }
  if (!seen[0] || !seen[1] || !seen[2])
    fail(Errc::degenerate_input, "train_reward: pairs must cover labels 0, 0.5 and 1");

  const Vocab vocab = corpus.vocab();
  CrossEncoderReward model(cfg, vocab.size(), derive_seed(seed, 0x11));

  struct Example {
    const Query* query;
    ProductContext context;
    double label;
  };
  std::unordered_map<int, const Query*> by_id;
  for (const Query& q : corpus.train_queries) by_id[q.id] = &q;
  for (const Query& q : corpus.eval_queries) by_id[q.id] = &q;

  std::vector<Example> examples;
  examples.reserve(pairs.size());
  for (const JudgedPair& p : pairs) {
    auto it = by_id.find(p.query_id);
    if (it == by_id.end()) fail(Errc::bad_argument, "train_reward: pair references unknown query");
    const Product& prod = corpus.product(p.product_id);
    examples.push_back(
        {it->second, build_context(prod.title, prod.description, cfg.context_budget), p.label});
  }
  Rng rng(derive_seed(seed, 0x12));
  rng.shuffle(examples);

  size_t n_hold = static_cast<size_t>(static_cast<double>(examples.size()) * cfg.holdout_frac);
  n_hold = std::min(std::max<size_t>(n_hold, 1), examples.size() - 1);
  std::vector<Example> holdout(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<Example> train(examples.begin() + static_cast<std::ptrdiff_t>(n_hold), examples.end());

  auto holdout_mae = [&] {
    double s = 0.0;
    for (const Example& e : holdout) {
      Graph g;
      s += std::fabs(g.out(model.score_graph(g, e.query->tokens, e.context, false)).value() - e.label);
    }
    return s / static_cast<double>(holdout.size());
  };

  OptimizerState opt;
  opt.cfg.weight_decay = cfg.weight_decay;
  const int64_t steps_per_epoch = (static_cast<int64_t>(train.size()) + cfg.batch - 1) / cfg.batch;
  const int64_t total_steps = steps_per_epoch * cfg.max_epochs;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng erng(derive_seed(seed, 0x13, static_cast<uint64_t>(epoch)));
    erng.shuffle(train);
    double epoch_loss = 0.0;
    int64_t step = steps_per_epoch * epoch;
    for (size_t at = 0; at < train.size(); at += static_cast<size_t>(cfg.batch), ++step) {
      const size_t end = std::min(train.size(), at + static_cast<size_t>(cfg.batch));
      GradMap acc;
      double batch_loss = 0.0;
      const double inv = 1.0 / static_cast<double>(end - at);
      for (size_t i = at; i < end; ++i) {
        Graph g;
        Value r = model.score_graph(g, train[i].query->tokens, train[i].context, true);
        Value d = g.sub(r, g.constant(Tensor::scalar(train[i].label)));
        Value loss = g.sum(g.mul(d, d));
        batch_loss += g.out(loss).value() * inv;
        accumulate_grads(acc, g.backward(loss, model.params()), inv);
      }
      if (!std::isfinite(batch_loss)) fail(Errc::training_failed, "train_reward: loss diverged");
      adamw_step(model.mutable_params(), acc, opt, cosine_lr(step, total_steps, cfg.lr));
      epoch_loss += batch_loss;
    }
    const double mae = holdout_mae();
    if (log) {
      log->train_loss_per_epoch.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
      log->holdout_mae_per_epoch.push_back(mae);
      log->epochs_run = epoch + 1;
      log->final_holdout_mae = mae;
    }
    if (mae < cfg.gate) {
      model.freeze();
      return model;
    }
  }
  fail(Errc::training_failed,
       "train_reward: held-out mean |r-l| never reached the gate; enlarge the model, data, or epochs");
}

}  // namespace relsum
