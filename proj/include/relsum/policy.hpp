#pragma once

// The trainable summarization policy: a tiny causal LM over the shared
// vocabulary, plus prompt construction, temperature sampling with recorded
// untempered log-probs, teacher-forced scoring, the heuristic summarizer,
// and behavior-cloned reference pretraining.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relsum/corpus.hpp"
#include "relsum/optim.hpp"
#include "relsum/transformer.hpp"

namespace relsum {

struct PolicyConfig {
  int layers = 2;
  int width = 64;
  int heads = 2;
  int ffn_mult = 4;
  int context_window = 128;
  int title_budget = 16;
  int desc_budget = 64;
  int summary_budget = 12;
  double init_std = 0.02;

  TransformerSpec spec(int vocab) const {
    TransformerSpec s;
    s.vocab = vocab;
    s.max_seq = context_window;
    s.width = width;
    s.heads = heads;
    s.layers = layers;
    s.ffn_mult = ffn_mult;
    s.causal = true;
    return s;
  }
};

// Exact prompt layout: [DESCRIPTION]: <description> [TITLE]: <title> [ATTRS],
// description truncated first.
inline std::vector<int> build_prompt(const std::vector<int>& title, const std::vector<int>& description,
                                     const PolicyConfig& cfg) {
  if (title.empty()) fail(Errc::bad_argument, "build_prompt: empty title");
  std::vector<int> out;
  out.reserve(description.size() + title.size() + 3);
  out.push_back(Vocab::kDescMark);
  const size_t dlen = std::min<size_t>(description.size(), static_cast<size_t>(cfg.desc_budget));
  out.insert(out.end(), description.begin(), description.begin() + static_cast<std::ptrdiff_t>(dlen));
  out.push_back(Vocab::kTitleMark);
  const size_t tlen = std::min<size_t>(title.size(), static_cast<size_t>(cfg.title_budget));
  out.insert(out.end(), title.begin(), title.begin() + static_cast<std::ptrdiff_t>(tlen));
  out.push_back(Vocab::kAttrsMark);
  return out;
}

// Description tokens absent from the title, original order, deduplicated,
// truncated to the budget.
inline std::vector<int> heuristic_summary(const std::vector<int>& title, const std::vector<int>& description,
                                          int budget = 12) {
  std::set<int> title_set(title.begin(), title.end());
  std::set<int> seen;
  std::vector<int> out;
  for (int t : description) {
    if (static_cast<int>(out.size()) >= budget) break;
    if (title_set.count(t) || seen.count(t)) continue;
    seen.insert(t);
    out.push_back(t);
  }
  return out;
}

// One sampled completion: content tokens only (the end-of-summary token is a
// stop signal, not part of s), with untempered log-probs per token.
struct Rollout {
  std::vector<int> prompt;
  std::vector<int> completion;
  std::vector<double> logprobs;
};

class CausalPolicy {
 public:
  CausalPolicy(const PolicyConfig& cfg, int vocab_size, uint64_t seed)
      : cfg_(cfg), spec_(cfg.spec(vocab_size)) {
    params_ = init_transformer(spec_, seed, cfg.init_std);
    Rng rng(derive_seed(seed, 0x77));
    params_.add("head.w", Tensor::randn({spec_.width, spec_.vocab}, rng, cfg.init_std));
    params_.add("head.b", Tensor::zeros({spec_.vocab}));
  }

  CausalPolicy(const PolicyConfig& cfg, int vocab_size, ParameterStore params)
      : cfg_(cfg), spec_(cfg.spec(vocab_size)), params_(std::move(params)) {}

  const PolicyConfig& config() const { return cfg_; }
  const TransformerSpec& spec() const { return spec_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  uint64_t fingerprint() const { return params_.fingerprint(); }

  // full next-token logit matrix [n, vocab]
  Value logits(Graph& g, const std::vector<int>& tokens, bool trainable) const {
    Value states = transformer_states(g, spec_, params_, tokens, trainable);
    return head(g, states, trainable);
  }

  // logits for the next token only; decoding path
  Tensor next_logits(const std::vector<int>& tokens) const {
    Graph g;
    Value states = transformer_states(g, spec_, params_, tokens, false);
    Value last = g.slice(states, 0, static_cast<int>(tokens.size()) - 1, 1);
    return g.out(head(g, last, false));
  }

  // log-probs of `completion` given `prompt`, differentiable when trainable
  Value completion_logprobs(Graph& g, const std::vector<int>& prompt, const std::vector<int>& completion,
                            bool trainable) const {
    if (prompt.empty()) fail(Errc::bad_argument, "completion_logprobs: empty prompt");
    if (completion.empty()) fail(Errc::bad_argument, "completion_logprobs: empty completion");
    std::vector<int> input = prompt;
    input.insert(input.end(), completion.begin(), completion.end() - 1);
    Value states = transformer_states(g, spec_, params_, input, trainable);
    Value rows = g.slice(states, 0, static_cast<int>(prompt.size()) - 1, static_cast<int>(completion.size()));
    Value lsm = g.log_softmax(head(g, rows, trainable));
    return g.gather(lsm, completion);
  }

  std::vector<double> token_logprobs(const std::vector<int>& prompt, const std::vector<int>& completion) const {
    Graph g;
    return g.out(completion_logprobs(g, prompt, completion, false)).data;
  }

 private:
  Value head(Graph& g, Value states, bool trainable) const {
    Value w = trainable ? g.param("head.w", params_.get("head.w")) : g.constant_ref(params_.get("head.w"));
    Value b = trainable ? g.param("head.b", params_.get("head.b")) : g.constant_ref(params_.get("head.b"));
    return g.add(g.matmul(states, w), b);
  }

  PolicyConfig cfg_;
  TransformerSpec spec_;
  ParameterStore params_;
};

struct PolicySnapshot {
  enum class Role { old_policy, ref };
  Role role;
  CausalPolicy policy;
  uint64_t fingerprint;

  PolicySnapshot(Role r, const CausalPolicy& p) : role(r), policy(p), fingerprint(p.fingerprint()) {}
};

namespace detail {

inline void softmax_inplace(std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (auto& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (auto& x : v) x /= s;
}

inline double log_prob_of(const Tensor& logits, int token) {
  // untempered log-softmax at one position
  const double* x = logits.data.data();
  const int n = static_cast<int>(logits.data.size());
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return x[token] - m - std::log(s);
}

}  // namespace detail

// Ancestral sampling at the given temperature. Sampled-token log-probs are
// recorded under the untempered (temperature-1) distribution; temperature
// shapes exploration only. Greedy decoding ignores the seed.
inline Rollout sample_one(const CausalPolicy& policy, const std::vector<int>& prompt, double temperature,
                          uint64_t seed, bool greedy = false) {
  const auto& cfg = policy.config();
  if (static_cast<int>(prompt.size()) + cfg.summary_budget + 1 > cfg.context_window)
    fail(Errc::bad_argument, "sample: prompt of " + std::to_string(prompt.size()) +
                                 " tokens exceeds the context window of " + std::to_string(cfg.context_window));
  if (!greedy && temperature <= 0.0) fail(Errc::bad_argument, "sample: temperature must be positive");

  Rng rng(seed);
  Rollout r;
  r.prompt = prompt;
  std::vector<int> tokens = prompt;
  for (int step = 0; step < cfg.summary_budget; ++step) {
    const Tensor logits = policy.next_logits(tokens);
    int chosen;
    if (greedy) {
      chosen = 0;
      for (int i = 1; i < static_cast<int>(logits.data.size()); ++i)
        if (logits.data[i] > logits.data[chosen]) chosen = i;
    } else {
      std::vector<double> probs = logits.data;
      for (auto& v : probs) v /= temperature;
      detail::softmax_inplace(probs);
      chosen = static_cast<int>(rng.next_weighted(probs));
    }
    if (chosen == Vocab::kEos) break;
    r.completion.push_back(chosen);
    r.logprobs.push_back(detail::log_prob_of(logits, chosen));
    tokens.push_back(chosen);
  }
  return r;
}

// G rollouts with per-rollout seed streams: derive_seed(seed, rollout_index).
inline std::vector<Rollout> sample(const CausalPolicy& policy, const std::vector<int>& prompt, int G,
                                   double temperature, uint64_t seed) {
  if (G < 1) fail(Errc::bad_argument, "sample: G must be >= 1");
  std::vector<Rollout> out;
  out.reserve(static_cast<size_t>(G));
  for (int i = 0; i < G; ++i)
    out.push_back(sample_one(policy, prompt, temperature, derive_seed(seed, static_cast<uint64_t>(i))));
  return out;
}

inline std::vector<int> greedy_summary(const CausalPolicy& policy, const std::vector<int>& title,
                                       const std::vector<int>& description) {
  return sample_one(policy, build_prompt(title, description, policy.config()), 1.0, 0, true).completion;
}

// ---- behavior-cloned reference initialization ----

struct PretrainConfig {
  int epochs = 3;
  int batch = 8;
  double lr = 3e-4;
  double weight_decay = 0.01;
  int max_products = 1400;    // BC subsample; 0 = all
  double holdout_frac = 0.1;  // products held out for perplexity/reproduction checks
};

struct PretrainLog {
  std::vector<double> train_loss_per_epoch;
  std::vector<double> eval_ppl_per_epoch;
  std::vector<int> holdout_product_ids;
};

namespace detail {

// mean NLL of (target + EOS) given the prompt
inline Value bc_loss(Graph& g, const CausalPolicy& policy, const std::vector<int>& prompt,
                     std::vector<int> target, bool trainable) {
  target.push_back(Vocab::kEos);
  Value lp = policy.completion_logprobs(g, prompt, target, trainable);
  return g.scale(g.mean(lp), -1.0);
}

}  // namespace detail

// Cross-entropy cloning of heuristic summaries. Returns the trained policy;
// callers snapshot it with role `ref`.
inline CausalPolicy pretrain_reference(const Corpus& corpus, const PolicyConfig& policy_cfg,
                                       const PretrainConfig& cfg, uint64_t seed, PretrainLog* log = nullptr) {
  if (corpus.products.empty()) fail(Errc::degenerate_input, "pretrain_reference: empty corpus");
  const Vocab vocab = corpus.vocab();
  CausalPolicy policy(policy_cfg, vocab.size(), derive_seed(seed, 0x01));

  std::vector<int> ids(corpus.products.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, 0x02));
  rng.shuffle(ids);
  size_t n_hold = static_cast<size_t>(static_cast<double>(ids.size()) * cfg.holdout_frac);
  n_hold = std::min(std::max<size_t>(n_hold, 1), ids.size() - 1);
  std::vector<int> holdout(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<int> train(ids.begin() + static_cast<std::ptrdiff_t>(n_hold), ids.end());
  if (cfg.max_products > 0 && static_cast<int>(train.size()) > cfg.max_products)
    train.resize(static_cast<size_t>(cfg.max_products));
  if (log) log->holdout_product_ids = holdout;

  auto example = [&](int pid) {
    const Product& p = corpus.products[static_cast<size_t>(pid)];
    return std::pair(build_prompt(p.title, p.description, policy_cfg),
                     heuristic_summary(p.title, p.description, policy_cfg.summary_budget));
  };

  auto eval_ppl = [&] {
    double nll = 0.0;
    int64_t count = 0;
    for (int pid : holdout) {
      auto [prompt, target] = example(pid);
      target.push_back(Vocab::kEos);
      for (double lp : policy.token_logprobs(prompt, target)) {
        nll -= lp;
        ++count;
      }
    }
    return std::exp(nll / static_cast<double>(count));
  };

  OptimizerState opt;
  opt.cfg.weight_decay = cfg.weight_decay;
  const int64_t steps_per_epoch = (static_cast<int64_t>(train.size()) + cfg.batch - 1) / cfg.batch;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng(derive_seed(seed, 0x03, static_cast<uint64_t>(epoch)));
    erng.shuffle(train);
    double epoch_loss = 0.0;
    int64_t step = steps_per_epoch * epoch;
    for (size_t at = 0; at < train.size(); at += static_cast<size_t>(cfg.batch), ++step) {
      const size_t end = std::min(train.size(), at + static_cast<size_t>(cfg.batch));
      GradMap acc;
      double batch_loss = 0.0;
      const double inv = 1.0 / static_cast<double>(end - at);
      for (size_t i = at; i < end; ++i) {
        auto [prompt, target] = example(train[i]);
        Graph g;
        Value loss = detail::bc_loss(g, policy, prompt, target, true);
        batch_loss += g.out(loss).value() * inv;
        accumulate_grads(acc, g.backward(loss, policy.params()), inv);
      }
      if (!std::isfinite(batch_loss)) fail(Errc::training_failed, "pretrain_reference: loss diverged");
      adamw_step(policy.params(), acc, opt, cosine_lr(step, total_steps, cfg.lr));
      epoch_loss += batch_loss;
    }
    if (log) {
      log->train_loss_per_epoch.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
      log->eval_ppl_per_epoch.push_back(eval_ppl());
    }
  }
  return policy;
}

}  // namespace relsum
