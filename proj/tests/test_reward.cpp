#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "relsum/gradcheck.hpp"
#include "relsum/reward.hpp"

using namespace relsum;

namespace {
RewardConfig micro_config() {
  RewardConfig cfg;
  cfg.layers = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.max_seq = 32;
  cfg.context_budget = 12;
  return cfg;
}
}  // namespace

TEST_CASE("build_context layouts") {
  std::vector<int> title{10, 11, 12};
  SECTION("no extra input: title only") {
    CHECK(build_context(title, std::nullopt, 20) == title);
  }
  SECTION("description appended after a separator") {
    std::vector<int> desc{20, 21};
    auto ctx = build_context(title, desc, 20);
    REQUIRE(ctx.size() == 6);
    CHECK(ctx[3] == Vocab::kSep);
    CHECK(ctx[4] == 20);
  }
  SECTION("extra truncated to fit the budget") {
    std::vector<int> desc{20, 21, 22, 23, 24, 25};
    auto ctx = build_context(title, desc, 6);
    REQUIRE(ctx.size() == 6);
    CHECK(ctx.back() == 21);  // only two extra tokens fit after the separator
  }
  SECTION("budget below the title length is an error") {
    CHECK_THROWS_AS(build_context(title, std::nullopt, 2), Error);
  }
}

TEST_CASE("frozen scoring is pure and bit-deterministic") {
  auto cfg = micro_config();
  CrossEncoderReward model(cfg, 32, 5);
  model.freeze();
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> q(static_cast<size_t>(rng.next_int(1, 4)));
    for (auto& t : q) t = rng.next_int(6, 31);
    std::vector<int> ctx(static_cast<size_t>(rng.next_int(1, 8)));
    for (auto& t : ctx) t = rng.next_int(6, 31);
    const double a = model.score(q, ctx);
    const double b = model.score(q, ctx);
    CHECK(a == b);  // bit-identical
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }
}

TEST_CASE("scoring an unfrozen model is refused") {
  auto cfg = micro_config();
  CrossEncoderReward model(cfg, 32, 5);
  try {
    model.score({7}, {8});
    FAIL("expected frozen_violation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::frozen_violation);
  }
}

TEST_CASE("a frozen model refuses training access") {
  auto cfg = micro_config();
  CrossEncoderReward model(cfg, 32, 5);
  model.freeze();
  CHECK_THROWS_AS(model.mutable_params(), Error);
  Graph g;
  CHECK_THROWS_AS(model.score_graph(g, {7}, {8}, true), Error);
}

TEST_CASE("reward_of implements -|r - l| with its bounds") {
  auto cfg = micro_config();
  CrossEncoderReward model(cfg, 32, 9);
  model.freeze();
  std::vector<int> query{7, 8};
  std::vector<int> title{9, 10};
  std::vector<int> summary{11};
  for (double l : {0.0, 0.5, 1.0}) {
    RewardScore s = reward_of(model, query, title, summary, l);
    CHECK(s.reward == -std::fabs(s.r - l));
    CHECK(s.reward <= 0.0);
    CHECK(s.reward >= -1.0);
  }
  // reward is monotone in |r - l|: closer score, higher reward
  RewardScore a = reward_of(model, query, title, summary, 1.0);
  RewardScore b = reward_of(model, query, title, summary, 0.0);
  if (std::fabs(a.r - 1.0) < std::fabs(b.r - 0.0)) CHECK(a.reward > b.reward);
  CHECK_THROWS_AS(reward_of(model, query, title, summary, 1.5), Error);
}

TEST_CASE("oracle_score is the target-overlap fraction") {
  Product p;
  p.attributes = {10, 11, 12};
  Query q;
  q.targets = {10, 11};
  CHECK(oracle_score(q, p) == 1.0);
  q.targets = {10, 99};
  CHECK(oracle_score(q, p) == 0.5);
  q.targets = {98, 99};
  CHECK(oracle_score(q, p) == 0.0);
  q.targets = {};
  CHECK_THROWS_AS(oracle_score(q, p), Error);
}

TEST_CASE("reward MSE gradients pass grad_check on micro instances") {
  auto cfg = micro_config();
  cfg.init_std = 0.5;  // O(1) gradients keep finite differences out of the roundoff floor
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CrossEncoderReward model(cfg, 8, seed);
    std::vector<int> query{6, 7};
    std::vector<int> ctx{5, 6, 4};
    LossFn fn = [&](Graph& g, const ParameterStore&) {
      Value r = model.score_graph(g, query, ctx, true);
      Value d = g.sub(r, g.constant(Tensor::scalar(0.5)));
      return g.sum(g.mul(d, d));
    };
    CHECK(grad_check(fn, model.mutable_params(), 1e-4) < 1e-4);
  }
}

TEST_CASE("train_reward requires all three label values") {
  CorpusConfig ccfg;
  ccfg.n_products = 20;
  ccfg.n_attributes = 10;
  ccfg.n_fillers = 12;
  ccfg.n_train_queries = 2;
  ccfg.n_eval_queries = 2;
  ccfg.pairs_per_query = 2;
  Corpus corpus = gen_corpus(ccfg, 3);
  std::vector<JudgedPair> pairs;
  pairs.push_back(JudgedPair{corpus.train_queries[0].id, 0, 4, 1.0});
  pairs.push_back(JudgedPair{corpus.train_queries[0].id, 1, 1, 0.0});
  CHECK_THROWS_AS(train_reward(corpus, pairs, micro_config(), 1), Error);
}
