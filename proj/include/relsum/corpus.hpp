#pragma once

// Synthetic e-commerce world: products whose titles reveal only part of the
// attribute set, queries with Zipf traffic weights, a deterministic rating
// simulator, judged pools, and the golden-full / golden-tail split.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "relsum/jsonl.hpp"
#include "relsum/rng.hpp"
#include "relsum/vocab.hpp"

namespace relsum {

struct Product {
  int id = 0;
  std::vector<int> attributes;   // hidden ground-truth set, sorted
  std::vector<int> title;        // reveals a strict nonempty subset of attributes
  std::vector<int> description;  // carries every attribute, interleaved with filler

  bool operator==(const Product&) const = default;
};

struct Query {
  int id = 0;
  std::vector<int> tokens;   // targets plus optional filler
  std::vector<int> targets;  // 1..3 attribute tokens, sorted
  double weight = 0.0;       // Zipf traffic weight, positive

  bool operator==(const Query&) const = default;
};

struct JudgedPair {
  int query_id = 0;
  int product_id = 0;
  int rating = 0;     // 0..4, though the simulator never emits 0
  double label = 0;   // Table-style mapping of rating

  bool operator==(const JudgedPair&) const = default;
};

struct CorpusConfig {
  int n_attributes = 200;
  int n_fillers = 300;
  int n_products = 2000;
  int attrs_min = 4;
  int attrs_max = 8;
  int title_max = 12;  // invariant allows up to 16
  int desc_min = 24;   // invariant range [24, 64]
  int desc_max = 40;
  int n_train_queries = 900;
  int n_eval_queries = 500;
  int pairs_per_query = 9;
  double zipf_exponent = 1.1;
  double distractor_skew = 0.8;
  int query_filler_max = 2;

  void validate() const {
    if (n_products < 1 || n_train_queries < 0 || n_eval_queries < 0 || pairs_per_query < 1)
      fail(Errc::bad_argument, "corpus config: sizes must be positive");
    if (attrs_min < 2)
      fail(Errc::bad_argument, "corpus config: attrs_min must be >= 2 so a title can both reveal and hide one");
    if (attrs_max < attrs_min || attrs_max > n_attributes)
      fail(Errc::bad_argument, "corpus config: attrs_max outside [attrs_min, n_attributes]");
    if (title_max < attrs_max - 1 || title_max > 16)
      fail(Errc::bad_argument, "corpus config: title_max must cover revealed attributes and stay <= 16");
    if (desc_min < 24 || desc_max > 64 || desc_min > desc_max)
      fail(Errc::bad_argument, "corpus config: description length must stay inside [24, 64]");
    if (desc_min < attrs_max) fail(Errc::bad_argument, "corpus config: descriptions too short for the attribute set");
    if (zipf_exponent <= 0 || distractor_skew < 0) fail(Errc::bad_argument, "corpus config: bad exponent");
  }
};

struct GoldenSplit {
  std::vector<int> full;  // all evaluation query ids, traffic-sorted
  std::vector<int> tail;  // bottom tertile by traffic weight
};

struct Corpus {
  CorpusConfig config;
  std::vector<Product> products;
  std::vector<Query> train_queries;
  std::vector<Query> eval_queries;
  std::vector<JudgedPair> train_pairs;
  std::vector<JudgedPair> eval_pairs;

  Vocab vocab() const { return Vocab(config.n_attributes, config.n_fillers); }

  const Product& product(int id) const {
    if (id < 0 || id >= static_cast<int>(products.size()))
      fail(Errc::bad_argument, "unknown product id " + std::to_string(id));
    return products[static_cast<size_t>(id)];
  }

  bool operator==(const Corpus&) const = default;
};

inline bool operator==(const CorpusConfig& a, const CorpusConfig& b) {
  return a.n_attributes == b.n_attributes && a.n_fillers == b.n_fillers && a.n_products == b.n_products &&
         a.attrs_min == b.attrs_min && a.attrs_max == b.attrs_max && a.title_max == b.title_max &&
         a.desc_min == b.desc_min && a.desc_max == b.desc_max && a.n_train_queries == b.n_train_queries &&
         a.n_eval_queries == b.n_eval_queries && a.pairs_per_query == b.pairs_per_query &&
         a.zipf_exponent == b.zipf_exponent && a.distractor_skew == b.distractor_skew &&
         a.query_filler_max == b.query_filler_max;
}

// ---- rating simulator ----

inline double rating_to_label(int rating) {
  switch (rating) {
    case 4: return 1.0;
    case 3: return 0.5;
    case 2:
    case 1:
    case 0: return 0.0;
  }
  fail(Errc::bad_argument, "rating out of range: " + std::to_string(rating));
}

// Pure membership rule over target attributes. The simulator never emits 0.
inline int judge(const Query& query, const Product& product) {
  if (query.targets.empty()) fail(Errc::bad_argument, "judge: query has no target attributes");
  int matched = 0;
  for (int t : query.targets)
    if (std::binary_search(product.attributes.begin(), product.attributes.end(), t)) ++matched;
  const int missing = static_cast<int>(query.targets.size()) - matched;
  if (missing == 0) return 4;
  if (missing == 1 && matched >= 1) return 3;
  if (matched >= 1) return 2;
  return 1;
}

// ---- generation ----

namespace detail {

// Deals attribute ids from a reshuffled deck so catalog-wide attribute
// frequency stays near uniform.
class AttrDeck {
 public:
  AttrDeck(int n_attributes, Rng& rng) : rng_(rng) {
    all_.resize(static_cast<size_t>(n_attributes));
    for (int i = 0; i < n_attributes; ++i) all_[static_cast<size_t>(i)] = i;
    reshuffle();
  }

  std::vector<int> deal(int k) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    while (static_cast<int>(out.size()) < k) {
      if (pos_ == all_.size()) reshuffle();
      const int cand = all_[pos_++];
      if (std::find(out.begin(), out.end(), cand) == out.end()) out.push_back(cand);
    }
    return out;
  }

 private:
  void reshuffle() {
    rng_.shuffle(all_);
    pos_ = 0;
  }
  Rng& rng_;
  std::vector<int> all_;
  size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<Product> gen_catalog(const CorpusConfig& cfg, uint64_t seed) {
  cfg.validate();
  Vocab vocab(cfg.n_attributes, cfg.n_fillers);
  Rng rng(derive_seed(seed, 0x10));
  detail::AttrDeck deck(cfg.n_attributes, rng);

  std::vector<Product> products;
  products.reserve(static_cast<size_t>(cfg.n_products));
  for (int pid = 0; pid < cfg.n_products; ++pid) {
    Product p;
    p.id = pid;
    const int k = rng.next_int(cfg.attrs_min, cfg.attrs_max);
    std::vector<int> attrs_local = deck.deal(k);
    p.attributes.reserve(attrs_local.size());
    for (int a : attrs_local) p.attributes.push_back(vocab.attr_id(a));
    std::sort(p.attributes.begin(), p.attributes.end());

    // reveal each attribute with p = 0.5 but keep the subset strict and nonempty
    std::vector<int> revealed;
    do {
      revealed.clear();
      for (int a : p.attributes)
        if (rng.next_double() < 0.5) revealed.push_back(a);
    } while (revealed.empty() || static_cast<int>(revealed.size()) == k ||
             static_cast<int>(revealed.size()) > cfg.title_max);

    p.title = revealed;
    const int title_fill = std::min(cfg.title_max - static_cast<int>(revealed.size()), rng.next_int(1, 3));
    for (int i = 0; i < title_fill; ++i)
      p.title.push_back(vocab.filler_id(rng.next_int(0, cfg.n_fillers - 1)));
    rng.shuffle(p.title);

    const int desc_len = rng.next_int(cfg.desc_min, cfg.desc_max);
    p.description = p.attributes;
    for (int i = static_cast<int>(p.attributes.size()); i < desc_len; ++i)
      p.description.push_back(vocab.filler_id(rng.next_int(0, cfg.n_fillers - 1)));
    rng.shuffle(p.description);

    products.push_back(std::move(p));
  }
  return products;
}

namespace detail {

// Query specificity grows toward the traffic tail: more targets, and a
// stronger preference for attributes the title hides. Tail queries are the
// ones descriptions have to answer.
inline Query gen_query(int qid, int rank, int total, const CorpusConfig& cfg, const Vocab& vocab,
                       const std::vector<Product>& products, Rng& rng) {
  Query q;
  q.id = qid;
  q.weight = std::pow(static_cast<double>(rank), -cfg.zipf_exponent);

  const double depth = total > 1 ? static_cast<double>(rank - 1) / static_cast<double>(total - 1) : 0.0;
  const int max_targets = depth < 1.0 / 3.0 ? 1 : (depth < 2.0 / 3.0 ? 2 : 3);
  const double p_hidden = 0.25 + 0.55 * depth;

  const Product& src = products[rng.next_below(products.size())];
  std::set<int> title_set(src.title.begin(), src.title.end());
  std::vector<int> hidden, shown;
  for (int a : src.attributes)
    (title_set.count(a) ? shown : hidden).push_back(a);

  const int want = std::min<int>(rng.next_int(1, max_targets), static_cast<int>(src.attributes.size()));
  std::set<int> chosen;
  while (static_cast<int>(chosen.size()) < want) {
    std::vector<int>& pool = (rng.next_double() < p_hidden && !hidden.empty()) ? hidden : shown;
    std::vector<int>& use = pool.empty() ? (hidden.empty() ? shown : hidden) : pool;
    chosen.insert(use[rng.next_below(use.size())]);
  }
  q.targets.assign(chosen.begin(), chosen.end());

  q.tokens = q.targets;
  const int fills = rng.next_int(0, cfg.query_filler_max);
  for (int i = 0; i < fills; ++i) q.tokens.push_back(vocab.filler_id(rng.next_int(0, cfg.n_fillers - 1)));
  rng.shuffle(q.tokens);
  return q;
}

// Judged pool for one query: its source-like perfect match plus graded
// distractors. Random slots use a popularity skew so pools reuse products.
inline void gen_pool(const Query& q, const CorpusConfig& cfg, const std::vector<Product>& products,
                     const std::vector<std::vector<int>>& by_attr, std::vector<JudgedPair>& out, Rng& rng) {
  std::set<int> in_pool;
  auto add = [&](const Product& p) {
    if (in_pool.count(p.id)) return;
    in_pool.insert(p.id);
    const int r = judge(q, p);
    out.push_back(JudgedPair{q.id, p.id, r, rating_to_label(r)});
  };

  // a perfect match exists by construction; find one through the index
  {
    const std::vector<int>& cands = by_attr[static_cast<size_t>(q.targets[0])];
    for (int tries = 0; tries < 64 && in_pool.empty(); ++tries) {
      const Product& p = products[static_cast<size_t>(cands[rng.next_below(cands.size())])];
      if (judge(q, p) == 4) add(p);
    }
    if (in_pool.empty()) {
      for (int pid : cands)
        if (judge(q, products[static_cast<size_t>(pid)]) == 4) {
          add(products[static_cast<size_t>(pid)]);
          break;
        }
    }
  }

  std::vector<double> skew(products.size());
  for (size_t i = 0; i < products.size(); ++i)
    skew[i] = std::pow(static_cast<double>(i + 1), -cfg.distractor_skew);

  int guard = 0;
  while (static_cast<int>(in_pool.size()) < cfg.pairs_per_query && guard++ < cfg.pairs_per_query * 40) {
    const int slot = static_cast<int>(in_pool.size()) % 3;
    if (slot == 1 && q.targets.size() >= 1) {
      // near miss: shares at least one target attribute
      const int t = q.targets[rng.next_below(q.targets.size())];
      const auto& cands = by_attr[static_cast<size_t>(t)];
      add(products[static_cast<size_t>(cands[rng.next_below(cands.size())])]);
    } else {
      add(products[rng.next_weighted(skew)]);
    }
  }
}

}  // namespace detail

inline Corpus gen_corpus(const CorpusConfig& cfg, uint64_t seed) {
  cfg.validate();
  Corpus c;
  c.config = cfg;
  c.products = gen_catalog(cfg, seed);
  Vocab vocab = c.vocab();

  // attribute id (0-based within the attribute block) -> product ids
  std::vector<std::vector<int>> by_attr(static_cast<size_t>(vocab.size()));
  for (const Product& p : c.products)
    for (int a : p.attributes) by_attr[static_cast<size_t>(a)].push_back(p.id);

  auto gen_role = [&](int n, uint64_t role_salt, std::vector<Query>& queries, std::vector<JudgedPair>& pairs,
                      int id_base) {
    Rng rng(derive_seed(seed, role_salt));
    for (int i = 0; i < n; ++i) {
      Query q = detail::gen_query(id_base + i, i + 1, n, cfg, vocab, c.products, rng);
      detail::gen_pool(q, cfg, c.products, by_attr, pairs, rng);
      queries.push_back(std::move(q));
    }
  };
  gen_role(cfg.n_train_queries, 0x20, c.train_queries, c.train_pairs, 0);
  gen_role(cfg.n_eval_queries, 0x30, c.eval_queries, c.eval_pairs, cfg.n_train_queries);
  return c;
}

// ---- golden split ----

// Queries sorted by traffic weight descending (ties by id); tail = bottom
// tertile (ceil(n/3) queries).
inline GoldenSplit split_golden(const std::vector<Query>& queries) {
  if (queries.size() < 3) fail(Errc::degenerate_input, "split_golden: need at least 3 queries");
  std::vector<const Query*> sorted;
  sorted.reserve(queries.size());
  for (const Query& q : queries) sorted.push_back(&q);
  std::sort(sorted.begin(), sorted.end(), [](const Query* a, const Query* b) {
    if (a->weight != b->weight) return a->weight > b->weight;
    return a->id < b->id;
  });
  GoldenSplit split;
  split.full.reserve(sorted.size());
  for (const Query* q : sorted) split.full.push_back(q->id);
  const size_t n = sorted.size();
  const size_t head = 2 * n / 3;
  split.tail.assign(split.full.begin() + static_cast<std::ptrdiff_t>(head), split.full.end());
  return split;
}

// ---- serialization ----

namespace detail {

inline FileMeta corpus_meta(const std::string& kind, const CorpusConfig& cfg, uint64_t root_seed,
                            uint64_t config_hash) {
  FileMeta m;
  m.kind = kind;
  m.root_seed = root_seed;
  m.config_hash = config_hash;
  m.extra = json{{"n_attributes", cfg.n_attributes},
                 {"n_fillers", cfg.n_fillers},
                 {"n_products", cfg.n_products},
                 {"attrs_min", cfg.attrs_min},
                 {"attrs_max", cfg.attrs_max},
                 {"title_max", cfg.title_max},
                 {"desc_min", cfg.desc_min},
                 {"desc_max", cfg.desc_max},
                 {"n_train_queries", cfg.n_train_queries},
                 {"n_eval_queries", cfg.n_eval_queries},
                 {"pairs_per_query", cfg.pairs_per_query},
                 {"zipf_exponent", cfg.zipf_exponent},
                 {"distractor_skew", cfg.distractor_skew},
                 {"query_filler_max", cfg.query_filler_max}};
  return m;
}

inline CorpusConfig config_from_meta(const FileMeta& m) {
  CorpusConfig cfg;
  cfg.n_attributes = m.extra.at("n_attributes").get<int>();
  cfg.n_fillers = m.extra.at("n_fillers").get<int>();
  cfg.n_products = m.extra.at("n_products").get<int>();
  cfg.attrs_min = m.extra.at("attrs_min").get<int>();
  cfg.attrs_max = m.extra.at("attrs_max").get<int>();
  cfg.title_max = m.extra.at("title_max").get<int>();
  cfg.desc_min = m.extra.at("desc_min").get<int>();
  cfg.desc_max = m.extra.at("desc_max").get<int>();
  cfg.n_train_queries = m.extra.at("n_train_queries").get<int>();
  cfg.n_eval_queries = m.extra.at("n_eval_queries").get<int>();
  cfg.pairs_per_query = m.extra.at("pairs_per_query").get<int>();
  cfg.zipf_exponent = m.extra.at("zipf_exponent").get<double>();
  cfg.distractor_skew = m.extra.at("distractor_skew").get<double>();
  cfg.query_filler_max = m.extra.at("query_filler_max").get<int>();
  return cfg;
}

inline void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries,
                         const Vocab& vocab, const FileMeta& meta) {
  JsonlWriter w(path, meta);
  for (const Query& q : queries)
    w.write(json{{"id", q.id}, {"tokens", vocab.names(q.tokens)}, {"targets", vocab.names(q.targets)},
                 {"weight", q.weight}});
}

inline void save_pairs(const std::filesystem::path& path, const std::vector<JudgedPair>& pairs,
                       const FileMeta& meta) {
  JsonlWriter w(path, meta);
  for (const JudgedPair& p : pairs)
    w.write(json{{"query_id", p.query_id}, {"product_id", p.product_id}, {"rating", p.rating},
                 {"label", p.label}});
}

inline std::vector<Query> load_queries(const std::filesystem::path& path, const std::string& kind,
                                       const Vocab& vocab) {
  JsonlReader r(path, kind);
  std::vector<Query> out;
  while (auto j = r.next()) {
    try {
      Query q;
      q.id = j->at("id").get<int>();
      q.tokens = vocab.ids(j->at("tokens").get<std::vector<std::string>>());
      q.targets = vocab.ids(j->at("targets").get<std::vector<std::string>>());
      q.weight = j->at("weight").get<double>();
      if (q.weight <= 0) fail(Errc::parse_error, "non-positive traffic weight");
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path.string() + ":" + std::to_string(r.line_no()) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<JudgedPair> load_pairs(const std::filesystem::path& path, const std::string& kind) {
  JsonlReader r(path, kind);
  std::vector<JudgedPair> out;
  while (auto j = r.next()) {
    try {
      JudgedPair p;
      p.query_id = j->at("query_id").get<int>();
      p.product_id = j->at("product_id").get<int>();
      p.rating = j->at("rating").get<int>();
      p.label = j->at("label").get<double>();
      if (p.label != rating_to_label(p.rating))
        fail(Errc::parse_error, path.string() + ":" + std::to_string(r.line_no()) + ": label does not match rating");
      out.push_back(p);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path.string() + ":" + std::to_string(r.line_no()) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

inline void save_corpus(const std::filesystem::path& dir, const Corpus& c, uint64_t root_seed,
                        uint64_t config_hash) {
  std::filesystem::create_directories(dir);
  const Vocab vocab = c.vocab();
  auto meta = [&](const std::string& kind) { return detail::corpus_meta(kind, c.config, root_seed, config_hash); };
  {
    JsonlWriter w(dir / "products.jsonl", meta("products"));
    for (const Product& p : c.products)
      w.write(json{{"id", p.id}, {"title", vocab.names(p.title)}, {"description", vocab.names(p.description)},
                   {"attributes", vocab.names(p.attributes)}});
  }
  detail::save_queries(dir / "queries.jsonl", c.train_queries, vocab, meta("queries"));
  detail::save_pairs(dir / "pairs.jsonl", c.train_pairs, meta("pairs"));
  detail::save_queries(dir / "golden_queries.jsonl", c.eval_queries, vocab, meta("queries"));
  detail::save_pairs(dir / "golden_pairs.jsonl", c.eval_pairs, meta("pairs"));
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  const auto products_path = dir / "products.jsonl";
  JsonlReader r(products_path, "products");
  c.config = detail::config_from_meta(r.meta());
  const Vocab vocab = c.vocab();
  while (auto j = r.next()) {
    try {
      Product p;
      p.id = j->at("id").get<int>();
      p.title = vocab.ids(j->at("title").get<std::vector<std::string>>());
      p.description = vocab.ids(j->at("description").get<std::vector<std::string>>());
      p.attributes = vocab.ids(j->at("attributes").get<std::vector<std::string>>());
      c.products.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, products_path.string() + ":" + std::to_string(r.line_no()) + ": " + e.what());
    }
  }
  c.train_queries = detail::load_queries(dir / "queries.jsonl", "queries", vocab);
  c.train_pairs = detail::load_pairs(dir / "pairs.jsonl", "pairs");
  c.eval_queries = detail::load_queries(dir / "golden_queries.jsonl", "queries", vocab);
  c.eval_pairs = detail::load_pairs(dir / "golden_pairs.jsonl", "pairs");
  return c;
}

}  // namespace relsum
