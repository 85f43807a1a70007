#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "relsum/corpus.hpp"

using namespace relsum;

namespace {
CorpusConfig small_config() {
  CorpusConfig cfg;
  cfg.n_products = 60;
  cfg.n_attributes = 30;
  cfg.n_fillers = 40;
  cfg.n_train_queries = 12;
  cfg.n_eval_queries = 9;
  cfg.pairs_per_query = 5;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};
}  // namespace

TEST_CASE("catalog generation is deterministic per seed") {
  auto cfg = small_config();
  CHECK(gen_catalog(cfg, 7) == gen_catalog(cfg, 7));
  CHECK(gen_catalog(cfg, 7) != gen_catalog(cfg, 8));
  CHECK(gen_corpus(cfg, 42) == gen_corpus(cfg, 42));
}

TEST_CASE("fixed attribute count config is honored") {
  auto cfg = small_config();
  cfg.attrs_min = cfg.attrs_max = 4;
  for (const Product& p : gen_catalog(cfg, 3)) CHECK(p.attributes.size() == 4);
}

TEST_CASE("products satisfy the title/description invariants") {
  auto cfg = small_config();
  Vocab vocab(cfg.n_attributes, cfg.n_fillers);
  for (const Product& p : gen_catalog(cfg, 5)) {
    std::set<int> attrs(p.attributes.begin(), p.attributes.end());
    std::set<int> title_attrs, desc_attrs;
    for (int t : p.title)
      if (vocab.is_attribute(t)) title_attrs.insert(t);
    for (int t : p.description)
      if (vocab.is_attribute(t)) desc_attrs.insert(t);
    // attributes(title) is a strict nonempty subset; description carries all
    CHECK(!title_attrs.empty());
    CHECK(title_attrs.size() < attrs.size());
    CHECK(std::includes(attrs.begin(), attrs.end(), title_attrs.begin(), title_attrs.end()));
    CHECK(desc_attrs == attrs);
    CHECK(p.title.size() <= 16);
    CHECK(p.description.size() >= 24);
    CHECK(p.description.size() <= 64);
  }
}

TEST_CASE("attribute frequency stays near uniform at catalog scale") {
  CorpusConfig cfg;
  cfg.n_products = 2000;
  std::vector<int> counts(static_cast<size_t>(cfg.n_attributes), 0);
  Vocab vocab(cfg.n_attributes, cfg.n_fillers);
  int64_t total = 0;
  for (const Product& p : gen_catalog(cfg, 11)) {
    for (int a : p.attributes) {
      counts[static_cast<size_t>(a - Vocab::kNumSpecial)]++;
      ++total;
    }
  }
  const double mean = static_cast<double>(total) / cfg.n_attributes;
  for (int c : counts) {
    CHECK(c >= mean * 0.7);
    CHECK(c <= mean * 1.3);
  }
}

TEST_CASE("infeasible configs are rejected") {
  auto cfg = small_config();
  cfg.attrs_min = 1;  // a 1-attribute title cannot both reveal and hide
  CHECK_THROWS_AS(gen_catalog(cfg, 1), Error);

  cfg = small_config();
  cfg.desc_min = 10;  // outside the [24, 64] invariant
  CHECK_THROWS_AS(gen_catalog(cfg, 1), Error);
}

TEST_CASE("judge implements the rating table") {
  Product p;
  p.attributes = {10, 11, 12};
  Query q;

  q.targets = {10, 11};
  CHECK(judge(q, p) == 4);  // perfect match
  CHECK(rating_to_label(judge(q, p)) == 1.0);

  q.targets = {10, 99};
  CHECK(judge(q, p) == 3);  // one attribute mismatched
  CHECK(rating_to_label(judge(q, p)) == 0.5);

  q.targets = {10, 98, 99};
  CHECK(judge(q, p) == 2);  // at least one matched, two missing

  q.targets = {99};
  CHECK(judge(q, p) == 1);  // irrelevant
  CHECK(rating_to_label(judge(q, p)) == 0.0);

  q.targets = {};
  CHECK_THROWS_AS(judge(q, p), Error);
}

TEST_CASE("rating_to_label covers the table and rejects out-of-range input") {
  CHECK(rating_to_label(4) == 1.0);
  CHECK(rating_to_label(3) == 0.5);
  CHECK(rating_to_label(2) == 0.0);
  CHECK(rating_to_label(1) == 0.0);
  CHECK(rating_to_label(0) == 0.0);
  CHECK_THROWS_AS(rating_to_label(5), Error);
  CHECK_THROWS_AS(rating_to_label(-1), Error);
}

TEST_CASE("the simulator never emits rating zero and pools hold a perfect match") {
  Corpus c = gen_corpus(small_config(), 17);
  std::map<int, bool> has_perfect;
  for (const JudgedPair& p : c.eval_pairs) {
    CHECK(p.rating >= 1);
    CHECK(p.rating <= 4);
    if (p.rating == 4) has_perfect[p.query_id] = true;
  }
  for (const Query& q : c.eval_queries) CHECK(has_perfect[q.id]);
}

TEST_CASE("golden split takes the bottom traffic tertile") {
  SECTION("six queries, distinct weights") {
    std::vector<Query> qs;
    for (int i = 0; i < 6; ++i) qs.push_back(Query{i, {}, {}, static_cast<double>(6 - i)});
    GoldenSplit s = split_golden(qs);
    REQUIRE(s.tail.size() == 2);
    CHECK(s.tail[0] == 4);  // weight 2
    CHECK(s.tail[1] == 5);  // weight 1
  }
  SECTION("equal weights tie-break by id") {
    std::vector<Query> qs;
    for (int i = 0; i < 6; ++i) qs.push_back(Query{i, {}, {}, 1.0});
    GoldenSplit s = split_golden(qs);
    REQUIRE(s.tail.size() == 2);
    CHECK(s.tail[0] == 4);
    CHECK(s.tail[1] == 5);
  }
  SECTION("500 queries gives a 166/167 tail") {
    std::vector<Query> qs;
    for (int i = 0; i < 500; ++i) qs.push_back(Query{i, {}, {}, std::pow(i + 1.0, -1.1)});
    GoldenSplit s = split_golden(qs);
    CHECK((s.tail.size() == 166 || s.tail.size() == 167));
  }
  SECTION("tail weights never exceed non-tail weights") {
    Corpus c = gen_corpus(small_config(), 23);
    GoldenSplit s = split_golden(c.eval_queries);
    std::set<int> tail(s.tail.begin(), s.tail.end());
    double min_head = 1e300, max_tail = -1;
    for (const Query& q : c.eval_queries) {
      if (tail.count(q.id))
        max_tail = std::max(max_tail, q.weight);
      else
        min_head = std::min(min_head, q.weight);
    }
    CHECK(max_tail <= min_head);
  }
  SECTION("too few queries is an error") {
    std::vector<Query> qs{{0, {}, {}, 1.0}, {1, {}, {}, 0.5}};
    CHECK_THROWS_AS(split_golden(qs), Error);
  }
}

TEST_CASE("corpus serialization round-trips across seeds") {
  auto cfg = small_config();
  cfg.n_products = 30;
  cfg.n_train_queries = 6;
  cfg.n_eval_queries = 5;
  TempDir dir("relsum_corpus_rt");
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    Corpus c = gen_corpus(cfg, seed);
    save_corpus(dir.path, c, seed, 0xabc);
    Corpus back = load_corpus(dir.path);
    REQUIRE(back == c);
  }
}

TEST_CASE("malformed and truncated files report the offending line") {
  TempDir dir("relsum_corpus_bad");
  Corpus c = gen_corpus(small_config(), 9);
  save_corpus(dir.path, c, 9, 0);

  // corrupt line 3 of products.jsonl
  auto path = dir.path / "products.jsonl";
  std::ifstream in(path);
  std::string all, line;
  int n = 0;
  while (std::getline(in, line)) {
    if (++n == 3) line = "{not json";
    all += line + "\n";
  }
  in.close();
  std::ofstream(path) << all;

  try {
    load_corpus(dir.path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("an empty catalog writes a header-only products file") {
  TempDir dir("relsum_corpus_empty");
  Corpus c;
  c.config = small_config();
  save_corpus(dir.path, c, 1, 2);
  std::ifstream is(dir.path / "products.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 1);
  Corpus back = load_corpus(dir.path);
  CHECK(back.products.empty());
}
