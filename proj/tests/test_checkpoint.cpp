#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "relsum/checkpoint.hpp"
#include "relsum/rng.hpp"

using namespace relsum;

namespace {
struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const char* name) : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};
}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
  Rng rng(99);
  ParameterStore params;
  params.add("emb.tok", Tensor::randn({7, 5}, rng));
  params.add("blk0.w", Tensor::randn({5, 5}, rng, 0.02));
  params.add("scalar", Tensor::scalar(0.1 + 0.2));  // non-representable decimal on purpose

  TempFile f("relsum_ckpt_test.bin");
  CheckpointMeta meta;
  meta.frozen = true;
  meta.root_seed = 1234567;
  meta.config_hash = 0xdeadbeef12345678ull;
  save_checkpoint(f.path, params, meta);

  CheckpointMeta back;
  ParameterStore loaded = load_checkpoint(f.path, &back);
  CHECK(back.frozen);
  CHECK(back.root_seed == 1234567);
  CHECK(back.config_hash == 0xdeadbeef12345678ull);
  REQUIRE(loaded.size() == params.size());
  CHECK(loaded.fingerprint() == params.fingerprint());

  // ordering preserved
  auto it = loaded.begin();
  CHECK(it->first == "emb.tok");
}

TEST_CASE("checkpoint save/load/save produces identical bytes") {
  Rng rng(5);
  ParameterStore params;
  params.add("w", Tensor::randn({16, 16}, rng));
  TempFile a("relsum_ckpt_a.bin"), b("relsum_ckpt_b.bin");
  CheckpointMeta meta;
  save_checkpoint(a.path, params, meta);
  ParameterStore loaded = load_checkpoint(a.path);
  save_checkpoint(b.path, loaded, meta);

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("bad magic and truncation are reported as parse errors") {
  TempFile f("relsum_ckpt_bad.bin");
  {
    std::ofstream os(f.path, std::ios::binary);
    os << "NOTACKPT more bytes here";
  }
  CHECK_THROWS_AS(load_checkpoint(f.path), Error);

  ParameterStore params;
  params.add("w", Tensor::full({8}, 1.0));
  save_checkpoint(f.path, params, CheckpointMeta{});
  auto size = std::filesystem::file_size(f.path);
  std::filesystem::resize_file(f.path, size - 9);
  CHECK_THROWS_AS(load_checkpoint(f.path), Error);
}

TEST_CASE("missing checkpoint file raises missing_artifact") {
  try {
    load_checkpoint("/nonexistent/path/model.ckpt");
    FAIL("expected missing_artifact");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_artifact);
  }
}
