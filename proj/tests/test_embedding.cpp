#include <cmath>

#include "doctest.h"
#include "oki/embedding.hpp"
#include "support/test_support.hpp"

using namespace oki;

TEST_CASE("cosine similarity basics") {
  Vec v{1.0, 2.0, 3.0};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
  CHECK(cosine_similarity({1, 0}, {1, 1}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), DomainError);
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), ShapeError);
}

TEST_CASE("cosine similarity is exactly symmetric and scale invariant") {
  SplitMix64 rng(5);
  for (int i = 0; i < 50; ++i) {
    Vec p = test::random_vector(rng, 16);
    Vec q = test::random_vector(rng, 16);
    CHECK(cosine_similarity(p, q) == cosine_similarity(q, p));
    double alpha = 0.25 + 3.0 * rng.unit();
    Vec scaled = p;
    for (double& x : scaled) x *= alpha;
    CHECK(cosine_similarity(scaled, q) ==
          doctest::Approx(cosine_similarity(p, q)).epsilon(1e-12));
  }
}

TEST_CASE("hash encoder determinism and normalization") {
  HashEncoder enc(256);
  Vec a = enc.encode("iron-deficiency anemia is a disorder");
  Vec b = enc.encode("iron-deficiency anemia is a disorder");
  CHECK(a == b);
  CHECK(std::abs(l2_norm(a) - 1.0) < 1e-12);

  Vec c = enc.encode("iron-deficiency anemia is a condition");
  CHECK(cosine_similarity(a, c) < 1.0);
  CHECK(cosine_similarity(a, c) > 0.0);  // shares most features

  CHECK_THROWS_AS(enc.encode(""), DomainError);
  CHECK_THROWS_AS(HashEncoder(4), DomainError);
  CHECK(HashEncoder(64, 1).encode("abc") != HashEncoder(64, 2).encode("abc"));
}

TEST_CASE("adapter identity reproduces the base encoder exactly") {
  auto base = std::make_shared<HashEncoder>(64);
  AdapterEncoder adapter = AdapterEncoder::identity(base, /*normalize_output=*/false);
  std::string text = "alpha beta gamma";
  CHECK(adapter.encode(text) == base->encode(text));
  CHECK(adapter.parameter_count() == 64 * 64 + 64);
}

TEST_CASE("adapter checkpoint round trip") {
  test::TempDir dir("adapter");
  auto base = std::make_shared<HashEncoder>(32);
  AdapterEncoder adapter = AdapterEncoder::identity(base, true);
  SplitMix64 rng(3);
  for (double& w : adapter.weights()) w += 0.01 * (rng.unit() - 0.5);
  for (double& b : adapter.bias()) b = 0.1 * (rng.unit() - 0.5);
  adapter.save(dir.file("w.oiad"));

  AdapterEncoder back = AdapterEncoder::load(dir.file("w.oiad"), base);
  CHECK(back.weights() == adapter.weights());
  CHECK(back.bias() == adapter.bias());
  CHECK(back.normalize_output() == adapter.normalize_output());
  CHECK(back.encode("some text") == adapter.encode("some text"));

  auto wrong_base = std::make_shared<HashEncoder>(16);
  CHECK_THROWS_AS(AdapterEncoder::load(dir.file("w.oiad"), wrong_base), ShapeError);

  SUBCASE("corrupt checkpoints are rejected") {
    std::string bytes = read_text_file(dir.file("w.oiad"));
    atomic_write_file(dir.file("truncated.oiad"), bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(AdapterEncoder::load(dir.file("truncated.oiad"), base), ParseError);
    atomic_write_file(dir.file("trailing.oiad"), bytes + "xx");
    CHECK_THROWS_AS(AdapterEncoder::load(dir.file("trailing.oiad"), base), ParseError);
    atomic_write_file(dir.file("notmagic.oiad"), "AAAA" + bytes.substr(4));
    CHECK_THROWS_AS(AdapterEncoder::load(dir.file("notmagic.oiad"), base), ParseError);
  }
}

TEST_CASE("vector cache memoizes and round trips through disk") {
  test::TempDir dir("cache");
  HashEncoder enc(64);
  VectorCache cache;
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("sentence number " + std::to_string(i));

  cache.encode_all(texts, enc);
  CHECK(cache.encode_count() == 10);
  cache.encode_all(texts, enc);
  CHECK(cache.encode_count() == 10);  // no re-encodes
  CHECK(cache.size() == 10);

  cache.save(dir.file("v.oivc"));
  VectorCache loaded = VectorCache::load(dir.file("v.oivc"));
  CHECK(loaded.size() == 10);
  CHECK(loaded.dimension() == 64);
  for (const std::string& t : texts) {
    Vec stored = loaded.get(t);
    Vec recomputed = enc.encode(t);
    CHECK(cosine_similarity(stored, recomputed) >= 1.0 - 1e-6);
    CHECK(stored == cache.get(t));  // f32 quantization applied consistently
  }

  HashEncoder other_dim(32);
  CHECK_THROWS_AS(loaded.get_or_encode("x", other_dim), CacheError);
  CHECK_THROWS_AS(loaded.get("never seen"), LookupError);
}

TEST_CASE("empty cache behaves") {
  VectorCache cache;
  CHECK(cache.size() == 0);
  HashEncoder enc(64);
  cache.encode_all({}, enc);
  CHECK(cache.encode_count() == 0);
}

TEST_CASE("precomputed encoder serves externally supplied vectors") {
  test::TempDir dir("pre");
  HashEncoder enc(64);
  VectorCache cache;
  cache.get_or_encode("known sentence", enc);
  cache.save(dir.file("v.oivc"));

  PrecomputedEncoder pre(VectorCache::load(dir.file("v.oivc")));
  CHECK(pre.dimension() == 64);
  CHECK(pre.encode("known sentence") == cache.get("known sentence"));
  CHECK_THROWS_AS(pre.encode("unknown sentence"), LookupError);
}
