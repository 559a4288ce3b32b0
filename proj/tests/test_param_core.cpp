#include <cmath>
#include <set>

#include <doctest.h>

#include "epi/param_store.hpp"
#include "epi/rng.hpp"

using namespace epi;

TEST_CASE("partition offsets are cumulative sums") {
  auto store = ParamStore::build({{"w1", 6}, {"b1", 2}});
  CHECK(store.dim() == 8);
  CHECK(store.group_view("w1").offset == 0);
  CHECK(store.group_view("b1").offset == 6);

  auto single = ParamStore::build({{"only", 5}});
  CHECK(single.dim() == 5);
  CHECK(single.group_view("only").length == 5);

  auto three = ParamStore::build({{"a", 3}, {"b", 3}, {"c", 3}});
  CHECK(three.dim() == 9);
  CHECK(three.group_view("c").offset == 6);
}

TEST_CASE("partition rejects bad input") {
  CHECK_THROWS(ParamStore::build({}));
  CHECK_THROWS(ParamStore::build({{"a", 3}, {"empty", 0}}));
  auto store = ParamStore::build({{"w1", 6}, {"b1", 2}});
  CHECK_THROWS(store.group_view("nope"));
}

TEST_CASE("every index belongs to exactly one group") {
  auto store = ParamStore::build({{"a", 7}, {"b", 13}, {"c", 1}, {"d", 64}});
  std::set<std::size_t> seen;
  for (const auto& g : store.partition()) {
    for (std::size_t j = g.offset; j < g.offset + g.length; ++j) {
      CHECK(seen.insert(j).second);
    }
  }
  CHECK(seen.size() == store.dim());
}

TEST_CASE("gaussian init is seed-reproducible") {
  auto a = ParamStore::build({{"w", 100}});
  auto b = ParamStore::build({{"w", 100}});
  Rng ra(7), rb(7);
  a.gaussian_init(ra, 0.5);
  b.gaussian_init(rb, 0.5);
  CHECK(a.values() == b.values());
}

TEST_CASE("gaussian init sample std matches scale") {
  auto store = ParamStore::build({{"w", 10000}});
  Rng rng(42);
  store.gaussian_init(rng, 0.1);
  double ss = 0.0;
  for (double v : store.values()) ss += v * v;
  const double std = std::sqrt(ss / 10000.0);
  CHECK(std > 0.09);
  CHECK(std < 0.11);
}

TEST_CASE("gaussian init basics") {
  auto store = ParamStore::build({{"w", 2}});
  Rng rng(1);
  store.gaussian_init(rng, 1.0);
  CHECK(std::isfinite(store.values()[0]));
  CHECK(store.values()[0] != store.values()[1]);
  CHECK_THROWS(store.gaussian_init(rng, 0.0));
  CHECK_THROWS(store.gaussian_init(rng, -1.0));
}

TEST_CASE("rng substreams are independent and reproducible") {
  Rng root(99);
  Rng a1 = root.substream("data");
  Rng a2 = root.substream("data");
  Rng b = root.substream("eval");
  CHECK(a1.next_u64() == a2.next_u64());
  // Drawing from one stream leaves the other's future untouched.
  Rng b2 = root.substream("eval");
  for (int i = 0; i < 100; ++i) a1.next_u64();
  CHECK(b.next_u64() == b2.next_u64());
}

TEST_CASE("uniform_index stays in range") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(rng.uniform_index(7) < 7);
  }
}
