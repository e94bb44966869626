#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "ugclab/rng.hpp"

using ugclab::Rng;

namespace {

// Reference xoshiro256** and SplitMix64, written from the published algorithms.
struct RefXoshiro {
  std::array<std::uint64_t, 4> s;
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t r = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return r;
  }
};

std::uint64_t splitmix_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t finalizer(std::uint64_t z) {
  std::uint64_t s = z - 0x9E3779B97F4A7C15ULL;
  return splitmix_next(s);
}

RefXoshiro reference(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t key = finalizer(finalizer(seed) ^ (stream * 0x9E3779B97F4A7C15ULL)) ^
                      finalizer(index + 0xD1B54A32D192ED03ULL);
  RefXoshiro x{};
  for (auto& w : x.s) w = splitmix_next(key);
  return x;
}

}  // namespace

TEST_SUITE("rng") {

TEST_CASE("reference generators reproduce published vectors") {
  std::uint64_t sm = 0;
  CHECK(splitmix_next(sm) == 0xE220A8397B1DCDAFULL);
  RefXoshiro x{{1, 2, 3, 4}};
  CHECK(x.next() == 11520ULL);
  CHECK(x.next() == 0ULL);
  CHECK(x.next() == 1509978240ULL);
  CHECK(x.next() == 1215971899390074240ULL);
  CHECK(Rng::mix(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("Rng matches the reference for several keys") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xFFFFFFFFFFFFFFFFULL}) {
    for (std::uint64_t stream : {0ULL, 3ULL}) {
      for (std::uint64_t index : {0ULL, 7ULL, 99999ULL}) {
        Rng rng(seed, stream, index);
        auto ref = reference(seed, stream, index);
        for (int i = 0; i < 16; ++i) CHECK(rng.next() == ref.next());
      }
    }
  }
}

TEST_CASE("same key gives the same sequence and different keys differ") {
  Rng a(7), b(7), c(7, 1), d(7, 0, 1), e(8);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  for (Rng* r : {&a, &c, &d, &e}) firsts.insert(r->next());
  CHECK(firsts.size() == 4);
}

TEST_CASE("uniform is in range and passes a chi-square test") {
  Rng rng(2024);
  std::array<int, 10> bins{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto v = rng.uniform(10);
    REQUIRE(v < 10);
    ++bins[v];
  }
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - draws / 10.0) * (b - draws / 10.0) / (draws / 10.0);
  CHECK(chi2 < 27.88);  // 99.9th percentile, 9 degrees of freedom

  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  CHECK(rng.uniform(1) == 0);
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(3);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
  CHECK(*s.begin() == 0);
  CHECK(*s.rbegin() == 49);
}

}
