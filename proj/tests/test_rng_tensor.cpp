#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "varmion/common.hpp"
#include "varmion/rng.hpp"
#include "varmion/tensor.hpp"

using namespace varmion;

TEST_CASE("rng produces the frozen splitmix64 sequence") {
    Rng r(42);
    CHECK(r.next_u64() == 0xbdd732262feb6e95ull);
    CHECK(r.next_u64() == 0x28efe333b266f103ull);
    CHECK(r.next_u64() == 0x47526757130f9f52ull);
}

TEST_CASE("rng uniform and normal match frozen values") {
    Rng r(42);
    CHECK(r.uniform() == doctest::Approx(0.7415648787718233).epsilon(1e-15));
    CHECK(r.uniform() == doctest::Approx(0.1599103928769201).epsilon(1e-15));
    Rng r7(7);
    CHECK(r7.normal() == doctest::Approx(0.9884743323187353).epsilon(1e-12));
}

TEST_CASE("rng stream derivation is stable and distinct") {
    Rng s = Rng::stream(42, 5);
    CHECK(s.next_u64() == 0xda1c8af09cdf5c09ull);
    Rng a = Rng::stream(42, 1);
    Rng b = Rng::stream(42, 2);
    CHECK(a.next_u64() != b.next_u64());
    Rng a2 = Rng::stream(42, 1);
    Rng a3 = Rng::stream(42, 1);
    for (int i = 0; i < 16; ++i) CHECK(a2.next_u64() == a3.next_u64());
}

TEST_CASE("rng uniform stays in [0,1) and normal moments are sane") {
    Rng r(123);
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
    const double var = sumsq / n - mean * mean;
    CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.05));

    Rng g(321);
    double gs = 0.0, gs2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = g.normal();
        gs += z;
        gs2 += z * z;
    }
    CHECK(gs / n == doctest::Approx(0.0).scale(1.0).epsilon(0.03));
    CHECK(gs2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng below and shuffle are deterministic permutations") {
    Rng r(9);
    for (int i = 0; i < 100; ++i) {
        uint64_t v = r.below(7);
        CHECK(v < 7);
    }
    std::vector<int> xs{0, 1, 2, 3, 4, 5, 6, 7};
    Rng s1(55), s2(55);
    auto a = xs, b = xs;
    shuffle(a, s1);
    shuffle(b, s2);
    CHECK(a == b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == xs);
}

TEST_CASE("tensor shape bookkeeping and views") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    for (double v : t.data) CHECK(v == 0.0);

    auto m = mat_view(t, 2, 3);
    m(1, 2) = 5.0;
    CHECK(t.data[5] == 5.0);

    t.set_shape({3, 2});
    CHECK(t.dim(0) == 3);
    CHECK_THROWS_AS(t.set_shape({4, 2}), MismatchError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), MismatchError);
    CHECK_THROWS_AS(mat_view(t, 5, 9), MismatchError);
}

TEST_CASE("tensor finite flags nan and inf") {
    Tensor t({2});
    CHECK(t.finite());
    t.data[1] = std::nan("");
    CHECK_FALSE(t.finite());
    t.data[1] = INFINITY;
    CHECK_FALSE(t.finite());
}

TEST_CASE("fnv1a64 matches the reference constants") {
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ull);
    const char* a = "a";
    CHECK(fnv1a64(a, 1) == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
}
