#include "doctest.h"
#include "falldet/common.hpp"

using namespace falldet;

TEST_SUITE("common") {

TEST_CASE("rng: same seed gives the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 64; ++i) CHECK(a.u64() == b.u64());
}

TEST_CASE("rng: child streams are decorrelated from the parent") {
    Rng root(7);
    Rng c1 = root.child(1), c2 = root.child(2);
    int equal = 0;
    for (int i = 0; i < 64; ++i)
        if (c1.u64() == c2.u64()) ++equal;
    CHECK(equal == 0);
    // Same salt reproduces the same substream.
    Rng c1b = root.child(1);
    Rng c1c = root.child(1);
    for (int i = 0; i < 16; ++i) CHECK(c1b.u64() == c1c.u64());
}

TEST_CASE("rng: uniform stays in [0,1) and normal has sane moments") {
    Rng rng(3);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("quantile: type-7 interpolation on known points") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(quantile(v, 0.0) == doctest::Approx(1.0));
    CHECK(quantile(v, 1.0) == doctest::Approx(4.0));
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
    // h = (n-1)q = 0.75 -> between the 1st and 2nd order statistic.
    CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
    CHECK(median(std::vector<double>{5.0, 1.0, 9.0}) == doctest::Approx(5.0));
}

TEST_CASE("errors: every failure class is catchable as the base Error") {
    CHECK_THROWS_AS(throw ShapeMismatch("x"), Error);
    CHECK_THROWS_AS(throw NoSignal("x"), Error);
    CHECK_THROWS_AS(throw ProtocolError("x"), Error);
    CHECK_THROWS_AS(throw CorruptFrame("x"), Error);
    CHECK_THROWS_AS(throw InsufficientData("x"), std::runtime_error);
}

TEST_CASE("threads: clamp and reset") {
    int dflt = threads::max_threads();
    CHECK(dflt >= 1);
    threads::set_threads(1);
    CHECK(threads::max_threads() == 1);
    threads::set_threads(0);  // reset to hardware default
    CHECK(threads::max_threads() == dflt);
}

}  // TEST_SUITE
