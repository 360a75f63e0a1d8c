#include <doctest.h>

#include <claimcast/rng.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace claimcast;

TEST_CASE("derived seeds differ by tag and index") {
    const auto a = derive_seed(1, "simulate", 0);
    const auto b = derive_seed(1, "simulate", 1);
    const auto c = derive_seed(1, "split", 0);
    const auto d = derive_seed(2, "simulate", 0);
    CHECK(a != b);
    CHECK(a != c);
    CHECK(a != d);
    CHECK(derive_seed(1, "simulate", 0) == a);
}

TEST_CASE("streams replay identically") {
    RngStream a(99), b(99);
    for (int i = 0; i < 1000; ++i) CHECK(a.uniform01() == b.uniform01());
}

TEST_CASE("uniform stays in range") {
    RngStream rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const auto k = rng.uniform_int(7);
        CHECK(k < 7);
    }
}

TEST_CASE("normal moments") {
    RngStream rng(5);
    const int n = 200000;
    double sum = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        ss += x * x;
    }
    const double mean = sum / n;
    const double var = ss / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("poisson mean matches for small and large rates") {
    RngStream rng(7);
    for (double lambda : {0.5, 4.0, 120.0, 750.0}) {
        const int n = lambda > 100 ? 2000 : 20000;
        double sum = 0;
        for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.poisson(lambda));
        const double mean = sum / n;
        CHECK(std::abs(mean - lambda) < 4.0 * std::sqrt(lambda / n) + 0.02);
    }
    CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("gamma mean matches shape") {
    RngStream rng(11);
    for (double shape : {0.5, 1.0, 3.5}) {
        const int n = 50000;
        double sum = 0;
        for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
        CHECK(std::abs(sum / n - shape) < 0.05);
    }
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> w = v;
    RngStream a(13), b(13);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}
