#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace claimcast {

// SplitMix64 finalizer. Used to derive independent seeds from a root seed so
// that every consumer (dataset, claim, epoch, ...) gets its own stream and
// parallel generation matches sequential generation bit for bit.
std::uint64_t mix64(std::uint64_t x);

// Hash a (root, tag, index) triple into a child seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

// Deterministic random stream with hand-rolled samplers. std::mt19937_64 is
// fully specified by the standard; the std:: distributions are not, so the
// samplers below are implemented here to keep byte-identical replays across
// standard libraries.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1).
    double uniform01();
    // Uniform on (0, 1]; safe under log().
    double uniform01_open();
    double uniform(double lo, double hi);
    // Uniform integer on [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller (one value cached).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double lognormal(double meanlog, double sdlog);

    // Exact Poisson sampler; large means are split recursively to avoid
    // exp(-lambda) underflow in the Knuth product method.
    long poisson(double lambda);

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
    double gamma(double shape);

    // Fisher-Yates with uniform_int draws.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace claimcast
