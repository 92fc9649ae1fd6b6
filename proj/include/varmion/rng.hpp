#pragma once

#include <cmath>
#include <cstdint>

namespace varmion {

// Counter-based generator "splitmix64-boxmuller-v1".
// Output word i of stream (seed) is a pure function of (seed, i): the
// splitmix64 finalizer applied to seed + (i+1)*GOLDEN. Normals come from
// Box-Muller over two consecutive words, so any sample index can be replayed
// exactly on any platform. The name is recorded in dataset headers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    // Independent substream; used for per-sample / per-epoch derivations.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(mix(seed ^ mix(stream_id + 0x9e3779b97f4a7c15ull)));
    }

    std::uint64_t next_u64() {
        counter_ += 0x9e3779b97f4a7c15ull;
        return mix(seed_ + counter_);
    }

    // [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // i.i.d. standard normal; consumes exactly two words per call.
    double normal() {
        double u1 = 1.0 - uniform();  // (0,1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
    // n is tiny relative to 2^64 so the bias is < 2^-50.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    static constexpr const char* kName = "splitmix64-boxmuller-v1";

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// Deterministic in-place Fisher-Yates shuffle.
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        auto tmp = v[i - 1];
        v[i - 1] = v[j];
        v[j] = tmp;
    }
}

}  // namespace varmion
