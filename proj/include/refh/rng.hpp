#pragma once

#include <cstdint>
#include <random>

namespace refh {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of stream `stream` under `seed`. Streams are counter-derived, so
/// work split across trajectories or minibatches does not depend on the
/// order in which it is executed.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Seeded generator used everywhere randomness is consumed.
class Rng {
public:
    using engine_type = std::mt19937_64;

    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        return Rng(stream_seed(seed, stream));
    }

    /// Uniform on [0, 1).
    double uniform() { return unif_(engine_); }

    double normal() { return normal_(engine_); }

    std::uint64_t next_u64() { return engine_(); }

    engine_type& engine() noexcept { return engine_; }

private:
    engine_type engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace refh
