#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hardmine {

/// Seeded pseudo-random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than taken from
/// <random> because the standard leaves their algorithms to the vendor,
/// and reports must be byte-identical across toolchains.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    /// Independent substream keyed by a fixed tag and an optional index.
    /// Depends only on (seed, tag, index), never on how far this stream
    /// has advanced.
    [[nodiscard]] RngStream derive(std::string_view tag, std::uint64_t index = 0) const;

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    /// Bernoulli draw. p <= 0 and p >= 1 consume no randomness.
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    /// Serialized engine position, restorable with restore().
    [[nodiscard]] std::string save_state() const;
    void restore(std::uint64_t seed, const std::string& state);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used for substream tags and config hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

} // namespace hardmine
