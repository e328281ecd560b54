#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace msense {

/// Philox4x32-10 block function. Stateless: the same (counter, key) always yields the
/// same four words, which is what lets any draw be regenerated independently.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
               static_cast<std::uint32_t>(p0)};
    }
    return ctr;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Purpose tags for stream splitting. Every random quantity in the library draws from
/// stream (tag << 40) ^ index under the caller's seed.
enum class Stream : std::uint64_t {
    basis = 1,
    sensing = 2,
    noise = 3,
    init = 4,
    perturbation = 5,
    region = 6,
    trial = 7,
    operand = 8,
};

inline constexpr std::uint64_t stream_id(Stream tag, std::uint64_t index = 0) noexcept {
    return (static_cast<std::uint64_t>(tag) << 40) ^ index;
}

/// Child seed for sub-experiments (trials, sweep cells) so each owns an independent key.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream tag,
                                           std::uint64_t index) noexcept {
    return splitmix64(seed ^ splitmix64(stream_id(tag, index)));
}

/// Sequential view over one Philox stream. Cheap to construct; copying forks the position.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    CounterRng(std::uint64_t seed, Stream tag, std::uint64_t index = 0) noexcept
        : CounterRng(seed, stream_id(tag, index)) {}

    std::uint64_t next_u64() noexcept {
        if (buffered_ == 0) refill();
        const std::size_t i = 2 - buffered_--;
        return (std::uint64_t{block_[2 * i]} << 32) | block_[2 * i + 1];
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open_low() noexcept { return 1.0 - uniform(); }

    /// Box-Muller; the second variate is cached for the next call.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open_low()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    double rademacher() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

private:
    void refill() noexcept {
        block_ = philox4x32({static_cast<std::uint32_t>(block_index_),
                             static_cast<std::uint32_t>(block_index_ >> 32),
                             static_cast<std::uint32_t>(stream_),
                             static_cast<std::uint32_t>(stream_ >> 32)},
                            key_);
        ++block_index_;
        buffered_ = 2;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_index_ = 0;
    std::array<std::uint32_t, 4> block_{};
    std::size_t buffered_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace msense
