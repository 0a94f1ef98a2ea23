#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace vaentropy::data {

/// Philox4x32-10 keyed by (seed, stream). Each counter value yields one
/// 128-bit block, so (seed, stream, counter) pins down every draw and distinct
/// stream ids give independent sequences without shared state.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) noexcept
        : seed_(seed), stream_(stream), counter_(counter)
    {
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Raw block at the current counter; advances the counter by one.
    std::array<std::uint32_t, 4> next_block() noexcept;

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    double uniform() noexcept;
    /// Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t uniform_index(std::uint64_t bound) noexcept;
    /// One standard normal via Box-Muller (cosine branch) from a single block.
    double normal() noexcept;
    /// Fills `out` with standard normals, two per block (cosine and sine branches).
    void fill_normal(std::span<double> out) noexcept;

    /// A new stream sharing this seed. Used to hand out disjoint substreams.
    RngStream substream(std::uint64_t stream) const noexcept { return {seed_, stream, 0}; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
};

/// Stateless Philox4x32-10 round function; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

}  // namespace vaentropy::data
