#include "vaentropy/data/rng.hpp"

#include <cmath>
#include <numbers>

namespace vaentropy::data {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

// Seed and stream are folded into the 64-bit key and the upper counter half.
std::array<std::uint32_t, 2> key_of(std::uint64_t seed) noexcept
{
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

double to_open_unit(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t join(std::uint32_t hi, std::uint32_t lo) noexcept
{
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept
{
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::array<std::uint32_t, 4> RngStream::next_block() noexcept
{
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    ++counter_;
    return philox4x32(ctr, key_of(seed_));
}

double RngStream::uniform() noexcept
{
    const auto b = next_block();
    return to_open_unit(join(b[1], b[0]));
}

std::uint64_t RngStream::uniform_index(std::uint64_t bound) noexcept
{
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
        const auto b = next_block();
        const std::uint64_t r = join(b[1], b[0]);
        if (r < limit) return r % bound;
    }
}

double RngStream::normal() noexcept
{
    const auto b = next_block();
    const double u1 = to_open_unit(join(b[1], b[0]));
    const double u2 = to_open_unit(join(b[3], b[2]));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void RngStream::fill_normal(std::span<double> out) noexcept
{
    std::size_t i = 0;
    while (i < out.size()) {
        const auto b = next_block();
        const double u1 = to_open_unit(join(b[1], b[0]));
        const double u2 = to_open_unit(join(b[3], b[2]));
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        out[i++] = r * std::cos(angle);
        if (i < out.size()) out[i++] = r * std::sin(angle);
    }
}

}  // namespace vaentropy::data
