#pragma once

#include <limits>
#include <span>
#include <vector>

#include "vaentropy/data/rng.hpp"

namespace vaentropy::data {

/// Mini-batch index slices over [0, N). Each epoch draws a fresh Fisher-Yates
/// permutation from the stream; the last batch of an epoch may be short.
class BatchIterator {
public:
    static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

    BatchIterator(std::size_t n, std::size_t batch_size, RngStream rng,
                  std::size_t epochs = kUnbounded);

    /// Next slice, or an empty span once all epochs are exhausted. The span
    /// stays valid until the following call.
    std::span<const std::size_t> next();

    std::size_t epoch() const noexcept { return epoch_; }

private:
    void reshuffle();

    std::size_t n_;
    std::size_t batch_size_;
    RngStream rng_;
    std::size_t epochs_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

}  // namespace vaentropy::data
