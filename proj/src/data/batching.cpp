#include "vaentropy/data/batching.hpp"

#include <numeric>
#include <utility>

#include "vaentropy/errors.hpp"

namespace vaentropy::data {

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, RngStream rng,
                             std::size_t epochs)
    : n_(n), batch_size_(batch_size), rng_(rng), epochs_(epochs), order_(n)
{
    if (batch_size < 1 || batch_size > n) throw ConfigError("batch size must lie in [1, N]");
    if (epochs_ > 0) reshuffle();
}

void BatchIterator::reshuffle()
{
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = n_; i-- > 1;) std::swap(order_[i], order_[rng_.uniform_index(i + 1)]);
    cursor_ = 0;
}

std::span<const std::size_t> BatchIterator::next()
{
    if (epoch_ >= epochs_) return {};
    if (cursor_ == n_) {
        if (++epoch_ >= epochs_) return {};
        reshuffle();
    }
    const std::size_t len = std::min(batch_size_, n_ - cursor_);
    std::span<const std::size_t> slice(order_.data() + cursor_, len);
    cursor_ += len;
    return slice;
}

}  // namespace vaentropy::data
