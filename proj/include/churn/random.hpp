#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace churn {

// Independent generator for (master seed, stream id); same inputs, same stream.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

struct Split {
    std::vector<std::size_t> train;  // ascending row indices
    std::vector<std::size_t> test;
};

// Per-class shuffle; round(test_fraction * n_c) rows of each class go to test.
Split stratified_split(std::span<const int> labels, double test_fraction, std::mt19937_64& rng);

}  // namespace churn
