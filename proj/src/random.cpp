#include "churn/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace churn {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

Split stratified_split(std::span<const int> labels, double test_fraction, std::mt19937_64& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    Split split;
    for (auto& [cls, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        auto test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
        split.test.insert(split.test.end(), rows.begin(), rows.begin() + static_cast<long>(test));
        split.train.insert(split.train.end(), rows.begin() + static_cast<long>(test), rows.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

}  // namespace churn
