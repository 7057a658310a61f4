#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace churn {

struct FeatureColumn;

enum class PartitionKind { intervals, groups };

using ClassCounts = std::vector<std::size_t>;  // one count per class

/// Supervised recoding of one feature into parts with per-part class counts.
///
/// Intervals: value parts are [b_{i-1}, b_i) with b_{-1} = -inf and the last
/// bound +inf. Groups: every training value belongs to one group; unseen
/// values go to the garbage group. Missing, when present in training, is the
/// last part and is never merged.
struct UnivariatePartition {
    std::string feature;
    PartitionKind kind = PartitionKind::intervals;
    std::vector<double> bounds;                      // intervals: one upper bound per value part
    std::vector<std::vector<std::string>> groups;    // groups: sorted values per value part
    std::size_t garbage_group = 0;
    std::optional<std::size_t> missing_part;
    std::vector<ClassCounts> counts;                 // parts x classes
    double cost = 0;
    double null_cost = 0;
    double level = 0;

    std::size_t part_count() const { return counts.size(); }
    std::size_t value_parts() const { return missing_part ? counts.size() - 1 : counts.size(); }
    std::size_t class_count() const { return counts.empty() ? 0 : counts.front().size(); }
    std::size_t total() const;
    std::size_t most_frequent_part() const;

    std::size_t apply(std::optional<double> value) const;
    std::size_t apply(std::optional<std::string_view> value) const;
    std::string part_label(std::size_t part) const;

    // Rebuilds the value -> group lookup; call after editing `groups`.
    void index_groups();

private:
    std::map<std::string, std::size_t, std::less<>> group_of_;
};

/// cost = ln n + ln C(n+I-1, I-1) + sum_i ln C(n_i+J-1, J-1)
///        + sum_i ln(n_i! / prod_j n_ij!)
double partition_cost(std::span<const ClassCounts> parts);
// Cost of the single-part partition.
double null_partition_cost(const ClassCounts& class_totals);
double level_of(double cost, double null_cost);

/// Optimal interval partition under partition_cost. Exact dynamic programming
/// over class-pure value blocks; greedy bottom-up merging above
/// kExactDiscretizationLimit blocks. Labels are class indices < classes.
UnivariatePartition discretize(std::string feature, std::span<const std::optional<double>> values,
                               std::span<const int> labels, std::size_t classes = 2,
                               std::optional<std::size_t> max_parts = std::nullopt);

/// Value grouping under the same cost. Exhaustive over set partitions up to
/// kExactGroupingLimit distinct values, greedy pairwise merging above.
UnivariatePartition group(std::string feature, std::span<const std::optional<std::string>> values,
                          std::span<const int> labels, std::size_t classes = 2);

inline constexpr std::size_t kExactDiscretizationLimit = 10000;
inline constexpr std::size_t kExactGroupingLimit = 7;

// Discretizes or groups a materialized column according to its kind.
UnivariatePartition preprocess_column(const FeatureColumn& column, std::span<const int> labels,
                                      std::size_t classes = 2);
std::vector<std::uint32_t> recode(const UnivariatePartition& partition, const FeatureColumn& column);

}  // namespace churn
