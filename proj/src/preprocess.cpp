#include "churn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "churn/error.hpp"
#include "churn/featuregen.hpp"

namespace churn {
namespace {

double log_factorial(std::size_t k) { return std::lgamma(static_cast<double>(k) + 1.0); }

double log_binomial(std::size_t a, std::size_t b) {
    return log_factorial(a) - log_factorial(b) - log_factorial(a - b);
}

// Per-part terms of the cost, read from a precomputed ln k! table.
class PartCost {
public:
    // Sized for ln C(n + I - 1, I - 1) with up to n + 1 parts.
    PartCost(std::size_t n, std::size_t classes) : classes_(classes), lf_(2 * n + classes + 2) {
        for (std::size_t k = 0; k < lf_.size(); ++k) {
            lf_[k] = log_factorial(k);
        }
    }

    double lnc(std::size_t a, std::size_t b) const { return lf_[a] - lf_[b] - lf_[a - b]; }

    template <typename CountAt>
    double operator()(CountAt count) const {
        std::size_t size = 0;
        double sum = 0;
        for (std::size_t j = 0; j < classes_; ++j) {
            std::size_t c = count(j);
            size += c;
            sum += lf_[c];
        }
        return lnc(size + classes_ - 1, classes_ - 1) + lf_[size] - sum;
    }

    double of(const ClassCounts& c) const {
        return (*this)([&](std::size_t j) { return c[j]; });
    }

    double multinomial(const ClassCounts& c) const {
        std::size_t size = 0;
        double sum = 0;
        for (std::size_t v : c) {
            size += v;
            sum += lf_[v];
        }
        return lf_[size] - sum;
    }

    // ln n + ln C(n+I-1, I-1)
    double global(std::size_t n, std::size_t parts) const {
        return std::log(static_cast<double>(n)) + lnc(n + parts - 1, parts - 1);
    }

private:
    std::size_t classes_;
    std::vector<double> lf_;
};

void check_inputs(std::size_t values, std::span<const int> labels, std::size_t classes, const char* op) {
    if (values != labels.size()) {
        throw Error(ErrorKind::modeling, "preprocess", std::string(op) + ": values and labels differ in length");
    }
    if (values == 0) {
        throw Error(ErrorKind::modeling, "preprocess", std::string(op) + ": empty input");
    }
    if (classes < 2) {
        throw Error(ErrorKind::modeling, "preprocess", std::string(op) + ": at least two classes required");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw Error(ErrorKind::modeling, "preprocess",
                        std::string(op) + ": label " + std::to_string(l) + " outside 0.." +
                            std::to_string(classes - 1));
        }
    }
}

ClassCounts add(const ClassCounts& a, const ClassCounts& b) {
    ClassCounts out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        out[j] = a[j] + b[j];
    }
    return out;
}

std::optional<std::size_t> pure_class(const ClassCounts& c) {
    std::optional<std::size_t> cls;
    for (std::size_t j = 0; j < c.size(); ++j) {
        if (c[j] > 0) {
            if (cls) {
                return std::nullopt;
            }
            cls = j;
        }
    }
    return cls;
}

double cut_between(double lo, double hi) {
    double mid = lo + (hi - lo) / 2;
    return mid > lo ? mid : hi;
}

void finish(UnivariatePartition& p, const ClassCounts& totals) {
    p.cost = partition_cost(p.counts);
    p.null_cost = null_partition_cost(totals);
    p.level = p.part_count() <= 1 ? 0.0 : level_of(p.cost, p.null_cost);
}

// Exact: best split of blocks into parts for every part count, with a lower
// bound that stops the search once more parts cannot pay off.
std::vector<std::size_t> exact_cuts(const std::vector<ClassCounts>& blocks, const PartCost& pc, std::size_t n,
                                    std::size_t classes, std::size_t extra_parts, double extra_cost,
                                    std::size_t max_parts) {
    const std::size_t B = blocks.size();
    std::vector<std::vector<std::size_t>> prefix(B + 1, std::vector<std::size_t>(classes, 0));
    double fine_multinomial = 0;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < classes; ++j) {
            prefix[b + 1][j] = prefix[b][j] + blocks[b][j];
        }
        fine_multinomial += pc.multinomial(blocks[b]);
    }
    auto range_cost = [&](std::size_t first, std::size_t last) {  // blocks first..last inclusive
        return pc([&](std::size_t j) { return prefix[last + 1][j] - prefix[first][j]; });
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double ln_classes = std::log(static_cast<double>(classes));

    std::vector<double> row(B), next(B);
    std::vector<std::vector<std::uint32_t>> parent;  // parent[I-2][k]: last block of the previous part
    for (std::size_t k = 0; k < B; ++k) {
        row[k] = range_cost(0, k);
    }
    double best_total = pc.global(n, 1 + extra_parts) + row[B - 1] + extra_cost;
    std::size_t best_parts = 1;
    const std::size_t limit = std::min(B, max_parts);
    for (std::size_t I = 2; I <= limit; ++I) {
        double bound = pc.global(n, I + extra_parts) + static_cast<double>(I) * ln_classes + fine_multinomial +
                       extra_cost;
        if (bound >= best_total) {
            break;
        }
        std::vector<std::uint32_t> par(B, 0);
        std::fill(next.begin(), next.end(), inf);
        for (std::size_t k = I - 1; k < B; ++k) {
            double best = inf;
            std::uint32_t arg = 0;
            for (std::size_t j = I - 2; j < k; ++j) {
                if (row[j] == inf) {
                    continue;
                }
                double c = row[j] + range_cost(j + 1, k);
                if (c < best) {
                    best = c;
                    arg = static_cast<std::uint32_t>(j);
                }
            }
            next[k] = best;
            par[k] = arg;
        }
        parent.push_back(std::move(par));
        std::swap(row, next);
        double total = pc.global(n, I + extra_parts) + row[B - 1] + extra_cost;
        if (total < best_total) {
            best_total = total;
            best_parts = I;
        }
    }
    // Last block index of each part, ascending.
    std::vector<std::size_t> ends{B - 1};
    std::size_t k = B - 1;
    for (std::size_t I = best_parts; I >= 2; --I) {
        k = parent[I - 2][k];
        ends.push_back(k);
    }
    std::reverse(ends.begin(), ends.end());
    return ends;
}

// Greedy: merge the adjacent pair with the cheapest part-cost change until a
// single part remains, then replay up to the best step.
std::vector<std::size_t> greedy_cuts(const std::vector<ClassCounts>& blocks, const PartCost& pc, std::size_t n,
                                     std::size_t extra_parts, double extra_cost, std::size_t max_parts) {
    const std::size_t B = blocks.size();
    std::vector<ClassCounts> seg = blocks;
    std::vector<double> cost(B);
    std::vector<long> prev(B), next(B);
    std::vector<std::size_t> last(B);
    double data_cost = 0;
    for (std::size_t i = 0; i < B; ++i) {
        cost[i] = pc.of(seg[i]);
        data_cost += cost[i];
        prev[i] = static_cast<long>(i) - 1;
        next[i] = i + 1 < B ? static_cast<long>(i + 1) : -1;
        last[i] = i;
    }
    std::vector<double> delta(B, 0);
    std::set<std::pair<double, std::size_t>> queue;
    auto refresh = [&](std::size_t i) {
        if (next[i] < 0) {
            return;
        }
        auto r = static_cast<std::size_t>(next[i]);
        delta[i] = pc.of(add(seg[i], seg[r])) - cost[i] - cost[r];
        queue.insert({delta[i], i});
    };
    for (std::size_t i = 0; i + 1 < B; ++i) {
        refresh(i);
    }
    std::vector<std::size_t> removed;  // boundary after this block index
    std::size_t parts = B;
    double best_total = parts <= max_parts ? pc.global(n, parts + extra_parts) + data_cost + extra_cost
                                            : std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    while (parts > 1) {
        auto [d, i] = *queue.begin();
        queue.erase(queue.begin());
        auto r = static_cast<std::size_t>(next[i]);
        if (prev[i] >= 0) {
            queue.erase({delta[static_cast<std::size_t>(prev[i])], static_cast<std::size_t>(prev[i])});
        }
        if (next[r] >= 0) {
            queue.erase({delta[r], r});
        }
        removed.push_back(last[i]);
        seg[i] = add(seg[i], seg[r]);
        cost[i] = pc.of(seg[i]);
        data_cost += d;
        last[i] = last[r];
        next[i] = next[r];
        if (next[r] >= 0) {
            prev[static_cast<std::size_t>(next[r])] = static_cast<long>(i);
        }
        refresh(i);
        if (prev[i] >= 0) {
            refresh(static_cast<std::size_t>(prev[i]));
        }
        --parts;
        if (parts <= max_parts) {
            double total = pc.global(n, parts + extra_parts) + data_cost + extra_cost;
            if (total < best_total) {
                best_total = total;
                best_step = removed.size();
            }
        }
    }
    std::vector<char> cut(B, 1);
    for (std::size_t s = 0; s < best_step; ++s) {
        cut[removed[s]] = 0;
    }
    std::vector<std::size_t> ends;
    for (std::size_t b = 0; b < B; ++b) {
        if (cut[b] || b + 1 == B) {
            ends.push_back(b);
        }
    }
    return ends;
}

UnivariatePartition null_partition(std::string feature, PartitionKind kind, const ClassCounts& totals) {
    UnivariatePartition p;
    p.feature = std::move(feature);
    p.kind = kind;
    p.counts = {totals};
    if (kind == PartitionKind::intervals) {
        p.bounds = {std::numeric_limits<double>::infinity()};
    } else {
        p.groups = {{}};
    }
    return p;
}

// All set partitions of {0..v-1} as restricted growth strings.
template <typename Visit>
void for_each_set_partition(std::size_t v, Visit visit) {
    std::vector<std::size_t> a(v, 0), max_before(v, 0);
    while (true) {
        visit(a);
        std::size_t i = v;
        bool advanced = false;
        while (!advanced && i > 1) {
            --i;
            if (a[i] <= max_before[i]) {
                ++a[i];
                for (std::size_t k = i + 1; k < v; ++k) {
                    a[k] = 0;
                    max_before[k] = std::max(max_before[k - 1], a[k - 1]);
                }
                advanced = true;
            }
        }
        if (!advanced) {
            return;
        }
    }
}

}  // namespace

std::size_t UnivariatePartition::total() const {
    std::size_t t = 0;
    for (const auto& c : counts) {
        t = std::accumulate(c.begin(), c.end(), t);
    }
    return t;
}

std::size_t UnivariatePartition::most_frequent_part() const {
    std::size_t best = 0, best_size = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::size_t size = std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
        if (size > best_size) {
            best = i;
            best_size = size;
        }
    }
    return best;
}

std::size_t UnivariatePartition::apply(std::optional<double> value) const {
    if (kind != PartitionKind::intervals) {
        throw std::logic_error("numeric value applied to a grouping of '" + feature + "'");
    }
    if (!value || std::isnan(*value)) {
        return missing_part ? *missing_part : most_frequent_part();
    }
    auto it = std::upper_bound(bounds.begin(), bounds.end(), *value);
    auto part = static_cast<std::size_t>(it - bounds.begin());
    return std::min(part, value_parts() - 1);
}

std::size_t UnivariatePartition::apply(std::optional<std::string_view> value) const {
    if (kind != PartitionKind::groups) {
        throw std::logic_error("categorical value applied to a discretization of '" + feature + "'");
    }
    if (!value) {
        return missing_part ? *missing_part : most_frequent_part();
    }
    auto it = group_of_.find(*value);
    return it == group_of_.end() ? garbage_group : it->second;
}

void UnivariatePartition::index_groups() {
    group_of_.clear();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (const auto& v : groups[g]) {
            group_of_.emplace(v, g);
        }
    }
}

std::string UnivariatePartition::part_label(std::size_t part) const {
    if (missing_part && part == *missing_part) {
        return "Missing";
    }
    if (kind == PartitionKind::intervals) {
        auto fmt = [](double v) {
            if (std::isinf(v)) {
                return std::string(v > 0 ? "+inf" : "-inf");
            }
            std::ostringstream out;
            out.precision(6);
            out << v;
            return out.str();
        };
        double lo = part == 0 ? -std::numeric_limits<double>::infinity() : bounds[part - 1];
        double hi = part + 1 == value_parts() ? std::numeric_limits<double>::infinity() : bounds[part];
        return "[" + fmt(lo) + ";" + fmt(hi) + "[";
    }
    std::string out = "{";
    for (std::size_t i = 0; i < groups[part].size(); ++i) {
        if (i > 0) {
            out += ",";
        }
        out += groups[part][i];
    }
    return out + "}";
}

double partition_cost(std::span<const ClassCounts> parts) {
    if (parts.empty()) {
        throw std::invalid_argument("partition_cost: no parts");
    }
    const std::size_t classes = parts.front().size();
    std::size_t n = 0;
    double sum = 0;
    for (const auto& part : parts) {
        std::size_t size = 0;
        double denom = 0;
        for (std::size_t c : part) {
            size += c;
            denom += log_factorial(c);
        }
        n += size;
        sum += log_binomial(size + classes - 1, classes - 1) + log_factorial(size) - denom;
    }
    if (n == 0) {
        throw std::invalid_argument("partition_cost: no instances");
    }
    return std::log(static_cast<double>(n)) + log_binomial(n + parts.size() - 1, parts.size() - 1) + sum;
}

double null_partition_cost(const ClassCounts& class_totals) {
    return partition_cost(std::span<const ClassCounts>(&class_totals, 1));
}

double level_of(double cost, double null_cost) {
    if (null_cost <= 0) {
        return 0;
    }
    return std::max(0.0, 1.0 - cost / null_cost);
}

UnivariatePartition discretize(std::string feature, std::span<const std::optional<double>> values,
                               std::span<const int> labels, std::size_t classes,
                               std::optional<std::size_t> max_parts) {
    check_inputs(values.size(), labels, classes, "discretize");
    const std::size_t n = values.size();
    ClassCounts totals(classes, 0), missing(classes, 0);
    std::vector<std::pair<double, int>> obs;
    obs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto cls = static_cast<std::size_t>(labels[i]);
        ++totals[cls];
        if (!values[i] || std::isnan(*values[i])) {
            ++missing[cls];
        } else {
            obs.emplace_back(*values[i], labels[i]);
        }
    }
    std::sort(obs.begin(), obs.end());

    // Distinct values, then maximal runs of values pure in the same class.
    std::vector<double> first_value, last_value;
    std::vector<ClassCounts> blocks;
    for (std::size_t i = 0; i < obs.size();) {
        ClassCounts c(classes, 0);
        std::size_t k = i;
        while (k < obs.size() && obs[k].first == obs[i].first) {
            ++c[static_cast<std::size_t>(obs[k].second)];
            ++k;
        }
        auto pure = pure_class(c);
        if (!blocks.empty() && pure && pure_class(blocks.back()) == pure) {
            blocks.back() = add(blocks.back(), c);
            last_value.back() = obs[i].first;
        } else {
            blocks.push_back(std::move(c));
            first_value.push_back(obs[i].first);
            last_value.push_back(obs[i].first);
        }
        i = k;
    }

    const bool has_missing = obs.size() < n;
    if (blocks.empty() || (blocks.size() == 1 && !has_missing)) {
        UnivariatePartition p = null_partition(std::move(feature), PartitionKind::intervals, totals);
        finish(p, totals);
        return p;
    }

    PartCost pc(n, classes);
    const std::size_t extra_parts = has_missing ? 1 : 0;
    const double extra_cost = has_missing ? pc.of(missing) : 0.0;
    const std::size_t cap = max_parts.value_or(blocks.size());
    std::vector<std::size_t> ends =
        blocks.size() <= kExactDiscretizationLimit
            ? exact_cuts(blocks, pc, n, classes, extra_parts, extra_cost, std::max<std::size_t>(1, cap))
            : greedy_cuts(blocks, pc, n, extra_parts, extra_cost, std::max<std::size_t>(1, cap));

    UnivariatePartition p;
    p.feature = feature;
    p.kind = PartitionKind::intervals;
    std::size_t first = 0;
    for (std::size_t e = 0; e < ends.size(); ++e) {
        ClassCounts c(classes, 0);
        for (std::size_t b = first; b <= ends[e]; ++b) {
            c = add(c, blocks[b]);
        }
        p.counts.push_back(std::move(c));
        p.bounds.push_back(e + 1 < ends.size() ? cut_between(last_value[ends[e]], first_value[ends[e] + 1])
                                               : std::numeric_limits<double>::infinity());
        first = ends[e] + 1;
    }
    if (has_missing) {
        p.missing_part = p.counts.size();
        p.counts.push_back(missing);
    }
    finish(p, totals);
    if (!(p.cost < p.null_cost)) {
        UnivariatePartition null = null_partition(std::move(feature), PartitionKind::intervals, totals);
        finish(null, totals);
        return null;
    }
    return p;
}

UnivariatePartition group(std::string feature, std::span<const std::optional<std::string>> values,
                          std::span<const int> labels, std::size_t classes) {
    check_inputs(values.size(), labels, classes, "group");
    const std::size_t n = values.size();
    ClassCounts totals(classes, 0), missing(classes, 0);
    std::map<std::string, ClassCounts, std::less<>> by_value;
    for (std::size_t i = 0; i < n; ++i) {
        auto cls = static_cast<std::size_t>(labels[i]);
        ++totals[cls];
        if (!values[i]) {
            ++missing[cls];
        } else {
            auto [it, inserted] = by_value.try_emplace(*values[i], ClassCounts(classes, 0));
            ++it->second[cls];
        }
    }
    std::vector<std::string> names;
    std::vector<ClassCounts> counts;
    for (auto& [name, c] : by_value) {
        names.push_back(name);
        counts.push_back(c);
    }
    const std::size_t V = names.size();
    const bool has_missing = std::any_of(missing.begin(), missing.end(), [](std::size_t c) { return c > 0; });

    // Garbage group: the group holding the rarest training value.
    std::size_t rarest = 0;
    for (std::size_t v = 1; v < V; ++v) {
        auto size = [&](std::size_t k) { return std::accumulate(counts[k].begin(), counts[k].end(), std::size_t{0}); };
        if (size(v) < size(rarest)) {
            rarest = v;
        }
    }

    auto build = [&](const std::vector<std::size_t>& assignment, std::size_t group_count) {
        UnivariatePartition p;
        p.feature = feature;
        p.kind = PartitionKind::groups;
        p.groups.assign(group_count, {});
        p.counts.assign(group_count, ClassCounts(classes, 0));
        for (std::size_t v = 0; v < V; ++v) {
            p.groups[assignment[v]].push_back(names[v]);
            p.counts[assignment[v]] = add(p.counts[assignment[v]], counts[v]);
        }
        p.garbage_group = V > 0 ? assignment[rarest] : 0;
        if (has_missing) {
            p.missing_part = group_count;
            p.counts.push_back(missing);
        }
        p.index_groups();
        finish(p, totals);
        return p;
    };

    if (V == 0 || (V == 1 && !has_missing)) {
        std::vector<std::size_t> all(V, 0);
        UnivariatePartition p = build(all, 1);
        p.missing_part.reset();
        p.counts = {totals};
        finish(p, totals);
        return p;
    }

    std::vector<std::size_t> best_assignment(V, 0);
    std::size_t best_groups = 1;
    PartCost pc(n, classes);
    const double extra_cost = has_missing ? pc.of(missing) : 0.0;
    const std::size_t extra_parts = has_missing ? 1 : 0;
    if (V <= kExactGroupingLimit) {
        double best_cost = std::numeric_limits<double>::infinity();
        std::vector<ClassCounts> parts;
        for_each_set_partition(V, [&](const std::vector<std::size_t>& a) {
            std::size_t g = *std::max_element(a.begin(), a.end()) + 1;
            parts.assign(g, ClassCounts(classes, 0));
            for (std::size_t v = 0; v < V; ++v) {
                parts[a[v]] = add(parts[a[v]], counts[v]);
            }
            if (has_missing) {
                parts.push_back(missing);
            }
            double c = partition_cost(parts);
            if (c < best_cost) {
                best_cost = c;
                best_assignment = a;
                best_groups = g;
            }
        });
    } else {
        std::vector<std::vector<std::size_t>> members(V);
        std::vector<ClassCounts> gcounts = counts;
        std::vector<double> gcost(V);
        double data_cost = 0;
        for (std::size_t v = 0; v < V; ++v) {
            members[v] = {v};
            gcost[v] = pc.of(counts[v]);
            data_cost += gcost[v];
        }
        auto snapshot = [&] {
            for (std::size_t g = 0; g < members.size(); ++g) {
                for (std::size_t v : members[g]) {
                    best_assignment[v] = g;
                }
            }
            best_groups = members.size();
        };
        double best_cost = pc.global(n, V + extra_parts) + data_cost + extra_cost;
        snapshot();
        while (members.size() > 1) {
            double best_delta = std::numeric_limits<double>::infinity();
            std::size_t bi = 0, bj = 1;
            for (std::size_t i = 0; i < members.size(); ++i) {
                for (std::size_t j = i + 1; j < members.size(); ++j) {
                    double d = pc.of(add(gcounts[i], gcounts[j])) - gcost[i] - gcost[j];
                    if (d < best_delta) {
                        best_delta = d;
                        bi = i;
                        bj = j;
                    }
                }
            }
            members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
            gcounts[bi] = add(gcounts[bi], gcounts[bj]);
            gcost[bi] = pc.of(gcounts[bi]);
            data_cost += best_delta;
            members.erase(members.begin() + static_cast<long>(bj));
            gcounts.erase(gcounts.begin() + static_cast<long>(bj));
            gcost.erase(gcost.begin() + static_cast<long>(bj));
            double total = pc.global(n, members.size() + extra_parts) + data_cost + extra_cost;
            if (total < best_cost) {
                best_cost = total;
                snapshot();
            }
        }
    }

    // Renumber groups by their smallest value so output is order-independent.
    std::vector<std::size_t> renumber(best_groups, V);
    std::size_t next_id = 0;
    for (std::size_t v = 0; v < V; ++v) {
        if (renumber[best_assignment[v]] == V) {
            renumber[best_assignment[v]] = next_id++;
        }
    }
    for (auto& a : best_assignment) {
        a = renumber[a];
    }
    UnivariatePartition p = build(best_assignment, best_groups);
    if (!(p.cost < p.null_cost)) {
        std::vector<std::size_t> all(V, 0);
        UnivariatePartition null = build(all, 1);
        null.missing_part.reset();
        null.counts = {totals};
        finish(null, totals);
        return null;
    }
    return p;
}

UnivariatePartition preprocess_column(const FeatureColumn& column, std::span<const int> labels,
                                      std::size_t classes) {
    if (column.kind == ValueKind::numeric) {
        return discretize(column.name, column.numbers, labels, classes);
    }
    return group(column.name, column.labels, labels, classes);
}

std::vector<std::uint32_t> recode(const UnivariatePartition& partition, const FeatureColumn& column) {
    std::vector<std::uint32_t> parts;
    if (column.kind == ValueKind::numeric) {
        parts.reserve(column.numbers.size());
        for (const auto& v : column.numbers) {
            parts.push_back(static_cast<std::uint32_t>(partition.apply(v)));
        }
    } else {
        parts.reserve(column.labels.size());
        for (const auto& v : column.labels) {
            parts.push_back(static_cast<std::uint32_t>(
                partition.apply(v ? std::optional<std::string_view>(*v) : std::nullopt)));
        }
    }
    return parts;
}

}  // namespace churn
