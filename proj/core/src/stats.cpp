#include "bilm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bilm/common.hpp"

namespace bilm {

namespace {

void require_group(const std::vector<double>& g, const char* name) {
    if (g.empty()) throw InputError(std::string("mann_whitney_u: group ") + name + " is empty");
    for (double v : g) {
        if (!std::isfinite(v)) {
            throw InputError(std::string("mann_whitney_u: group ") + name + " has non-finite values");
        }
    }
}

// Distribution of the doubled rank sum over all size-n subsets, by
// subset-sum counting. count[k][s] = number of size-k subsets with doubled
// rank sum s.
std::vector<std::vector<double>> rank_sum_counts(const std::vector<std::int64_t>& doubled,
                                                 std::int64_t n) {
    std::int64_t total = std::accumulate(doubled.begin(), doubled.end(), std::int64_t{0});
    std::vector<std::vector<double>> count(static_cast<size_t>(n) + 1,
                                           std::vector<double>(static_cast<size_t>(total) + 1, 0.0));
    count[0][0] = 1.0;
    for (std::int64_t d : doubled) {
        for (std::int64_t k = n; k >= 1; --k) {
            auto& row = count[static_cast<size_t>(k)];
            const auto& prev = count[static_cast<size_t>(k - 1)];
            for (std::int64_t s = total; s >= d; --s) {
                row[static_cast<size_t>(s)] += prev[static_cast<size_t>(s - d)];
            }
        }
    }
    return count;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

std::vector<double> midranks(const std::vector<double>& pooled) {
    auto n = pooled.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t i, size_t j) { return pooled[i] < pooled[j]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    return rank;
}

MwuResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                         std::int64_t exact_limit) {
    require_group(a, "a");
    require_group(b, "b");
    auto n = static_cast<std::int64_t>(a.size());
    auto m = static_cast<std::int64_t>(b.size());
    std::int64_t nm = n + m;

    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    auto rank = midranks(pooled);

    double ra = 0;
    for (std::int64_t i = 0; i < n; ++i) ra += rank[static_cast<size_t>(i)];
    double u = ra - static_cast<double>(n) * (static_cast<double>(n) + 1.0) / 2.0;

    MwuResult res;
    res.u = u;

    if (nm <= exact_limit) {
        // Midranks are multiples of 1/2; doubling makes them integers.
        std::vector<std::int64_t> doubled;
        for (double r : rank) doubled.push_back(static_cast<std::int64_t>(std::llround(2.0 * r)));
        auto count = rank_sum_counts(doubled, n);
        const auto& dist = count[static_cast<size_t>(n)];

        // Tail probabilities of the doubled rank sum of group a.
        auto obs = static_cast<std::int64_t>(std::llround(2.0 * ra));
        double total = 0, lower = 0, upper = 0;
        for (std::int64_t s = 0; s < static_cast<std::int64_t>(dist.size()); ++s) {
            double c = dist[static_cast<size_t>(s)];
            total += c;
            if (s <= obs) lower += c;
            if (s >= obs) upper += c;
        }
        res.p = std::min(1.0, 2.0 * std::min(lower, upper) / total);
        res.method = "exact";
        return res;
    }

    double mean = static_cast<double>(n) * static_cast<double>(m) / 2.0;
    // Tie correction over groups of equal pooled values.
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_sum = 0;
    for (size_t i = 0; i < sorted.size();) {
        size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        auto t = static_cast<double>(j - i + 1);
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    double nn = static_cast<double>(nm);
    double var = static_cast<double>(n) * static_cast<double>(m) / 12.0 *
                 ((nn + 1.0) - tie_sum / (nn * (nn - 1.0)));
    if (var <= 0) {  // all values tied
        res.p = 1.0;
        res.method = "normal";
        return res;
    }
    double diff = u - mean;
    double cc = diff > 0 ? -0.5 : (diff < 0 ? 0.5 : 0.0);  // continuity, toward the mean
    double z = (diff + cc) / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * normal_cdf(-std::fabs(z)));
    res.method = "normal";
    return res;
}

double macro_mean(const std::vector<double>& values) {
    if (values.empty()) throw InputError("macro_mean: empty input");
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

GroupMeans group_means(const std::vector<std::vector<double>>& table) {
    if (table.empty() || table[0].empty()) throw InputError("group_means: empty table");
    size_t cols = table[0].size();
    GroupMeans g;
    g.col_means.assign(cols, 0.0);
    for (const auto& row : table) {
        if (row.size() != cols) throw InputError("group_means: ragged table");
        g.row_means.push_back(macro_mean(row));
        for (size_t c = 0; c < cols; ++c) g.col_means[c] += row[c];
    }
    for (auto& v : g.col_means) v /= static_cast<double>(table.size());
    return g;
}

}  // namespace bilm
