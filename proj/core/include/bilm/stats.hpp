#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bilm {

struct MwuResult {
    double u = 0;        // U statistic of the first group
    double p = 0;        // two-sided p-value
    std::string method;  // "exact" or "normal"
};

// Mann-Whitney U with midrank tie handling. Exact p by counting all
// C(n+m, n) group assignments when n+m <= exact_limit, otherwise the normal
// approximation with tie and continuity corrections. Two-sided p doubles the
// smaller tail, capped at 1.
MwuResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                         std::int64_t exact_limit = 12);

// Unweighted arithmetic mean (the macro average behind every table).
double macro_mean(const std::vector<double>& values);

struct GroupMeans {
    std::vector<double> row_means;
    std::vector<double> col_means;
};

// Row and column means of a rectangular table.
GroupMeans group_means(const std::vector<std::vector<double>>& table);

// Midranks of the pooled sample (average rank across ties), 1-based.
std::vector<double> midranks(const std::vector<double>& pooled);

}  // namespace bilm
