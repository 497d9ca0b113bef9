#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/score.hpp"

namespace bilm {

// Full report round-trip (JSON) and the flat suite-accuracy table (CSV).
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
void save_report(const std::string& path, const EvalReport& r);
EvalReport load_report(const std::string& path);
std::string report_to_csv(const EvalReport& r);

// Element-wise accuracy difference (with - without). Both reports must cover
// the same suites in the same order.
EvalReport delta_report(const EvalReport& with_l1, const EvalReport& without_l1);

// Per-(L1, category) delta means plus the per-category average row.
struct CategoryGainTable {
    std::vector<std::string> categories;      // column order
    std::vector<std::string> l1_labels;       // row order, as given
    std::vector<std::vector<double>> values;  // [l1][category]
    std::vector<double> avg_row;              // unweighted mean over L1s
};

CategoryGainTable category_gain_table(
    const std::vector<std::pair<std::string, EvalReport>>& delta_by_l1);

// Eval series over a checkpoint schedule.
struct Trajectory {
    std::vector<std::int64_t> epochs;  // strictly increasing
    std::vector<EvalReport> reports;   // same suite set at every point
};

Trajectory make_trajectory(std::vector<std::pair<std::int64_t, EvalReport>> by_epoch);
std::string trajectory_to_csv(const Trajectory& t);

}  // namespace bilm
