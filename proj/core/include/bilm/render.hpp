#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "bilm/report.hpp"

namespace bilm {

// Table renderers format stored report values only; nothing is rescored
// here. All accuracies print with one decimal.

// Regimes x L1s grid of stored overall accuracies.
struct SettingsTable {
    std::vector<std::string> regimes;  // row labels, first-appearance order
    std::vector<std::string> l1s;      // column labels, first-appearance order
    std::vector<std::vector<double>> overall;  // [regime][l1]
};

// Each run is (regime, l1, report); the grid must be complete and without
// duplicates.
SettingsTable settings_table(
    const std::vector<std::tuple<std::string, std::string, EvalReport>>& runs);
std::string settings_csv(const SettingsTable& t);
std::string settings_markdown(const SettingsTable& t);

// L1s x suites of stored per-suite values with the stored overall column;
// meant for delta reports but renders any report the same way.
struct DeltaTable {
    std::vector<std::string> l1s;
    std::vector<std::string> suite_ids;
    std::vector<std::vector<double>> values;  // [l1][suite]
    std::vector<double> overall;              // [l1]
};

DeltaTable delta_table(const std::vector<std::pair<std::string, EvalReport>>& by_l1);
std::string delta_csv(const DeltaTable& t);
std::string delta_markdown(const DeltaTable& t);

std::string category_csv(const CategoryGainTable& t);
std::string category_markdown(const CategoryGainTable& t);

// Line charts of labeled trajectories: one panel per suite plus an overall
// panel, linear x-axis with the checkpoint epochs as ticks, y fixed to
// 0..100. All trajectories must be non-empty and cover the same suites.
std::string trajectory_svg(const std::vector<std::pair<std::string, Trajectory>>& series);

}  // namespace bilm
