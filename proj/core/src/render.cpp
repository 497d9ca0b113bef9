#include "bilm/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "bilm/common.hpp"

namespace bilm {
namespace {

std::size_t find_or_append(std::vector<std::string>& labels, const std::string& s) {
    auto it = std::find(labels.begin(), labels.end(), s);
    if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
    labels.push_back(s);
    return labels.size() - 1;
}

std::string csv_cell(double v) { return fmt_fixed(v, 1); }

std::string md_row(const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) {
        s += ' ';
        s += c;
        s += " |";
    }
    s += '\n';
    return s;
}

std::string md_rule(std::size_t n_label_cols, std::size_t n_value_cols) {
    std::vector<std::string> cells;
    cells.insert(cells.end(), n_label_cols, "---");
    cells.insert(cells.end(), n_value_cols, "---:");
    return md_row(cells);
}

}  // namespace

SettingsTable settings_table(
    const std::vector<std::tuple<std::string, std::string, EvalReport>>& runs) {
    if (runs.empty()) throw InputError("settings_table: no runs");
    SettingsTable t;
    for (const auto& [regime, l1, report] : runs) {
        find_or_append(t.regimes, regime);
        find_or_append(t.l1s, l1);
        (void)report;
    }
    const double unset = std::numeric_limits<double>::quiet_NaN();
    t.overall.assign(t.regimes.size(), std::vector<double>(t.l1s.size(), unset));
    for (const auto& [regime, l1, report] : runs) {
        auto r = find_or_append(t.regimes, regime);
        auto c = find_or_append(t.l1s, l1);
        if (!std::isnan(t.overall[r][c])) {
            throw InputError("settings_table: duplicate cell " + regime + "/" + l1);
        }
        t.overall[r][c] = report.overall;
    }
    for (std::size_t r = 0; r < t.regimes.size(); ++r) {
        for (std::size_t c = 0; c < t.l1s.size(); ++c) {
            if (std::isnan(t.overall[r][c])) {
                throw InputError("settings_table: missing cell " + t.regimes[r] + "/" + t.l1s[c]);
            }
        }
    }
    return t;
}

std::string settings_csv(const SettingsTable& t) {
    std::string s = "setting";
    for (const auto& l1 : t.l1s) s += "," + l1;
    s += '\n';
    for (std::size_t r = 0; r < t.regimes.size(); ++r) {
        s += t.regimes[r];
        for (double v : t.overall[r]) s += "," + csv_cell(v);
        s += '\n';
    }
    return s;
}

std::string settings_markdown(const SettingsTable& t) {
    std::vector<std::string> head{"setting"};
    head.insert(head.end(), t.l1s.begin(), t.l1s.end());
    std::string s = md_row(head) + md_rule(1, t.l1s.size());
    for (std::size_t r = 0; r < t.regimes.size(); ++r) {
        std::vector<std::string> cells{t.regimes[r]};
        for (double v : t.overall[r]) cells.push_back(csv_cell(v));
        s += md_row(cells);
    }
    return s;
}

DeltaTable delta_table(const std::vector<std::pair<std::string, EvalReport>>& by_l1) {
    if (by_l1.empty()) throw InputError("delta_table: no reports");
    DeltaTable t;
    for (const auto& s : by_l1[0].second.suites) t.suite_ids.push_back(s.suite_id);
    for (const auto& [l1, report] : by_l1) {
        if (std::find(t.l1s.begin(), t.l1s.end(), l1) != t.l1s.end()) {
            throw InputError("delta_table: duplicate L1 label " + l1);
        }
        if (report.suites.size() != t.suite_ids.size()) {
            throw InputError("delta_table: mismatched suite sets across inputs");
        }
        for (std::size_t i = 0; i < report.suites.size(); ++i) {
            if (report.suites[i].suite_id != t.suite_ids[i]) {
                throw InputError("delta_table: mismatched suite sets across inputs");
            }
        }
        t.l1s.push_back(l1);
        std::vector<double> row;
        for (const auto& s : report.suites) row.push_back(s.accuracy);
        t.values.push_back(std::move(row));
        t.overall.push_back(report.overall);
    }
    return t;
}

std::string delta_csv(const DeltaTable& t) {
    std::string s = "l1";
    for (const auto& id : t.suite_ids) s += "," + id;
    s += ",overall\n";
    for (std::size_t r = 0; r < t.l1s.size(); ++r) {
        s += t.l1s[r];
        for (double v : t.values[r]) s += "," + csv_cell(v);
        s += "," + csv_cell(t.overall[r]) + "\n";
    }
    return s;
}

std::string delta_markdown(const DeltaTable& t) {
    std::vector<std::string> head{"L1"};
    head.insert(head.end(), t.suite_ids.begin(), t.suite_ids.end());
    head.push_back("Overall");
    std::string s = md_row(head) + md_rule(1, t.suite_ids.size() + 1);
    for (std::size_t r = 0; r < t.l1s.size(); ++r) {
        std::vector<std::string> cells{t.l1s[r]};
        for (double v : t.values[r]) cells.push_back(csv_cell(v));
        cells.push_back(csv_cell(t.overall[r]));
        s += md_row(cells);
    }
    return s;
}

std::string category_csv(const CategoryGainTable& t) {
    std::string s = "l1";
    for (const auto& c : t.categories) s += "," + c;
    s += '\n';
    for (std::size_t r = 0; r < t.l1_labels.size(); ++r) {
        s += t.l1_labels[r];
        for (double v : t.values[r]) s += "," + csv_cell(v);
        s += '\n';
    }
    s += "Avg.";
    for (double v : t.avg_row) s += "," + csv_cell(v);
    s += '\n';
    return s;
}

std::string category_markdown(const CategoryGainTable& t) {
    std::vector<std::string> head{"L1"};
    head.insert(head.end(), t.categories.begin(), t.categories.end());
    std::string s = md_row(head) + md_rule(1, t.categories.size());
    for (std::size_t r = 0; r < t.l1_labels.size(); ++r) {
        std::vector<std::string> cells{t.l1_labels[r]};
        for (double v : t.values[r]) cells.push_back(csv_cell(v));
        s += md_row(cells);
    }
    std::vector<std::string> cells{"Avg."};
    for (double v : t.avg_row) cells.push_back(csv_cell(v));
    s += md_row(cells);
    return s;
}

namespace {

const std::vector<std::string>& palette() {
    static const std::vector<std::string> p{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return p;
}

constexpr double kPlotW = 190, kPlotH = 120;
constexpr double kMarginL = 44, kMarginR = 14, kMarginT = 28, kMarginB = 32;
constexpr double kPanelW = kMarginL + kPlotW + kMarginR;
constexpr double kPanelH = kMarginT + kPlotH + kMarginB;
constexpr double kLegendH = 22;

std::string num(double v) { return fmt_fixed(v, 1); }

}  // namespace

std::string trajectory_svg(const std::vector<std::pair<std::string, Trajectory>>& series) {
    if (series.empty()) throw InputError("trajectory_svg: no series");
    for (const auto& [label, traj] : series) {
        if (traj.epochs.empty()) throw InputError("trajectory_svg: empty trajectory " + label);
    }
    auto suite_set = [](const Trajectory& t) {
        std::set<std::string> ids;
        for (const auto& s : t.reports[0].suites) ids.insert(s.suite_id);
        return ids;
    };
    const auto base_ids = suite_set(series[0].second);
    for (const auto& [label, traj] : series) {
        if (suite_set(traj) != base_ids) {
            throw InputError("trajectory_svg: mismatched suite sets across series");
        }
    }

    std::vector<std::string> panels;
    for (const auto& s : series[0].second.reports[0].suites) panels.push_back(s.suite_id);
    panels.push_back("overall");

    std::set<std::int64_t> tick_set;
    for (const auto& [label, traj] : series) tick_set.insert(traj.epochs.begin(), traj.epochs.end());
    const std::vector<std::int64_t> ticks(tick_set.begin(), tick_set.end());
    const double emin = static_cast<double>(ticks.front());
    const double espan = std::max(1.0, static_cast<double>(ticks.back()) - emin);

    const std::size_t n_cols = std::min<std::size_t>(4, panels.size());
    const std::size_t n_rows = (panels.size() + n_cols - 1) / n_cols;
    const double width = kPanelW * static_cast<double>(n_cols);
    const double height = kLegendH + kPanelH * static_cast<double>(n_rows);

    std::string svg = strfmt(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%s\" height=\"%s\" "
        "viewBox=\"0 0 %s %s\">\n",
        num(width).c_str(), num(height).c_str(), num(width).c_str(), num(height).c_str());
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<g font-family=\"sans-serif\" font-size=\"10\">\n";

    double lx = 8;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& color = palette()[i % palette().size()];
        svg += strfmt("<rect x=\"%s\" y=\"7\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                      num(lx).c_str(), color.c_str());
        svg += strfmt("<text x=\"%s\" y=\"16\">%s</text>\n", num(lx + 14).c_str(),
                      series[i].first.c_str());
        lx += 24 + 7 * static_cast<double>(series[i].first.size());
    }

    const std::size_t tick_stride = ticks.size() > 12 ? (ticks.size() + 11) / 12 : 1;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const double ox = kPanelW * static_cast<double>(p % n_cols) + kMarginL;
        const double oy = kLegendH + kPanelH * static_cast<double>(p / n_cols) + kMarginT;
        auto px = [&](double e) { return ox + kPlotW * (e - emin) / espan; };
        auto py = [&](double v) {
            return oy + kPlotH * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0);
        };

        svg += strfmt("<text x=\"%s\" y=\"%s\" text-anchor=\"middle\" font-weight=\"bold\">%s</text>\n",
                      num(ox + kPlotW / 2).c_str(), num(oy - 10).c_str(), panels[p].c_str());
        svg += strfmt("<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"none\" "
                      "stroke=\"#444444\"/>\n",
                      num(ox).c_str(), num(oy).c_str(), num(kPlotW).c_str(), num(kPlotH).c_str());
        for (int yv = 25; yv <= 75; yv += 25) {
            svg += strfmt("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#dddddd\"/>\n",
                          num(ox).c_str(), num(py(yv)).c_str(), num(ox + kPlotW).c_str(),
                          num(py(yv)).c_str());
        }
        for (int yv = 0; yv <= 100; yv += 25) {
            svg += strfmt("<text x=\"%s\" y=\"%s\" text-anchor=\"end\">%d</text>\n",
                          num(ox - 4).c_str(), num(py(yv) + 3).c_str(), yv);
        }
        for (std::size_t i = 0; i < ticks.size(); ++i) {
            const double x = px(static_cast<double>(ticks[i]));
            svg += strfmt("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#444444\"/>\n",
                          num(x).c_str(), num(oy + kPlotH).c_str(), num(x).c_str(),
                          num(oy + kPlotH + 3).c_str());
            if (i % tick_stride == 0 || i + 1 == ticks.size()) {
                svg += strfmt("<text x=\"%s\" y=\"%s\" text-anchor=\"middle\">%lld</text>\n",
                              num(x).c_str(), num(oy + kPlotH + 14).c_str(),
                              static_cast<long long>(ticks[i]));
            }
        }

        for (std::size_t si = 0; si < series.size(); ++si) {
            const auto& traj = series[si].second;
            std::string pts;
            std::string dots;
            for (std::size_t e = 0; e < traj.epochs.size(); ++e) {
                const auto& rep = traj.reports[e];
                double v = rep.overall;
                if (panels[p] != "overall") {
                    for (const auto& s : rep.suites) {
                        if (s.suite_id == panels[p]) v = s.accuracy;
                    }
                }
                const double x = px(static_cast<double>(traj.epochs[e]));
                const double y = py(v);
                if (!pts.empty()) pts += ' ';
                pts += num(x) + "," + num(y);
                dots += strfmt("<circle cx=\"%s\" cy=\"%s\" r=\"2\" fill=\"%s\"/>\n", num(x).c_str(),
                               num(y).c_str(), palette()[si % palette().size()].c_str());
            }
            svg += strfmt("<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                          pts.c_str(), palette()[si % palette().size()].c_str());
            svg += dots;
        }
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

}  // namespace bilm
