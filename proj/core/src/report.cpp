#include "bilm/report.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "bilm/common.hpp"

namespace bilm {

using nlohmann::json;

std::string report_to_json(const EvalReport& r) {
    json suites = json::array();
    for (const auto& s : r.suites) {
        suites.push_back({{"suite_id", s.suite_id},
                          {"category", s.category},
                          {"accuracy", s.accuracy},
                          {"n_pairs", s.n_pairs}});
    }
    json cats = json::object();
    for (const auto& [cat, mean] : r.category_means) cats[cat] = mean;
    json j{{"model_id", r.model_id}, {"epoch", r.epoch},   {"seed", r.seed},
           {"suites", suites},       {"overall", r.overall}, {"category_means", cats}};
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        EvalReport r;
        r.model_id = j.at("model_id").get<std::string>();
        r.epoch = j.at("epoch").get<std::int64_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("suites")) {
            SuiteScore sc;
            sc.suite_id = s.at("suite_id").get<std::string>();
            sc.category = s.at("category").get<std::string>();
            sc.accuracy = s.at("accuracy").get<double>();
            sc.n_pairs = s.at("n_pairs").get<std::int64_t>();
            r.suites.push_back(std::move(sc));
        }
        finalize_report(r);
        return r;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad report JSON: ") + e.what());
    }
}

void save_report(const std::string& path, const EvalReport& r) {
    write_file(path, report_to_json(r));
}

EvalReport load_report(const std::string& path) {
    try {
        return report_from_json(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string report_to_csv(const EvalReport& r) {
    std::string out = "suite_id,category,accuracy,n_pairs\n";
    for (const auto& s : r.suites) {
        out += strfmt("%s,%s,%s,%lld\n", s.suite_id.c_str(), s.category.c_str(),
                      fmt_fixed(s.accuracy, 1).c_str(), static_cast<long long>(s.n_pairs));
    }
    out += strfmt("overall,,%s,\n", fmt_fixed(r.overall, 1).c_str());
    return out;
}

EvalReport delta_report(const EvalReport& with_l1, const EvalReport& without_l1) {
    if (with_l1.suites.size() != without_l1.suites.size()) {
        throw InputError("delta: reports cover different suite sets");
    }
    EvalReport d;
    d.model_id = with_l1.model_id + " - " + without_l1.model_id;
    d.epoch = with_l1.epoch;
    d.seed = with_l1.seed;
    for (size_t i = 0; i < with_l1.suites.size(); ++i) {
        const auto& a = with_l1.suites[i];
        const auto& b = without_l1.suites[i];
        if (a.suite_id != b.suite_id) {
            throw InputError("delta: suite sets differ at '" + a.suite_id + "' vs '" + b.suite_id + "'");
        }
        SuiteScore s = a;
        s.accuracy = a.accuracy - b.accuracy;
        d.suites.push_back(std::move(s));
    }
    finalize_report(d);
    return d;
}

CategoryGainTable category_gain_table(
    const std::vector<std::pair<std::string, EvalReport>>& delta_by_l1) {
    if (delta_by_l1.empty()) throw InputError("category table: no inputs");
    CategoryGainTable t;
    for (const auto& [cat, mean] : delta_by_l1.front().second.category_means) {
        (void)mean;
        t.categories.push_back(cat);
    }
    for (const auto& [l1, report] : delta_by_l1) {
        if (report.category_means.size() != t.categories.size()) {
            throw InputError("category table: inconsistent categories across L1s");
        }
        std::vector<double> row;
        for (size_t c = 0; c < t.categories.size(); ++c) {
            if (report.category_means[c].first != t.categories[c]) {
                throw InputError("category table: inconsistent categories across L1s");
            }
            row.push_back(report.category_means[c].second);
        }
        t.l1_labels.push_back(l1);
        t.values.push_back(std::move(row));
    }
    t.avg_row.assign(t.categories.size(), 0.0);
    for (const auto& row : t.values) {
        for (size_t c = 0; c < row.size(); ++c) t.avg_row[c] += row[c];
    }
    for (auto& v : t.avg_row) v /= static_cast<double>(t.values.size());
    return t;
}

Trajectory make_trajectory(std::vector<std::pair<std::int64_t, EvalReport>> by_epoch) {
    if (by_epoch.empty()) throw InputError("trajectory: no reports");
    std::sort(by_epoch.begin(), by_epoch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Trajectory t;
    std::set<std::string> base;
    for (const auto& s : by_epoch.front().second.suites) base.insert(s.suite_id);
    for (auto& [epoch, report] : by_epoch) {
        if (!t.epochs.empty() && epoch == t.epochs.back()) {
            throw InputError(strfmt("trajectory: duplicate epoch %lld", static_cast<long long>(epoch)));
        }
        std::set<std::string> ids;
        for (const auto& s : report.suites) ids.insert(s.suite_id);
        if (ids != base) throw InputError("trajectory: suite sets differ across checkpoints");
        t.epochs.push_back(epoch);
        t.reports.push_back(std::move(report));
    }
    return t;
}

std::string trajectory_to_csv(const Trajectory& t) {
    std::string out = "epoch,suite_id,category,accuracy\n";
    for (size_t i = 0; i < t.epochs.size(); ++i) {
        for (const auto& s : t.reports[i].suites) {
            out += strfmt("%lld,%s,%s,%s\n", static_cast<long long>(t.epochs[i]), s.suite_id.c_str(),
                          s.category.c_str(), fmt_fixed(s.accuracy, 1).c_str());
        }
        out += strfmt("%lld,overall,,%s\n", static_cast<long long>(t.epochs[i]),
                      fmt_fixed(t.reports[i].overall, 1).c_str());
    }
    return out;
}

}  // namespace bilm
