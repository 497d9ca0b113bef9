#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <tuple>
#include <vector>

#include "bilm/common.hpp"
#include "bilm/render.hpp"

using namespace bilm;

namespace {

EvalReport report_with_overall(double overall) {
    EvalReport r;
    r.suites.push_back({"only", "syntax", overall, 100});
    finalize_report(r);
    return r;
}

EvalReport report_with_suites(const std::vector<std::pair<std::string, double>>& acc) {
    EvalReport r;
    for (const auto& [id, a] : acc) r.suites.push_back({id, "syntax", a, 100});
    finalize_report(r);
    return r;
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

std::vector<std::tuple<std::string, std::string, EvalReport>> settings_fixture() {
    const std::vector<std::string> l1s{"Fr", "De", "Ru", "Ja"};
    const std::vector<std::pair<std::string, std::vector<double>>> rows{
        {"nopara", {52.0, 57.6, 51.2, 52.5}},
        {"para", {51.1, 53.6, 48.9, 51.3}},
        {"drop", {58.0, 61.1, 52.8, 56.2}},
    };
    std::vector<std::tuple<std::string, std::string, EvalReport>> runs;
    for (const auto& [regime, vals] : rows) {
        for (std::size_t i = 0; i < l1s.size(); ++i) {
            runs.emplace_back(regime, l1s[i], report_with_overall(vals[i]));
        }
    }
    return runs;
}

Trajectory traj_of(const std::vector<std::int64_t>& epochs, double base) {
    std::vector<std::pair<std::int64_t, EvalReport>> pts;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        pts.emplace_back(epochs[i], report_with_suites({{"agr", base + 2.0 * double(i)},
                                                        {"order", base - 1.0 * double(i)}}));
    }
    return make_trajectory(std::move(pts));
}

}  // namespace

TEST_CASE("settings table holds the stored overall values in grid order") {
    SettingsTable t = settings_table(settings_fixture());
    REQUIRE(t.regimes == std::vector<std::string>{"nopara", "para", "drop"});
    REQUIRE(t.l1s == std::vector<std::string>{"Fr", "De", "Ru", "Ja"});
    CHECK(t.overall[2][0] == doctest::Approx(58.0));
    CHECK(t.overall[0][3] == doctest::Approx(52.5));
}

TEST_CASE("settings CSV reproduces the stored drop row byte-exactly") {
    const std::string csv = settings_csv(settings_table(settings_fixture()));
    CHECK(csv.find("drop,58.0,61.1,52.8,56.2\n") != std::string::npos);
    const std::string expect =
        "setting,Fr,De,Ru,Ja\n"
        "nopara,52.0,57.6,51.2,52.5\n"
        "para,51.1,53.6,48.9,51.3\n"
        "drop,58.0,61.1,52.8,56.2\n";
    CHECK(csv == expect);
}

TEST_CASE("settings markdown carries one row per regime") {
    const std::string md = settings_markdown(settings_table(settings_fixture()));
    CHECK(md.find("| setting | Fr | De | Ru | Ja |") != std::string::npos);
    CHECK(md.find("| drop | 58.0 | 61.1 | 52.8 | 56.2 |") != std::string::npos);
    CHECK(count_of(md, "\n") == 5);
}

TEST_CASE("settings table rejects holes and duplicates") {
    auto runs = settings_fixture();
    auto missing = runs;
    missing.pop_back();
    CHECK_THROWS_AS((void)settings_table(missing), InputError);
    auto dup = runs;
    dup.push_back(runs.back());
    CHECK_THROWS_AS((void)settings_table(dup), InputError);
    CHECK_THROWS_AS((void)settings_table({}), InputError);
}

TEST_CASE("delta table renders per-suite values plus stored overall") {
    std::vector<std::pair<std::string, EvalReport>> by_l1{
        {"Fr", report_with_suites({{"a", 7.3}, {"b", 7.1}})},
        {"De", report_with_suites({{"a", 5.0}, {"b", 7.2}})},
    };
    DeltaTable t = delta_table(by_l1);
    CHECK(t.suite_ids == std::vector<std::string>{"a", "b"});
    const std::string csv = delta_csv(t);
    CHECK(csv ==
          "l1,a,b,overall\n"
          "Fr,7.3,7.1,7.2\n"
          "De,5.0,7.2,6.1\n");
    const std::string md = delta_markdown(t);
    CHECK(md.find("| L1 | a | b | Overall |") != std::string::npos);
    CHECK(md.find("| De | 5.0 | 7.2 | 6.1 |") != std::string::npos);
}

TEST_CASE("delta table rejects mismatched suites and duplicate L1s") {
    std::vector<std::pair<std::string, EvalReport>> by_l1{
        {"Fr", report_with_suites({{"a", 1.0}, {"b", 2.0}})},
        {"De", report_with_suites({{"b", 1.0}, {"a", 2.0}})},
    };
    CHECK_THROWS_AS((void)delta_table(by_l1), InputError);
    std::vector<std::pair<std::string, EvalReport>> dup{
        {"Fr", report_with_suites({{"a", 1.0}})},
        {"Fr", report_with_suites({{"a", 2.0}})},
    };
    CHECK_THROWS_AS((void)delta_table(dup), InputError);
    CHECK_THROWS_AS((void)delta_table({}), InputError);
}

TEST_CASE("category table renders the stored Avg. row verbatim") {
    CategoryGainTable t;
    t.categories = {"morphology", "syntax", "semantics", "syntax&semantics"};
    t.l1_labels = {"Fr", "De", "Ru", "Ja"};
    t.values = {{7.3, 7.0, 1.2, 1.7}, {5.0, 7.2, 7.2, -0.4}, {0.8, 1.9, -1.7, 0.1},
                {0.9, 3.0, -0.3, 1.5}};
    t.avg_row = {3.5, 4.8, 1.6, 0.7};
    const std::string csv = category_csv(t);
    CHECK(csv.find("l1,morphology,syntax,semantics,syntax&semantics\n") == 0);
    CHECK(csv.find("Ru,0.8,1.9,-1.7,0.1\n") != std::string::npos);
    CHECK(csv.find("Avg.,3.5,4.8,1.6,0.7\n") != std::string::npos);
    const std::string md = category_markdown(t);
    CHECK(md.find("| Avg. | 3.5 | 4.8 | 1.6 | 0.7 |") != std::string::npos);
    CHECK(count_of(md, "\n") == 7);
}

TEST_CASE("trajectory SVG draws one panel per suite plus overall") {
    std::vector<std::pair<std::string, Trajectory>> series{
        {"with-l1", traj_of({1, 5, 10}, 60.0)},
        {"scratch", traj_of({1, 5, 10}, 50.0)},
    };
    const std::string svg = trajectory_svg(series);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_of(svg, "<polyline") == 6);  // 3 panels x 2 series
    CHECK(svg.find(">agr<") != std::string::npos);
    CHECK(svg.find(">order<") != std::string::npos);
    CHECK(svg.find(">overall<") != std::string::npos);
    CHECK(svg.find(">with-l1<") != std::string::npos);
    for (const char* tick : {">1<", ">5<", ">10<"}) CHECK(svg.find(tick) != std::string::npos);
    CHECK(svg == trajectory_svg(series));
}

TEST_CASE("trajectory SVG accepts series with different checkpoint epochs") {
    std::vector<std::pair<std::string, Trajectory>> series{
        {"a", traj_of({1, 2, 3}, 55.0)},
        {"b", traj_of({2, 4}, 45.0)},
    };
    const std::string svg = trajectory_svg(series);
    for (const char* tick : {">1<", ">2<", ">3<", ">4<"}) CHECK(svg.find(tick) != std::string::npos);
}

TEST_CASE("trajectory SVG rejects empty or mismatched input") {
    CHECK_THROWS_AS((void)trajectory_svg({}), InputError);
    std::vector<std::pair<std::string, Trajectory>> empty_traj{{"x", Trajectory{}}};
    CHECK_THROWS_AS((void)trajectory_svg(empty_traj), InputError);
    Trajectory other = make_trajectory({{1, report_with_suites({{"zzz", 50.0}})}});
    std::vector<std::pair<std::string, Trajectory>> mismatch{{"a", traj_of({1}, 50.0)},
                                                             {"b", other}};
    CHECK_THROWS_AS((void)trajectory_svg(mismatch), InputError);
}
