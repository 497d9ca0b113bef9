#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "bilm/common.hpp"
#include "bilm/report.hpp"
#include "bilm/score.hpp"
#include "bilm/suite.hpp"

using namespace bilm;

namespace {

std::string tmp_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "bilm_test_eval" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

ModelConfig toy_config(std::int32_t vocab) {
    ModelConfig c;
    c.emb_dim = 16;
    c.ffn_dim = 24;
    c.n_layers = 2;
    c.n_heads = 2;
    c.max_positions = 32;
    c.n_languages = 2;
    c.vocab_size = vocab;
    return c;
}

// Letters a..h as single-subword words; empty merge table.
Tokenizer letter_tokenizer() {
    Tokenizer tok;
    tok.vocab = Vocab::with_specials();
    for (char ch = 'a'; ch <= 'h'; ++ch) {
        tok.vocab.push(std::string(1, ch) + "</w>", 1);
    }
    return tok;
}

EvalReport report_of(std::vector<SuiteScore> suites) {
    EvalReport r;
    r.suites = std::move(suites);
    finalize_report(r);
    return r;
}

// The twelve BLiMP phenomena with their coarse categories.
std::vector<std::pair<std::string, std::string>> blimp_layout() {
    return {{"anaphor_agreement", "morphology"},   {"determiner_noun_agreement", "morphology"},
            {"irregular_forms", "morphology"},     {"subject_verb_agreement", "morphology"},
            {"argument_structure", "syntax"},      {"ellipsis", "syntax"},
            {"filler_gap", "syntax"},              {"island_effects", "syntax"},
            {"npi_licensing", "semantics"},        {"quantifiers", "semantics"},
            {"binding", "syntax&semantics"},       {"control_raising", "syntax&semantics"}};
}

}  // namespace

TEST_CASE("suite files load and validate") {
    auto dir = tmp_dir("suites");
    write_file(dir + "/agr.jsonl",
               "{\"sentence_good\":\"a b\",\"sentence_bad\":\"a c\",\"suite_id\":\"agr\"}\n"
               "{\"sentence_good\":\"b b\",\"sentence_bad\":\"b c\",\"suite_id\":\"agr\",\"category\":\"morphology\"}\n");
    auto s = load_suite(dir + "/agr.jsonl");
    CHECK(s.suite_id == "agr");
    CHECK(s.category == "morphology");
    REQUIRE(s.pairs.size() == 2);
    CHECK(s.pairs[0].good == "a b");
    CHECK(s.pairs[1].bad == "b c");

    write_file(dir + "/empty.jsonl", "");
    CHECK_THROWS_AS(load_suite(dir + "/empty.jsonl"), InputError);
    write_file(dir + "/dup.jsonl",
               "{\"sentence_good\":\"a\",\"sentence_bad\":\"a\",\"suite_id\":\"x\"}\n");
    CHECK_THROWS_AS(load_suite(dir + "/dup.jsonl"), InputError);
    write_file(dir + "/blank.jsonl",
               "{\"sentence_good\":\"\",\"sentence_bad\":\"a\",\"suite_id\":\"x\"}\n");
    CHECK_THROWS_AS(load_suite(dir + "/blank.jsonl"), InputError);
    write_file(dir + "/mixed.jsonl",
               "{\"sentence_good\":\"a\",\"sentence_bad\":\"b\",\"suite_id\":\"x\"}\n"
               "{\"sentence_good\":\"a\",\"sentence_bad\":\"b\",\"suite_id\":\"y\"}\n");
    CHECK_THROWS_AS(load_suite(dir + "/mixed.jsonl"), InputError);
    write_file(dir + "/broken.jsonl", "{nope\n");
    CHECK_THROWS_AS(load_suite(dir + "/broken.jsonl"), InputError);
    write_file(dir + "/missing.jsonl", "{\"sentence_good\":\"a\",\"suite_id\":\"x\"}\n");
    CHECK_THROWS_AS(load_suite(dir + "/missing.jsonl"), InputError);
}

TEST_CASE("suite directories load sorted with categories applied") {
    auto dir = tmp_dir("suitedir");
    write_file(dir + "/b_suite.jsonl",
               "{\"sentence_good\":\"a b\",\"sentence_bad\":\"a c\",\"suite_id\":\"b_suite\"}\n");
    write_file(dir + "/a_suite.jsonl",
               "{\"sentence_good\":\"a b\",\"sentence_bad\":\"a c\",\"suite_id\":\"a_suite\"}\n");
    write_file(dir + "/notes.txt", "ignored\n");
    auto suites = load_suite_dir(dir);
    REQUIRE(suites.size() == 2);
    CHECK(suites[0].suite_id == "a_suite");
    CHECK(suites[1].suite_id == "b_suite");

    write_file(dir + "/cats.json", "{\"a_suite\":\"syntax\",\"b_suite\":\"morphology\"}\n");
    auto cats = load_category_map(dir + "/cats.json");
    apply_categories(suites, cats);
    CHECK(suites[0].category == "syntax");
    CHECK(suites[1].category == "morphology");

    std::map<std::string, std::string> partial{{"a_suite", "syntax"}};
    CHECK_THROWS_AS(apply_categories(suites, partial), InputError);
    CHECK_THROWS_AS(load_suite_dir(tmp_dir("nothing")), InputError);
}

TEST_CASE("pppl closed forms") {
    std::vector<double> half(7, std::log(0.5));
    CHECK(pppl_from_logprobs(half) == doctest::Approx(2.0).epsilon(1e-14));
    std::vector<double> sure(3, 0.0);
    CHECK(pppl_from_logprobs(sure) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(pppl_from_logprobs({}), InputError);

    // All-zero parameters give a uniform predictive distribution, so the
    // pseudo-perplexity equals the vocabulary size at any sentence length.
    auto cfg = toy_config(20);
    auto params = init_params<double>(cfg, 1);
    for (auto& [name, t] : params.named_tensors()) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    ScoreConfig sc;
    for (int len : {1, 3, 9}) {
        std::vector<std::int32_t> ids(static_cast<size_t>(len), 7);
        CHECK(pppl(params, ids, sc) == doctest::Approx(20.0).epsilon(1e-12));
    }
}

TEST_CASE("pppl matches a per-position brute-force recomputation") {
    auto cfg = toy_config(20);
    auto params = init_params<double>(cfg, 42);
    ScoreConfig sc;
    RngKey k = rng_derive(rng_seed(7), "sentences");
    std::uint64_t c = 0;

    double worst = 0;
    for (int s = 0; s < 50; ++s) {
        auto len = static_cast<size_t>(1 + rng_below(k, c++, 10));
        std::vector<std::int32_t> ids;
        for (size_t i = 0; i < len; ++i) {
            ids.push_back(static_cast<std::int32_t>(5 + rng_below(k, c++, 15)));
        }

        // Brute force: one forward per position, plain softmax arithmetic.
        double nll = 0;
        for (size_t t = 0; t < len; ++t) {
            std::int64_t t_len = static_cast<std::int64_t>(len) + 2;
            Batch b;
            b.batch_size = 1;
            b.seq_len = t_len;
            b.tokens.push_back(Vocab::kBos);
            for (size_t i = 0; i < len; ++i) {
                b.tokens.push_back(i == t ? Vocab::kMask : ids[i]);
            }
            b.tokens.push_back(Vocab::kEos);
            for (std::int64_t i = 0; i < t_len; ++i) {
                b.positions.push_back(static_cast<std::int32_t>(i));
                b.langs.push_back(sc.lang);
                b.attend.push_back(1);
            }
            b.pred_pos.push_back(static_cast<std::int32_t>(t + 1));
            b.targets.push_back(ids[t]);

            Graph<double> g;
            auto bp = bind_params(g, params, false);
            auto logits = forward_mlm(g, bp, cfg, b, Mode::kEval, rng_seed(0));
            const auto& row = g.value(logits);
            double denom = 0;
            for (std::int32_t v = 0; v < cfg.vocab_size; ++v) denom += std::exp(row.data[static_cast<size_t>(v)]);
            double p = std::exp(row.data[static_cast<size_t>(ids[t])]) / denom;
            nll += -std::log(p);
        }
        double oracle = std::exp(nll / static_cast<double>(len));
        double got = pppl(params, ids, sc);
        worst = std::max(worst, std::fabs(got - oracle) / oracle);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("pppl does not depend on the scoring batch size") {
    auto cfg = toy_config(20);
    auto params = init_params<double>(cfg, 5);
    std::vector<std::int32_t> ids{5, 9, 11, 6, 7, 14, 8, 8, 13};
    ScoreConfig one, big;
    one.max_rows = 1;
    big.max_rows = 64;
    CHECK(pppl(params, ids, one) == pppl(params, ids, big));
    ScoreConfig three;
    three.max_rows = 3;
    CHECK(pppl(params, ids, three) == pppl(params, ids, big));
}

TEST_CASE("pppl input validation") {
    auto cfg = toy_config(20);
    auto params = init_params<double>(cfg, 5);
    ScoreConfig sc;
    CHECK_THROWS_AS(pppl(params, {}, sc), InputError);
    CHECK_THROWS_AS(pppl(params, {5, 99}, sc), InputError);
    std::vector<std::int32_t> long_ids(40, 5);
    CHECK_THROWS_AS(pppl(params, long_ids, sc), InputError);
}

TEST_CASE("judge_pair prefers the sentence the model prefers, ties incorrect") {
    auto tok = letter_tokenizer();
    auto cfg = toy_config(tok.vocab.size());
    auto params = init_params<double>(cfg, 3);
    for (auto& [name, t] : params.named_tensors()) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    // A strong unigram preference for "a" over everything else.
    params.out_bias.data[static_cast<size_t>(tok.vocab.id_or_unk("a</w>"))] = 5.0;
    ScoreConfig sc;

    auto good_first = judge_pair(params, tok, {"a a a", "b b b"}, sc);
    CHECK(good_first.correct);
    CHECK(good_first.pppl_good < good_first.pppl_bad);
    auto bad_first = judge_pair(params, tok, {"b b b", "a a a"}, sc);
    CHECK_FALSE(bad_first.correct);

    // Same token sequence on both sides is an exact tie.
    auto tie = judge_pair(params, tok, {"a b", "a  b"}, sc);
    CHECK(tie.pppl_good == tie.pppl_bad);
    CHECK_FALSE(tie.correct);
}

TEST_CASE("evaluate counts correct pairs per suite and macro-averages") {
    auto tok = letter_tokenizer();
    auto cfg = toy_config(tok.vocab.size());
    auto params = init_params<double>(cfg, 3);
    for (auto& [name, t] : params.named_tensors()) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    params.out_bias.data[static_cast<size_t>(tok.vocab.id_or_unk("a</w>"))] = 5.0;
    ScoreConfig sc;

    // Suite one: 3 of 4 pairs put the preferred token on the good side.
    TestSuite s1;
    s1.suite_id = "unigram";
    s1.category = "morphology";
    s1.pairs = {{"a a", "b b"}, {"a b", "b b"}, {"a", "c"}, {"d d", "a a"}};
    // Suite two: 1 of 2 pairs correct.
    TestSuite s2;
    s2.suite_id = "other";
    s2.category = "syntax";
    s2.pairs = {{"a c", "c c"}, {"e", "a"}};

    auto report = evaluate(params, tok, {s1, s2}, sc);
    REQUIRE(report.suites.size() == 2);
    CHECK(report.suites[0].accuracy == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(report.suites[0].n_pairs == 4);
    CHECK(report.suites[1].accuracy == doctest::Approx(50.0).epsilon(1e-12));
    // Unweighted across suites despite unequal sizes.
    CHECK(report.overall == doctest::Approx(62.5).epsilon(1e-12));
    REQUIRE(report.category_means.size() == 2);
    CHECK(report.category_means[0].first == "morphology");
    CHECK(report.category_means[0].second == doctest::Approx(75.0).epsilon(1e-12));

    CHECK_THROWS_AS(evaluate(params, tok, {}, sc), InputError);
    TestSuite hollow;
    hollow.suite_id = "hollow";
    CHECK_THROWS_AS(evaluate(params, tok, {hollow}, sc), InputError);
}

TEST_CASE("the twelve French suite accuracies reproduce overall 58.0") {
    std::vector<double> fr{55.8, 69.5, 73.0, 60.4, 55.4, 67.7, 54.6, 52.2, 40.5, 56.5, 51.8, 58.6};
    auto layout = blimp_layout();
    std::vector<SuiteScore> suites;
    for (size_t i = 0; i < layout.size(); ++i) {
        suites.push_back({layout[i].first, layout[i].second, fr[i], 1000});
    }
    auto report = report_of(std::move(suites));
    CHECK(std::fabs(report.overall - 58.0) < 0.05);
    // Category order follows the benchmark's coarse categories.
    REQUIRE(report.category_means.size() == 4);
    CHECK(report.category_means[0].first == "morphology");
    CHECK(report.category_means[1].first == "syntax");
    CHECK(report.category_means[2].first == "semantics");
    CHECK(report.category_means[3].first == "syntax&semantics");
    CHECK(report.category_means[0].second ==
          doctest::Approx((55.8 + 69.5 + 73.0 + 60.4) / 4).epsilon(1e-12));
}

TEST_CASE("delta subtracts suite-wise and is antisymmetric") {
    auto layout = blimp_layout();
    std::vector<SuiteScore> with_s, without_s;
    for (size_t i = 0; i < layout.size(); ++i) {
        with_s.push_back({layout[i].first, layout[i].second, 50.0 + static_cast<double>(i), 1000});
        without_s.push_back({layout[i].first, layout[i].second, 48.0 + 0.5 * static_cast<double>(i), 1000});
    }
    auto with_r = report_of(with_s);
    auto without_r = report_of(without_s);
    auto d = delta_report(with_r, without_r);
    for (size_t i = 0; i < d.suites.size(); ++i) {
        CHECK(d.suites[i].accuracy ==
              doctest::Approx(with_s[i].accuracy - without_s[i].accuracy).epsilon(1e-12));
    }
    CHECK(d.overall == doctest::Approx(with_r.overall - without_r.overall).epsilon(1e-12));

    auto swapped = delta_report(without_r, with_r);
    for (size_t i = 0; i < d.suites.size(); ++i) {
        CHECK(swapped.suites[i].accuracy == doctest::Approx(-d.suites[i].accuracy).epsilon(1e-12));
    }
    auto zero = delta_report(with_r, with_r);
    for (const auto& s : zero.suites) CHECK(s.accuracy == 0.0);

    auto other = without_r;
    other.suites[0].suite_id = "renamed";
    CHECK_THROWS_AS(delta_report(with_r, other), InputError);
}

TEST_CASE("the category table reproduces the published Avg row") {
    // Per-L1 category-level deltas; one suite per category carries the value.
    std::vector<std::vector<double>> rows{{7.3, 7.0, 1.2, 1.7},
                                          {5.0, 7.2, 7.2, -0.4},
                                          {0.8, 1.9, -1.7, 0.1},
                                          {0.9, 3.0, -0.3, 1.5}};
    std::vector<std::string> l1s{"Fr", "De", "Ru", "Ja"};
    std::vector<std::pair<std::string, EvalReport>> deltas;
    for (size_t i = 0; i < l1s.size(); ++i) {
        std::vector<SuiteScore> suites;
        auto cats = known_categories();
        for (size_t c = 0; c < cats.size(); ++c) {
            suites.push_back({"suite_" + cats[c], cats[c], rows[i][c], 1000});
        }
        deltas.emplace_back(l1s[i], report_of(std::move(suites)));
    }
    auto table = category_gain_table(deltas);
    REQUIRE(table.avg_row.size() == 4);
    CHECK(std::fabs(table.avg_row[0] - 3.5) < 0.05);
    CHECK(std::fabs(table.avg_row[1] - 4.8) < 0.05);
    CHECK(std::fabs(table.avg_row[2] - 1.6) < 0.05);
    CHECK(std::fabs(table.avg_row[3] - 0.7) < 0.05);
    CHECK(table.l1_labels == l1s);

    auto single = category_gain_table({deltas[0]});
    CHECK(single.avg_row == single.values[0]);
}

TEST_CASE("trajectories sort by epoch and demand one suite set") {
    auto layout = blimp_layout();
    auto mk = [&](double base) {
        std::vector<SuiteScore> suites;
        for (const auto& [id, cat] : layout) suites.push_back({id, cat, base, 100});
        return report_of(std::move(suites));
    };
    auto t = make_trajectory({{5, mk(52)}, {1, mk(50)}, {100, mk(58)}});
    CHECK(t.epochs == std::vector<std::int64_t>{1, 5, 100});
    CHECK(t.reports[2].overall == doctest::Approx(58.0).epsilon(1e-12));

    auto single = make_trajectory({{7, mk(51)}});
    CHECK(single.epochs.size() == 1);

    CHECK_THROWS_AS(make_trajectory({}), InputError);
    CHECK_THROWS_AS(make_trajectory({{1, mk(50)}, {1, mk(51)}}), InputError);
    auto odd = mk(50);
    odd.suites.pop_back();
    finalize_report(odd);
    CHECK_THROWS_AS(make_trajectory({{1, mk(50)}, {2, odd}}), InputError);

    auto csv = trajectory_to_csv(t);
    auto lines = static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 1 + 3 * (layout.size() + 1));  // header + (suites + overall) per epoch
}

TEST_CASE("reports round-trip through JSON and render to CSV") {
    auto layout = blimp_layout();
    std::vector<SuiteScore> suites;
    for (size_t i = 0; i < layout.size(); ++i) {
        suites.push_back({layout[i].first, layout[i].second, 50.0 + 1.25 * static_cast<double>(i), 1000});
    }
    auto r = report_of(std::move(suites));
    r.model_id = "run-17/epoch_0100";
    r.epoch = 100;
    r.seed = 7;

    auto dir = tmp_dir("reports");
    save_report(dir + "/r.json", r);
    auto back = load_report(dir + "/r.json");
    CHECK(back.model_id == r.model_id);
    CHECK(back.epoch == r.epoch);
    CHECK(back.seed == r.seed);
    CHECK(back.overall == r.overall);
    REQUIRE(back.suites.size() == r.suites.size());
    for (size_t i = 0; i < r.suites.size(); ++i) {
        CHECK(back.suites[i].suite_id == r.suites[i].suite_id);
        CHECK(back.suites[i].accuracy == r.suites[i].accuracy);
    }

    auto csv = report_to_csv(r);
    CHECK(csv.find("suite_id,category,accuracy,n_pairs\n") == 0);
    CHECK(csv.find("anaphor_agreement,morphology,50.0,1000\n") != std::string::npos);
    CHECK(csv.find("overall,,") != std::string::npos);

    write_file(dir + "/bad.json", "{\"model_id\": 3}");
    CHECK_THROWS_AS(load_report(dir + "/bad.json"), InputError);
}

TEST_CASE("a fresh random model judges a tie-free synthetic suite near chance") {
    auto tok = letter_tokenizer();
    auto cfg = toy_config(tok.vocab.size());
    ScoreConfig sc;
    RngKey k = rng_derive(rng_seed(1234), "pairs");
    std::uint64_t c = 0;

    TestSuite suite;
    suite.suite_id = "chance";
    suite.category = "syntax";
    auto word = [&]() { return std::string(1, static_cast<char>('a' + rng_below(k, c++, 8))); };
    while (suite.pairs.size() < 2000) {
        std::string g, b;
        for (int w = 0; w < 4; ++w) {
            g += (w ? " " : "") + word();
            b += (w ? " " : "") + word();
        }
        if (g != b) suite.pairs.push_back({g, b});
    }

    auto params = init_params<float>(cfg, 2026);
    auto report = evaluate(params, tok, {suite}, sc);
    CHECK(report.suites[0].accuracy > 45.0);
    CHECK(report.suites[0].accuracy < 55.0);
}
