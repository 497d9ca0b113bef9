// bilm: train, evaluate and report on the bilingual masked LM laboratory.
//
// Exit codes: 0 success, 2 configuration or validation failure, 1 any other
// runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilm/checkpoint.hpp"
#include "bilm/common.hpp"
#include "bilm/corpus.hpp"
#include "bilm/model.hpp"
#include "bilm/render.hpp"
#include "bilm/report.hpp"
#include "bilm/runconfig.hpp"
#include "bilm/score.hpp"
#include "bilm/stats.hpp"
#include "bilm/suite.hpp"
#include "bilm/tokenizer.hpp"
#include "bilm/trainer.hpp"

namespace fs = std::filesystem;
using namespace bilm;

namespace {

// ---------------------------------------------------------------------------
// train-l1 / train-l2 / train-l1-only

// Warm-start rules, keyed by vocabulary hash:
//  - hash matches the tokenizer and the phase label matches: bit-exact resume;
//  - hash matches but the phase differs: keep the parameters, fresh optimizer;
//  - hash matches the tokenizer's recorded extension base: extend the
//    embedding/output rows to the new vocabulary, fresh optimizer;
//  - anything else is refused.
TrainerState init_state(const RunConfig& cfg, const ModelConfig& mcfg, const Tokenizer& tok,
                        std::uint64_t vocab_hash, const TrainPlan& plan) {
    if (cfg.init_checkpoint.empty()) return make_trainer(mcfg, cfg.seed);
    if (cfg.from_scratch) {
        throw ConfigError("from_scratch and inputs.init_checkpoint are mutually exclusive",
                          {"from_scratch", "inputs.init_checkpoint"});
    }

    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    if (ck.vocab_hash == vocab_hash) {
        if (ck.config != mcfg) {
            throw ConfigError("model config does not match the init checkpoint", {"model"});
        }
        if (ck.phase == plan.phase_label()) return trainer_from_checkpoint(ck);
        TrainerState st = make_trainer(mcfg, cfg.seed);
        st.params = std::move(ck.params);
        return st;
    }

    std::string ext_path = cfg.tokenizer_dir + "/extension.json";
    if (fs::exists(ext_path)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(ext_path));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(ext_path + ": bad JSON: " + std::string(e.what()));
        }
        std::string base_hex = j.value("base_vocab_hash", std::string());
        std::string ext_hex = j.value("extended_vocab_hash", std::string());
        if (to_hex(ck.vocab_hash) == base_hex && to_hex(vocab_hash) == ext_hex) {
            ModelConfig base_cfg = mcfg;
            base_cfg.vocab_size = ck.config.vocab_size;
            if (ck.config != base_cfg) {
                throw ConfigError("model config does not match the init checkpoint", {"model"});
            }
            extend_for_l2(ck.params, tok.vocab.size(), cfg.seed);
            TrainerState st = make_trainer(mcfg, cfg.seed);
            st.params = std::move(ck.params);
            return st;
        }
    }
    throw ConfigError(
        strfmt("checkpoint vocab hash %s matches neither the tokenizer (%s) nor its recorded "
               "extension base",
               to_hex(ck.vocab_hash).c_str(), to_hex(vocab_hash).c_str()),
        {"inputs.init_checkpoint", "inputs.tokenizer_dir"});
}

int run_train(const std::string& config_path, const std::string& phase_cmd, bool from_scratch,
              std::optional<std::uint64_t> seed_override) {
    if (config_path.empty()) {
        throw ConfigError("train commands need --config <run config JSON>", {"config"});
    }
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (from_scratch) cfg.from_scratch = true;
    if (cfg.phase != phase_cmd) {
        throw ConfigError(strfmt("config phase '%s' does not match command train-%s",
                                 cfg.phase.c_str(), phase_cmd.c_str()),
                          {"phase"});
    }
    validate_run_config(cfg);
    check_run_inputs(cfg);
    TrainPlan plan = cfg.plan();

    std::string out = resolve_out_dir(cfg);
    RunLock lock(out);

    Tokenizer tok = Tokenizer::load(cfg.tokenizer_dir);
    std::uint64_t vocab_hash = tok.vocab.content_hash();
    ModelConfig mcfg = cfg.model;
    if (mcfg.vocab_size == 0) {
        mcfg.vocab_size = tok.vocab.size();
    } else if (mcfg.vocab_size != tok.vocab.size()) {
        throw ConfigError(strfmt("model.vocab_size %d does not match the tokenizer vocabulary (%d)",
                                 mcfg.vocab_size, tok.vocab.size()),
                          {"model.vocab_size"});
    }

    TrainData data;
    data.vocab_hash = vocab_hash;
    if (plan.phase == Phase::kL1) {
        auto lines = load_corpus(cfg.corpus);
        CorpusSplit sp = split_corpus(static_cast<std::int64_t>(lines.size()), cfg.seed);
        data.train_sents = tokenize_lines(tok, gather_lines(lines, sp.train));
        data.dev_sents = tokenize_lines(tok, gather_lines(lines, sp.dev));
    } else {
        ParallelCorpus pc = ParallelCorpus::load(cfg.parallel_l1, cfg.parallel_l2);
        CorpusSplit sp = split_corpus(pc.size(), cfg.seed);
        data.train_pairs.l1 = tokenize_lines(tok, gather_lines(pc.l1, sp.train));
        data.train_pairs.l2 = tokenize_lines(tok, gather_lines(pc.l2, sp.train));
        data.dev_pairs.l1 = tokenize_lines(tok, gather_lines(pc.l1, sp.dev));
        data.dev_pairs.l2 = tokenize_lines(tok, gather_lines(pc.l2, sp.dev));
    }

    TrainerState state = init_state(cfg, mcfg, tok, vocab_hash, plan);
    save_run_config(out + "/config.json", cfg);
    TrainResult res = train(state, plan, data, out);
    Manifest mf = make_manifest(cfg, res, vocab_hash, out);
    save_manifest(out + "/manifest.json", mf);

    double last_train = 0.0;
    for (const auto& row : res.metrics) {
        if (row.split == "train_epoch") last_train = row.loss;
    }
    std::printf("run %s: %lld epochs, %lld optimizer steps, final train loss %.4f\n",
                mf.run_id.c_str(), static_cast<long long>(state.epoch),
                static_cast<long long>(res.opt_steps), last_train);
    std::printf("  out: %s (%zu checkpoints)\n", out.c_str(), mf.checkpoints.size());
    return 0;
}

// ---------------------------------------------------------------------------
// tokenize

int run_tokenize(const std::vector<std::string>& corpora, std::int64_t merges,
                 std::int64_t vocab_cap, const std::string& out, const std::string& extend_base,
                 std::int64_t extra_merges, std::int64_t added_cap) {
    std::vector<std::string> lines;
    for (const auto& path : corpora) {
        auto part = load_corpus(path);
        lines.insert(lines.end(), part.begin(), part.end());
    }
    if (extend_base.empty()) {
        Tokenizer tok = train_tokenizer(lines, merges, vocab_cap);
        tok.save(out);
        std::printf("trained %zu merges, vocab %d -> %s\n", tok.codes.merges.size(),
                    tok.vocab.size(), out.c_str());
        return 0;
    }
    Tokenizer tok = Tokenizer::load(extend_base);
    std::uint64_t base_hash = tok.vocab.content_hash();
    std::int32_t base_vocab = tok.vocab.size();
    VocabExtension ext = extend_bilingual(tok, lines, extra_merges, added_cap);
    tok.save(out);
    nlohmann::json j;
    j["base_vocab_hash"] = to_hex(base_hash);
    j["extended_vocab_hash"] = to_hex(tok.vocab.content_hash());
    j["first_added_id"] = ext.first_added_id;
    j["added_count"] = ext.added_count;
    write_file(out + "/extension.json", j.dump(2) + "\n");
    std::printf("extended vocab %d -> %d (+%d ids), %zu merges -> %s\n", base_vocab,
                tok.vocab.size(), ext.added_count, tok.codes.merges.size(), out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int run_eval(const std::vector<std::string>& ckpt_paths, const std::string& tokenizer_dir,
             const std::string& suites_dir, const std::string& categories_path,
             const std::string& out, std::int32_t lang, std::int64_t max_rows) {
    Tokenizer tok = Tokenizer::load(tokenizer_dir);
    std::uint64_t tok_hash = tok.vocab.content_hash();
    std::vector<TestSuite> suites = load_suite_dir(suites_dir);
    if (!categories_path.empty()) {
        apply_categories(suites, load_category_map(categories_path));
    }
    ScoreConfig sc;
    sc.lang = lang;
    sc.max_rows = max_rows;

    fs::create_directories(out);
    std::vector<std::pair<std::int64_t, EvalReport>> by_epoch;
    for (const auto& path : ckpt_paths) {
        Checkpoint ck = load_checkpoint(path);
        if (ck.vocab_hash != tok_hash) {
            throw ConfigError(
                strfmt("vocab hash mismatch: checkpoint %s was trained under %s but the tokenizer "
                       "hashes to %s; evaluate with the tokenizer that produced it",
                       path.c_str(), to_hex(ck.vocab_hash).c_str(), to_hex(tok_hash).c_str()),
                {"tokenizer", "checkpoint"});
        }
        ModelParams<double> params = ck.params.cast<double>();
        EvalReport r = evaluate(params, tok, suites, sc);
        r.model_id = fs::path(path).stem().string();
        r.epoch = ck.epoch;
        r.seed = ck.seed;
        std::string rpath = out + "/report_" + r.model_id + ".json";
        save_report(rpath, r);
        std::printf("%s: overall %.1f over %zu suites -> %s\n", r.model_id.c_str(), r.overall,
                    r.suites.size(), rpath.c_str());
        by_epoch.emplace_back(r.epoch, std::move(r));
    }
    Trajectory traj = make_trajectory(std::move(by_epoch));
    write_file(out + "/trajectory.csv", trajectory_to_csv(traj));
    std::printf("trajectory: %zu checkpoints -> %s/trajectory.csv\n", traj.epochs.size(),
                out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::string> split_spec(const std::string& spec, size_t want, const char* usage) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t comma = spec.find(',', start);
        if (comma == std::string::npos) {
            parts.push_back(spec.substr(start));
            break;
        }
        parts.push_back(spec.substr(start, comma - start));
        start = comma + 1;
    }
    if (parts.size() != want) {
        throw ConfigError(strfmt("bad spec '%s', expected %s", spec.c_str(), usage));
    }
    for (const auto& p : parts) {
        if (p.empty()) throw ConfigError(strfmt("bad spec '%s', expected %s", spec.c_str(), usage));
    }
    return parts;
}

int run_report(const std::vector<std::string>& settings_specs,
               const std::vector<std::string>& delta_specs,
               const std::vector<std::string>& trajectory_specs, const std::string& out) {
    if (settings_specs.empty() && delta_specs.empty() && trajectory_specs.empty()) {
        throw ConfigError(
            "nothing to report: pass --settings, --delta and/or --trajectory",
            {"settings", "delta", "trajectory"});
    }
    fs::create_directories(out);
    std::vector<std::string> written;

    if (!settings_specs.empty()) {
        std::vector<std::tuple<std::string, std::string, EvalReport>> cells;
        for (const auto& spec : settings_specs) {
            auto p = split_spec(spec, 3, "regime,l1,report.json");
            cells.emplace_back(p[0], p[1], load_report(p[2]));
        }
        SettingsTable t = settings_table(cells);
        write_file(out + "/settings.csv", settings_csv(t));
        write_file(out + "/settings.md", settings_markdown(t));
        written.push_back("settings.csv");
        written.push_back("settings.md");
    }

    if (!delta_specs.empty()) {
        std::vector<std::pair<std::string, EvalReport>> deltas;
        for (const auto& spec : delta_specs) {
            auto p = split_spec(spec, 3, "l1,with.json,without.json");
            deltas.emplace_back(p[0], delta_report(load_report(p[1]), load_report(p[2])));
        }
        DeltaTable t = delta_table(deltas);
        write_file(out + "/delta.csv", delta_csv(t));
        write_file(out + "/delta.md", delta_markdown(t));
        CategoryGainTable g = category_gain_table(deltas);
        write_file(out + "/category.csv", category_csv(g));
        write_file(out + "/category.md", category_markdown(g));
        written.insert(written.end(), {"delta.csv", "delta.md", "category.csv", "category.md"});
    }

    if (!trajectory_specs.empty()) {
        std::vector<std::pair<std::string, Trajectory>> series;
        for (const auto& spec : trajectory_specs) {
            auto p = split_spec(spec, 2, "label,report_dir");
            std::vector<std::string> files;
            if (fs::is_directory(p[1])) {
                for (const auto& e : fs::directory_iterator(p[1])) {
                    if (e.is_regular_file() && e.path().extension() == ".json" &&
                        e.path().filename() != "config.json" &&
                        e.path().filename() != "manifest.json") {
                        files.push_back(e.path().string());
                    }
                }
                std::sort(files.begin(), files.end());
            }
            if (files.empty()) {
                std::fprintf(stderr, "warning: no reports under '%s', skipping series '%s'\n",
                             p[1].c_str(), p[0].c_str());
                continue;
            }
            std::vector<std::pair<std::int64_t, EvalReport>> by_epoch;
            for (const auto& f : files) {
                EvalReport r = load_report(f);
                by_epoch.emplace_back(r.epoch, std::move(r));
            }
            series.emplace_back(p[0], make_trajectory(std::move(by_epoch)));
        }
        if (series.empty()) {
            std::fprintf(stderr, "warning: every trajectory was empty, no SVG written\n");
        } else {
            write_file(out + "/trajectories.svg", trajectory_svg(series));
            written.push_back("trajectories.svg");
        }
    }

    std::printf("wrote %s: %s\n", out.c_str(), join(written, ", ").c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// stats

std::vector<double> parse_values_file(const std::string& path) {
    std::vector<double> vals;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(line, &pos);
        } catch (const std::exception&) {
            throw InputError(path + ": not a number: '" + line + "'");
        }
        if (pos != line.size()) throw InputError(path + ": not a number: '" + line + "'");
        vals.push_back(v);
    }
    return vals;
}

int run_stats(std::vector<double> a, std::vector<double> b, const std::string& a_file,
              const std::string& b_file, std::int64_t exact_limit) {
    if (!a_file.empty()) {
        auto more = parse_values_file(a_file);
        a.insert(a.end(), more.begin(), more.end());
    }
    if (!b_file.empty()) {
        auto more = parse_values_file(b_file);
        b.insert(b.end(), more.begin(), more.end());
    }
    if (a.empty() || b.empty()) {
        throw ConfigError("both groups need at least one value (--a/--a-file, --b/--b-file)",
                          {"a", "b"});
    }
    MwuResult r = mann_whitney_u(a, b, exact_limit);
    std::printf("n=%zu m=%zu U=%.17g p=%.17g method=%s\n", a.size(), b.size(), r.u, r.p,
                r.method.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bilingual masked LM laboratory"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    bool serial = false;
    app.add_flag("--serial", serial,
                 "force strictly serial execution (execution is always single-process serial; "
                 "accepted for interface stability)");
    std::string config_path;
    app.add_option("--config", config_path, "run configuration JSON for the train commands");

    auto* t_l1 = app.add_subcommand("train-l1", "pretrain on monolingual L1 text");
    auto* t_l2 = app.add_subcommand("train-l2", "second phase on the parallel corpus");
    bool from_scratch = false;
    t_l2->add_flag("--from-scratch", from_scratch, "ablation: random init instead of a warm start");
    auto* t_l1o = app.add_subcommand("train-l1-only", "control: L1 side of the parallel corpus");
    for (auto* sub : {t_l1, t_l2, t_l1o}) sub->fallthrough();

    auto* tk = app.add_subcommand("tokenize", "train or extend a BPE tokenizer");
    std::vector<std::string> tk_corpora;
    std::int64_t tk_merges = 200, tk_vocab_cap = 512, tk_extra = 60, tk_added_cap = 256;
    std::string tk_out, tk_extend;
    tk->add_option("--corpus", tk_corpora, "input text, one sentence per line")
        ->required()
        ->take_all();
    tk->add_option("--merges", tk_merges, "merge budget")->capture_default_str();
    tk->add_option("--vocab-cap", tk_vocab_cap, "vocabulary cap")->capture_default_str();
    tk->add_option("--out", tk_out, "output tokenizer directory")->required();
    tk->add_option("--extend", tk_extend, "extend this base tokenizer instead of training");
    tk->add_option("--extra-merges", tk_extra, "extension merge budget")->capture_default_str();
    tk->add_option("--added-cap", tk_added_cap, "cap on added vocabulary entries")
        ->capture_default_str();
    tk->fallthrough();

    auto* ev = app.add_subcommand("eval", "score checkpoints on minimal-pair suites");
    std::vector<std::string> ev_ckpts;
    std::string ev_tok, ev_suites, ev_cats, ev_out = "eval";
    std::int32_t ev_lang = 1;
    std::int64_t ev_rows = 64;
    ev->add_option("--checkpoint", ev_ckpts, "checkpoint file(s)")->required()->take_all();
    ev->add_option("--tokenizer", ev_tok, "tokenizer directory")->required();
    ev->add_option("--suites", ev_suites, "directory of .jsonl suites")->required();
    ev->add_option("--categories", ev_cats, "suite_id -> category JSON map");
    ev->add_option("--out", ev_out, "output directory")->capture_default_str();
    ev->add_option("--lang", ev_lang, "language id fed to the model")->capture_default_str();
    ev->add_option("--max-rows", ev_rows, "scoring rows per forward pass")->capture_default_str();
    ev->fallthrough();

    auto* rp = app.add_subcommand("report", "render stored eval reports into tables and charts");
    std::vector<std::string> rp_settings, rp_delta, rp_traj;
    std::string rp_out = "report";
    rp->add_option("--settings", rp_settings, "cell spec regime,l1,report.json")->take_all();
    rp->add_option("--delta", rp_delta, "delta spec l1,with.json,without.json")->take_all();
    rp->add_option("--trajectory", rp_traj, "series spec label,report_dir")->take_all();
    rp->add_option("--out", rp_out, "output directory")->capture_default_str();
    rp->fallthrough();

    auto* st = app.add_subcommand("stats", "Mann-Whitney U between two groups");
    std::vector<double> st_a, st_b;
    std::string st_a_file, st_b_file;
    std::int64_t st_exact = 12;
    st->add_option("--a", st_a, "first group values")->take_all();
    st->add_option("--b", st_b, "second group values")->take_all();
    st->add_option("--a-file", st_a_file, "first group, one value per line");
    st->add_option("--b-file", st_b_file, "second group, one value per line");
    st->add_option("--exact-limit", st_exact, "exact enumeration up to n+m of this")
        ->capture_default_str();
    st->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::optional<std::uint64_t> seed_override;
    if (seed_opt->count() > 0) seed_override = seed;

    try {
        if (t_l1->parsed()) return run_train(config_path, "l1", false, seed_override);
        if (t_l2->parsed()) return run_train(config_path, "l2", from_scratch, seed_override);
        if (t_l1o->parsed()) return run_train(config_path, "l1-only", false, seed_override);
        if (tk->parsed()) {
            return run_tokenize(tk_corpora, tk_merges, tk_vocab_cap, tk_out, tk_extend, tk_extra,
                                tk_added_cap);
        }
        if (ev->parsed()) {
            return run_eval(ev_ckpts, ev_tok, ev_suites, ev_cats, ev_out, ev_lang, ev_rows);
        }
        if (rp->parsed()) return run_report(rp_settings, rp_delta, rp_traj, rp_out);
        if (st->parsed()) return run_stats(st_a, st_b, st_a_file, st_b_file, st_exact);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        if (!e.keys.empty()) std::fprintf(stderr, "  offending keys: %s\n", join(e.keys, ", ").c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
