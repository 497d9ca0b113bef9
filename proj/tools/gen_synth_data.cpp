// Generates the bundled micro-language corpora, minimal-pair suites and
// auto-tuned tokenizers, then verifies the cross-language suffix sharing the
// experiments rely on.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilm/common.hpp"
#include "bilm/suite.hpp"
#include "bilm/synth.hpp"
#include "bilm/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace bilm;

namespace {

void write_corpus(const std::string& path, const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    write_file(path, out);
}

std::int64_t count_tokens(const Tokenizer& tok, const std::vector<std::string>& lines) {
    std::int64_t n = 0;
    for (const auto& l : lines) n += static_cast<std::int64_t>(tok.segment_line(l).size());
    return n;
}

std::vector<std::string> concat(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

void write_suites(const std::string& dir, const std::vector<TestSuite>& suites,
                  const std::map<std::string, std::string>& cats) {
    fs::create_directories(dir);
    for (TestSuite s : suites) {
        auto it = cats.find(s.suite_id);
        if (it != cats.end()) s.category = it->second;
        save_suite(dir + "/" + s.suite_id + ".jsonl", s);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate bundled micro-language data and tokenizers"};
    std::string out_dir = "data";
    SynthConfig cfg;
    std::int64_t probe_merges = 240;
    std::int64_t vocab_cap = 512;
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
    app.add_option("--mono", cfg.mono_sentences, "monolingual sentences per language")
        ->capture_default_str();
    app.add_option("--parallel", cfg.parallel_sentences, "parallel sentence pairs")
        ->capture_default_str();
    app.add_option("--pairs", cfg.pairs_per_suite, "minimal pairs per suite")
        ->capture_default_str();
    app.add_option("--calibration", cfg.calibration_pairs, "calibration pairs")
        ->capture_default_str();
    app.add_option("--probe-merges", probe_merges, "merge budget for the tuning probe")
        ->capture_default_str();
    app.add_option("--vocab-cap", vocab_cap, "vocabulary cap per training stage")
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        SynthData d = generate_synth(cfg);

        fs::create_directories(out_dir + "/corpora");
        write_corpus(out_dir + "/corpora/l1_mono.txt", d.l1_mono);
        write_corpus(out_dir + "/corpora/l2_mono.txt", d.l2_mono);
        write_corpus(out_dir + "/corpora/parallel_l1.txt", d.par_l1);
        write_corpus(out_dir + "/corpora/parallel_l2.txt", d.par_l2);

        std::map<std::string, std::string> cats(d.categories.begin(), d.categories.end());
        write_suites(out_dir + "/suites_l1", d.l1_suites, cats);
        write_suites(out_dir + "/suites_l2", d.l2_suites, cats);
        write_suites(out_dir + "/calibration", {d.l2_calibration}, cats);

        nlohmann::json jcats;
        for (const auto& [id, cat] : d.categories) jcats[id] = cat;
        write_file(out_dir + "/categories.json", jcats.dump(2) + "\n");

        std::vector<std::string> l1_lines = concat(d.l1_mono, d.par_l1);
        std::vector<std::string> l2_lines = concat(d.l2_mono, d.par_l2);
        SynthTokenizers toks = synth_tokenizer(l1_lines, l2_lines, probe_merges, vocab_cap);
        verify_synth(d, toks.extended);

        toks.base.save(out_dir + "/tokenizer_l1");
        toks.extended.save(out_dir + "/tokenizer_bi");
        nlohmann::json jext;
        jext["base_vocab_hash"] = to_hex(toks.base.vocab.content_hash());
        jext["extended_vocab_hash"] = to_hex(toks.extended.vocab.content_hash());
        jext["first_added_id"] = toks.ext.first_added_id;
        jext["added_count"] = toks.ext.added_count;
        jext["base_merges"] = toks.base_merges;
        jext["extra_merges"] = toks.extra_merges;
        write_file(out_dir + "/tokenizer_bi/extension.json", jext.dump(2) + "\n");

        std::printf("wrote %s\n", out_dir.c_str());
        std::printf("  l1_mono: %zu sentences, %lld subword tokens\n", d.l1_mono.size(),
                    static_cast<long long>(count_tokens(toks.extended, d.l1_mono)));
        std::printf("  l2_mono: %zu sentences, %lld subword tokens\n", d.l2_mono.size(),
                    static_cast<long long>(count_tokens(toks.extended, d.l2_mono)));
        std::printf("  parallel: %zu pairs, %lld + %lld subword tokens\n", d.par_l1.size(),
                    static_cast<long long>(count_tokens(toks.extended, d.par_l1)),
                    static_cast<long long>(count_tokens(toks.extended, d.par_l2)));
        std::printf("  suites: %zu per language + calibration (%zu pairs)\n", d.l1_suites.size(),
                    d.l2_calibration.pairs.size());
        std::printf("  tokenizer: %d base merges + %d extension merges, vocab %d -> %d\n",
                    static_cast<int>(toks.base_merges), static_cast<int>(toks.extra_merges),
                    toks.base.vocab.size(), toks.extended.vocab.size());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
