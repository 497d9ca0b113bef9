#include "bilm/synth.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "bilm/bpe.hpp"
#include "bilm/common.hpp"
#include "bilm/rng.hpp"

namespace bilm {
namespace {

struct Lexicon {
    std::vector<std::string> nouns;
    std::vector<std::string> verbs;
    std::string adposition;
    bool verb_final = false;
};

// Stems never contain a suffix string and are unique across the two
// languages; translation equivalence is by index. Within a part of speech
// every stem ends in a different consonant, so no stem-suffix boundary pair
// gets enough corpus frequency to out-rank the suffix merges themselves;
// that keeps the auto-tuned merge budget (synth_tokenizer) comfortably wide.
const Lexicon& lex_l1() {
    static const Lexicon l{{"mib", "vad", "sef", "log", "nuk", "pal", "rem", "son", "tup", "kiv",
                            "jaz", "hew"},
                           {"pag", "dol", "wes", "ran", "zeb", "fid"},
                           "ni",
                           true};
    return l;
}

const Lexicon& lex_l2() {
    static const Lexicon l{{"gab", "ned", "rof", "sug", "tek", "pil", "dam", "won", "zup", "lev",
                            "fiz", "yaw"},
                           {"wab", "hed", "nog", "mul", "pes", "kir"},
                           "pe",
                           false};
    return l;
}

constexpr const char* kNounSg = "ta";
constexpr const char* kNounPl = "ku";
constexpr const char* kVerbSg = "mo";
constexpr const char* kVerbPl = "ri";

const std::vector<std::string>& suffix_tokens() {
    static const std::vector<std::string> s{std::string(kNounSg) + kEowMarker,
                                            std::string(kNounPl) + kEowMarker,
                                            std::string(kVerbSg) + kEowMarker,
                                            std::string(kVerbPl) + kEowMarker};
    return s;
}

std::string noun_form(const Lexicon& lex, int idx, bool pl) {
    return lex.nouns[static_cast<std::size_t>(idx)] + (pl ? kNounPl : kNounSg);
}

std::string verb_form(const Lexicon& lex, int idx, bool pl) {
    return lex.verbs[static_cast<std::size_t>(idx)] + (pl ? kVerbPl : kVerbSg);
}

struct Tree {
    int subj = 0, obj = 0, verb = 0;
    bool subj_pl = false, obj_pl = false;
    bool has_loc = false;
    int loc = 0;
    bool loc_pl = false;
};

enum LocMode { kLocNever = 0, kLocMaybe = 1, kLocAlways = 2 };

// Each tree consumes a fixed counter block of 8, so draws never shift.
Tree sample_tree(const Lexicon& lex, RngKey k, std::uint64_t i, LocMode loc_mode) {
    const std::uint64_t c = i * 8;
    Tree t;
    t.subj = static_cast<int>(rng_below(k, c + 0, lex.nouns.size()));
    t.subj_pl = rng_below(k, c + 1, 2) == 1;
    t.obj = static_cast<int>(rng_below(k, c + 2, lex.nouns.size()));
    t.obj_pl = rng_below(k, c + 3, 2) == 1;
    t.verb = static_cast<int>(rng_below(k, c + 4, lex.verbs.size()));
    t.has_loc = loc_mode == kLocAlways || (loc_mode == kLocMaybe && rng_below(k, c + 5, 2) == 1);
    t.loc = static_cast<int>(rng_below(k, c + 6, lex.nouns.size()));
    t.loc_pl = rng_below(k, c + 7, 2) == 1;
    return t;
}

// L1: SUBJ [ni LOC] OBJ VERB; L2: SUBJ [pe LOC] VERB OBJ.
std::string render(const Lexicon& lex, const Tree& t, bool verb_pl, bool verb_final) {
    std::string s = noun_form(lex, t.subj, t.subj_pl);
    if (t.has_loc) {
        s += ' ';
        s += lex.adposition;
        s += ' ';
        s += noun_form(lex, t.loc, t.loc_pl);
    }
    const std::string v = verb_form(lex, t.verb, verb_pl);
    const std::string o = noun_form(lex, t.obj, t.obj_pl);
    s += ' ';
    if (verb_final) {
        s += o + ' ' + v;
    } else {
        s += v + ' ' + o;
    }
    return s;
}

std::vector<std::string> sample_corpus(const Lexicon& lex, RngKey k, int n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tree t = sample_tree(lex, k, static_cast<std::uint64_t>(i), kLocMaybe);
        out.push_back(render(lex, t, t.subj_pl, lex.verb_final));
    }
    return out;
}

// Draws trees until `n` pairs with distinct good sentences were accepted.
template <typename MakePair>
TestSuite build_suite(const std::string& id, RngKey k, int n, MakePair make_pair) {
    TestSuite s;
    s.suite_id = id;
    std::set<std::string> seen;
    std::uint64_t tries = 0;
    const std::uint64_t max_tries = 400ull * static_cast<std::uint64_t>(n) + 1000;
    while (static_cast<int>(s.pairs.size()) < n) {
        if (++tries > max_tries) {
            throw InputError("synth: not enough distinct pairs for suite " + id);
        }
        MinimalPair p = make_pair(tries, static_cast<int>(s.pairs.size()));
        if (p.good.empty() || !seen.insert(p.good + '\n' + p.bad).second) continue;
        s.pairs.push_back(std::move(p));
    }
    return s;
}

// Subject-verb agreement, no intervening material. Subject number alternates
// so neither suffix is systematically the grammatical one.
TestSuite suite_agreement_simple(const Lexicon& lex, RngKey k, int n) {
    return build_suite("agreement_simple", k, n, [&](std::uint64_t i, int accepted) {
        Tree t = sample_tree(lex, k, i, kLocNever);
        t.subj_pl = accepted % 2 == 1;
        return MinimalPair{render(lex, t, t.subj_pl, lex.verb_final),
                           render(lex, t, !t.subj_pl, lex.verb_final)};
    });
}

// An adposition phrase with the opposite number intervenes between subject
// and verb; the wrong continuation agrees with the distractor noun.
TestSuite suite_agreement_distractor(const Lexicon& lex, RngKey k, int n) {
    return build_suite("agreement_distractor", k, n, [&](std::uint64_t i, int accepted) {
        Tree t = sample_tree(lex, k, i, kLocAlways);
        t.subj_pl = accepted % 2 == 1;
        t.loc_pl = !t.subj_pl;
        return MinimalPair{render(lex, t, t.subj_pl, lex.verb_final),
                           render(lex, t, !t.subj_pl, lex.verb_final)};
    });
}

// The same words in the language's order vs the other language's order.
TestSuite suite_word_order(const Lexicon& lex, RngKey k, int n) {
    return build_suite("word_order", k, n, [&](std::uint64_t i, int accepted) {
        Tree t = sample_tree(lex, k, i, kLocMaybe);
        t.subj_pl = accepted % 2 == 1;
        return MinimalPair{render(lex, t, t.subj_pl, lex.verb_final),
                           render(lex, t, t.subj_pl, !lex.verb_final)};
    });
}

// Both sides grammatical: one noun stem swapped for another of the same
// number, the good label assigned by coin flip. Any consistent scorer sits
// at chance here.
TestSuite suite_calibration(const Lexicon& lex, RngKey k, int n) {
    RngKey kx = rng_derive(k, "swap");
    return build_suite("calibration", k, n, [&](std::uint64_t i, int) {
        Tree t = sample_tree(lex, k, i, kLocMaybe);
        const std::uint64_t c = i * 4;
        Tree t2 = t;
        const auto n_nouns = lex.nouns.size();
        int slot = static_cast<int>(rng_below(kx, c + 0, t.has_loc ? 3 : 2));
        int shift = 1 + static_cast<int>(rng_below(kx, c + 1, n_nouns - 1));
        if (slot == 0) {
            t2.subj = (t.subj + shift) % static_cast<int>(n_nouns);
        } else if (slot == 1) {
            t2.obj = (t.obj + shift) % static_cast<int>(n_nouns);
        } else {
            t2.loc = (t.loc + shift) % static_cast<int>(n_nouns);
        }
        std::string a = render(lex, t, t.subj_pl, lex.verb_final);
        std::string b = render(lex, t2, t2.subj_pl, lex.verb_final);
        if (rng_below(kx, c + 2, 2) == 1) std::swap(a, b);
        return MinimalPair{a, b};
    });
}

bool suffixes_atomic(const BpeCodes& codes) {
    BpeApplier ap(codes);
    for (const Lexicon* lex : {&lex_l1(), &lex_l2()}) {
        auto ends_atomic = [&](const std::string& word, const char* sfx) {
            auto pieces = ap.segment_word(word);
            return pieces.size() >= 2 && pieces.back() == std::string(sfx) + kEowMarker;
        };
        for (const auto& stem : lex->nouns) {
            if (!ends_atomic(stem + kNounSg, kNounSg)) return false;
            if (!ends_atomic(stem + kNounPl, kNounPl)) return false;
        }
        for (const auto& stem : lex->verbs) {
            if (!ends_atomic(stem + kVerbSg, kVerbSg)) return false;
            if (!ends_atomic(stem + kVerbPl, kVerbPl)) return false;
        }
    }
    return true;
}

// Largest merge-prefix length in [0, merges.size()] keeping suffixes atomic;
// -1 if none does. `base` is prepended unchanged.
std::int64_t best_prefix(const BpeCodes& base, const std::vector<std::pair<std::string, std::string>>& merges) {
    std::int64_t best = -1;
    BpeCodes probe = base;
    if (suffixes_atomic(probe)) best = 0;
    for (std::size_t i = 0; i < merges.size(); ++i) {
        probe.merges.push_back(merges[i]);
        if (suffixes_atomic(probe)) best = static_cast<std::int64_t>(i) + 1;
    }
    return best;
}

}  // namespace

SynthData generate_synth(const SynthConfig& cfg) {
    if (cfg.mono_sentences <= 0 || cfg.parallel_sentences <= 0 || cfg.pairs_per_suite <= 0 ||
        cfg.calibration_pairs <= 0) {
        throw ConfigError("synth sizes must be positive",
                          {"mono_sentences", "parallel_sentences", "pairs_per_suite", "calibration_pairs"});
    }
    const RngKey root = rng_seed(cfg.seed);
    SynthData d;
    d.l1_mono = sample_corpus(lex_l1(), rng_derive(root, "l1_mono"), cfg.mono_sentences);
    d.l2_mono = sample_corpus(lex_l2(), rng_derive(root, "l2_mono"), cfg.mono_sentences);

    const RngKey kp = rng_derive(root, "parallel");
    d.par_l1.reserve(static_cast<std::size_t>(cfg.parallel_sentences));
    d.par_l2.reserve(static_cast<std::size_t>(cfg.parallel_sentences));
    for (int i = 0; i < cfg.parallel_sentences; ++i) {
        Tree t = sample_tree(lex_l1(), kp, static_cast<std::uint64_t>(i), kLocMaybe);
        d.par_l1.push_back(render(lex_l1(), t, t.subj_pl, lex_l1().verb_final));
        d.par_l2.push_back(render(lex_l2(), t, t.subj_pl, lex_l2().verb_final));
    }

    for (const Lexicon* lex : {&lex_l1(), &lex_l2()}) {
        const char* tag = lex == &lex_l1() ? "suites_l1" : "suites_l2";
        RngKey ks = rng_derive(root, tag);
        std::vector<TestSuite> suites;
        suites.push_back(suite_agreement_simple(*lex, rng_derive(ks, "agr"), cfg.pairs_per_suite));
        suites.push_back(
            suite_agreement_distractor(*lex, rng_derive(ks, "distractor"), cfg.pairs_per_suite));
        suites.push_back(suite_word_order(*lex, rng_derive(ks, "order"), cfg.pairs_per_suite));
        (lex == &lex_l1() ? d.l1_suites : d.l2_suites) = std::move(suites);
    }
    d.l2_calibration =
        suite_calibration(lex_l2(), rng_derive(root, "calibration"), cfg.calibration_pairs);

    d.categories = {{"agreement_simple", "morphology"},
                    {"agreement_distractor", "morphology"},
                    {"word_order", "syntax"},
                    {"calibration", "calibration"}};
    return d;
}

SynthTokenizers synth_tokenizer(const std::vector<std::string>& l1_lines,
                                const std::vector<std::string>& l2_lines,
                                std::int64_t probe_merges, std::int64_t vocab_cap) {
    Tokenizer probe = train_tokenizer(l1_lines, probe_merges, vocab_cap);
    std::int64_t base_budget = best_prefix(BpeCodes{}, probe.codes.merges);
    if (base_budget < 0) throw InputError("synth_tokenizer: no merge budget keeps suffixes atomic");

    SynthTokenizers out;
    out.base = train_tokenizer(l1_lines, base_budget, vocab_cap);
    out.base_merges = base_budget;

    // The extension trains its own L2 merge list and appends only merges the
    // base lacks, so the tunable knob is the L2 training budget. Track which
    // L2 rank produced each appended merge to translate the best appended
    // prefix back into that budget.
    BpeCodes l2_probe = train_bpe(l2_lines, probe_merges);
    std::set<std::pair<std::string, std::string>> have(out.base.codes.merges.begin(),
                                                       out.base.codes.merges.end());
    std::vector<std::pair<std::string, std::string>> appended;
    std::vector<std::int64_t> l2_rank;
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(l2_probe.merges.size()); ++r) {
        if (have.insert(l2_probe.merges[r]).second) {
            appended.push_back(l2_probe.merges[r]);
            l2_rank.push_back(r);
        }
    }
    std::int64_t keep = best_prefix(out.base.codes, appended);
    if (keep < 0) throw InputError("synth_tokenizer: extension breaks suffix atomicity");
    std::int64_t l2_budget = keep == 0 ? 0 : l2_rank[keep - 1] + 1;
    out.extended = out.base;
    out.ext = extend_bilingual(out.extended, l2_lines, l2_budget, vocab_cap);
    out.extra_merges = keep;
    return out;
}

void verify_synth(const SynthData& data, const Tokenizer& tok) {
    for (const auto& st : suffix_tokens()) {
        if (!tok.vocab.contains(st)) throw InputError("synth: missing shared suffix token " + st);
    }
    auto check_line = [&](const std::string& line) {
        for (const auto& word : split_ws(line)) {
            if (word == lex_l1().adposition || word == lex_l2().adposition) continue;
            auto pieces = tok.segment_line(word);
            const auto& sts = suffix_tokens();
            if (pieces.size() < 2 || std::find(sts.begin(), sts.end(), pieces.back()) == sts.end()) {
                throw InputError(strfmt("synth: word '%s' lacks an atomic suffix subword", word.c_str()));
            }
        }
        for (std::int32_t id : tok.encode_line(line)) {
            if (id == Vocab::kUnk) throw InputError("synth: UNK in line: " + line);
        }
    };
    for (const auto* corpus : {&data.l1_mono, &data.l2_mono, &data.par_l1, &data.par_l2}) {
        for (const auto& line : *corpus) check_line(line);
    }
    auto check_suite = [&](const TestSuite& s) {
        for (const auto& p : s.pairs) {
            check_line(p.good);
            check_line(p.bad);
            if (tok.encode_line(p.good) == tok.encode_line(p.bad)) {
                throw InputError("synth: tied minimal pair in " + s.suite_id + ": " + p.good);
            }
        }
    };
    for (const auto* suites : {&data.l1_suites, &data.l2_suites}) {
        for (const auto& s : *suites) check_suite(s);
    }
    check_suite(data.l2_calibration);
}

}  // namespace bilm
