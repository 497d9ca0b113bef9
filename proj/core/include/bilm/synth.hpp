#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/suite.hpp"
#include "bilm/tokenizer.hpp"

namespace bilm {

// Two constructed micro-languages with shared agreement morphology. Nouns
// take the number suffixes -ta (sg) / -ku (pl) and verbs agree with the
// subject via -mo (sg) / -ri (pl) in both languages; stems and word order
// differ (L1 is verb-final, L2 is verb-medial). Sentences are rendered from
// abstract trees; the parallel corpus renders one tree list in both
// languages.
struct SynthConfig {
    std::uint64_t seed = 2026;
    int mono_sentences = 6600;    // per-language monolingual corpus, ~50k subwords
    int parallel_sentences = 5500;
    int pairs_per_suite = 1000;
    int calibration_pairs = 1000;
};

struct SynthData {
    std::vector<std::string> l1_mono, l2_mono;
    std::vector<std::string> par_l1, par_l2;  // aligned translations
    std::vector<TestSuite> l1_suites, l2_suites;
    TestSuite l2_calibration;  // control suite, kept out of the linguistic dirs
    std::vector<std::pair<std::string, std::string>> categories;  // suite_id -> category
};

SynthData generate_synth(const SynthConfig& cfg);

struct SynthTokenizers {
    Tokenizer base;      // L1-phase artifacts
    Tokenizer extended;  // after the bilingual extension
    VocabExtension ext;
    std::int64_t base_merges = 0;  // auto-tuned budgets actually used
    std::int64_t extra_merges = 0;
};

// Trains the base tokenizer on the L1 lines, then extends it with the L2
// lines. Both merge budgets are auto-tuned to the largest prefix (bounded by
// probe_merges) under which every inflected lexicon form still segments with
// its agreement suffix as one atomic final subword, so the suffix token ids
// are shared between the languages by construction.
SynthTokenizers synth_tokenizer(const std::vector<std::string>& l1_lines,
                                const std::vector<std::string>& l2_lines,
                                std::int64_t probe_merges, std::int64_t vocab_cap);

// Generator self-checks against a trained tokenizer: shared suffixes surface
// as single subwords in both languages, every minimal pair is tie-free
// (different token id sequences), and nothing encodes to UNK. Throws on
// violation.
void verify_synth(const SynthData& data, const Tokenizer& tok);

}  // namespace bilm
