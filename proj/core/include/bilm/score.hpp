#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/model.hpp"
#include "bilm/suite.hpp"
#include "bilm/tokenizer.hpp"

namespace bilm {

struct ScoreConfig {
    std::int32_t lang = 1;       // language id fed at every position (the L2 id)
    std::int64_t max_rows = 64;  // rows per forward pass; results do not depend on it
};

// exp(-(1/n) sum log p): the aggregation behind pseudo-perplexity. Lower
// values mean the model finds the sentence more probable.
double pppl_from_logprobs(const std::vector<double>& logps);

// Per-position masked log-probabilities of a framed sentence: position t is
// replaced by MASK and log p(w_t | rest) read from the full softmax. One
// entry per subword; BOS/EOS are context only.
template <typename T>
std::vector<double> masked_logprobs(const ModelParams<T>& params,
                                    const std::vector<std::int32_t>& ids, const ScoreConfig& sc);

// Pseudo-perplexity of a tokenized sentence.
template <typename T>
double pppl(const ModelParams<T>& params, const std::vector<std::int32_t>& ids,
            const ScoreConfig& sc);

struct JudgeOutcome {
    double pppl_good = 0;
    double pppl_bad = 0;
    bool correct = false;  // strictly lower good PPPL; ties are incorrect
};

template <typename T>
JudgeOutcome judge_pair(const ModelParams<T>& params, const Tokenizer& tok, const MinimalPair& pair,
                        const ScoreConfig& sc);

struct SuiteScore {
    std::string suite_id;
    std::string category;
    double accuracy = 0;  // percent, 0..100
    std::int64_t n_pairs = 0;
};

struct EvalReport {
    std::string model_id;
    std::int64_t epoch = 0;
    std::uint64_t seed = 0;
    std::vector<SuiteScore> suites;
    double overall = 0;  // unweighted mean over suites
    std::vector<std::pair<std::string, double>> category_means;
};

// Recomputes the aggregate fields from the suite scores: overall macro mean
// and per-category means (known categories first, extras alphabetically).
void finalize_report(EvalReport& r);

template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const Tokenizer& tok,
                    const std::vector<TestSuite>& suites, const ScoreConfig& sc);

}  // namespace bilm
