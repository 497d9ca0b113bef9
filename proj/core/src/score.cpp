#include "bilm/score.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bilm/common.hpp"
#include "bilm/graph.hpp"
#include "bilm/stats.hpp"

namespace bilm {

double pppl_from_logprobs(const std::vector<double>& logps) {
    if (logps.empty()) throw InputError("pppl: no scored positions");
    double s = 0;
    for (double lp : logps) s += lp;
    return std::exp(-s / static_cast<double>(logps.size()));
}

template <typename T>
std::vector<double> masked_logprobs(const ModelParams<T>& params,
                                    const std::vector<std::int32_t>& ids, const ScoreConfig& sc) {
    const ModelConfig& cfg = params.config;
    if (ids.empty()) throw InputError("pppl: sentence tokenizes to no subwords");
    if (sc.max_rows < 1) throw InputError("pppl: max_rows must be positive");
    auto n = static_cast<std::int64_t>(ids.size());
    std::int64_t t_len = n + 2;
    if (t_len > cfg.max_positions) {
        throw InputError(strfmt("pppl: sentence needs %lld positions, model has %d",
                                static_cast<long long>(t_len), cfg.max_positions));
    }
    for (auto id : ids) {
        if (id < 0 || id >= cfg.vocab_size) throw InputError("pppl: token id outside the vocabulary");
    }

    std::vector<std::int32_t> frame(static_cast<size_t>(t_len));
    frame[0] = Vocab::kBos;
    std::copy(ids.begin(), ids.end(), frame.begin() + 1);
    frame[static_cast<size_t>(t_len - 1)] = Vocab::kEos;

    std::vector<double> logps;
    logps.reserve(static_cast<size_t>(n));
    for (std::int64_t r0 = 0; r0 < n; r0 += sc.max_rows) {
        std::int64_t m = std::min<std::int64_t>(sc.max_rows, n - r0);
        Batch b;
        b.batch_size = m;
        b.seq_len = t_len;
        for (std::int64_t r = 0; r < m; ++r) {
            std::int64_t masked = 1 + r0 + r;
            for (std::int64_t t = 0; t < t_len; ++t) {
                b.tokens.push_back(t == masked ? Vocab::kMask : frame[static_cast<size_t>(t)]);
                b.positions.push_back(static_cast<std::int32_t>(t));
                b.langs.push_back(sc.lang);
                b.attend.push_back(1);
            }
            b.pred_pos.push_back(static_cast<std::int32_t>(r * t_len + masked));
            b.targets.push_back(ids[static_cast<size_t>(r0 + r)]);
        }
        Graph<T> g;
        auto bp = bind_params(g, params, false);
        auto logits = forward_mlm(g, bp, cfg, b, Mode::kEval, rng_seed(0));
        const Tensor<T>& lv = g.value(logits);
        for (std::int64_t r = 0; r < m; ++r) {
            const T* row = lv.row(r);
            double mx = -1e300;
            for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
                mx = std::max(mx, static_cast<double>(row[v]));
            }
            double sum = 0;
            for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
                sum += std::exp(static_cast<double>(row[v]) - mx);
            }
            double lse = mx + std::log(sum);
            logps.push_back(static_cast<double>(row[b.targets[static_cast<size_t>(r)]]) - lse);
        }
    }
    return logps;
}

template <typename T>
double pppl(const ModelParams<T>& params, const std::vector<std::int32_t>& ids,
            const ScoreConfig& sc) {
    return pppl_from_logprobs(masked_logprobs(params, ids, sc));
}

template <typename T>
JudgeOutcome judge_pair(const ModelParams<T>& params, const Tokenizer& tok, const MinimalPair& pair,
                        const ScoreConfig& sc) {
    JudgeOutcome out;
    out.pppl_good = pppl(params, tok.encode_line(pair.good), sc);
    out.pppl_bad = pppl(params, tok.encode_line(pair.bad), sc);
    out.correct = out.pppl_good < out.pppl_bad;
    return out;
}

void finalize_report(EvalReport& r) {
    if (r.suites.empty()) throw InputError("evaluate: no suites");
    std::vector<double> accs;
    std::map<std::string, std::vector<double>> by_cat;
    for (const auto& s : r.suites) {
        accs.push_back(s.accuracy);
        by_cat[s.category].push_back(s.accuracy);
    }
    r.overall = macro_mean(accs);
    r.category_means.clear();
    std::set<std::string> done;
    for (const auto& cat : known_categories()) {
        auto it = by_cat.find(cat);
        if (it == by_cat.end()) continue;
        r.category_means.emplace_back(cat, macro_mean(it->second));
        done.insert(cat);
    }
    for (const auto& [cat, vals] : by_cat) {
        if (!done.count(cat)) r.category_means.emplace_back(cat, macro_mean(vals));
    }
}

template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const Tokenizer& tok,
                    const std::vector<TestSuite>& suites, const ScoreConfig& sc) {
    if (suites.empty()) throw InputError("evaluate: no suites");
    EvalReport r;
    for (const auto& suite : suites) {
        if (suite.pairs.empty()) throw InputError("evaluate: suite '" + suite.suite_id + "' is empty");
        std::int64_t correct = 0;
        for (const auto& pair : suite.pairs) {
            if (judge_pair(params, tok, pair, sc).correct) ++correct;
        }
        SuiteScore s;
        s.suite_id = suite.suite_id;
        s.category = suite.category;
        s.n_pairs = static_cast<std::int64_t>(suite.pairs.size());
        s.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(s.n_pairs);
        r.suites.push_back(std::move(s));
    }
    finalize_report(r);
    return r;
}

template std::vector<double> masked_logprobs<float>(const ModelParams<float>&,
                                                    const std::vector<std::int32_t>&,
                                                    const ScoreConfig&);
template std::vector<double> masked_logprobs<double>(const ModelParams<double>&,
                                                     const std::vector<std::int32_t>&,
                                                     const ScoreConfig&);
template double pppl<float>(const ModelParams<float>&, const std::vector<std::int32_t>&,
                            const ScoreConfig&);
template double pppl<double>(const ModelParams<double>&, const std::vector<std::int32_t>&,
                             const ScoreConfig&);
template JudgeOutcome judge_pair<float>(const ModelParams<float>&, const Tokenizer&,
                                        const MinimalPair&, const ScoreConfig&);
template JudgeOutcome judge_pair<double>(const ModelParams<double>&, const Tokenizer&,
                                         const MinimalPair&, const ScoreConfig&);
template EvalReport evaluate<float>(const ModelParams<float>&, const Tokenizer&,
                                    const std::vector<TestSuite>&, const ScoreConfig&);
template EvalReport evaluate<double>(const ModelParams<double>&, const Tokenizer&,
                                     const std::vector<TestSuite>&, const ScoreConfig&);

}  // namespace bilm
