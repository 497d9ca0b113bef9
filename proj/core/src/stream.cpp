#include "bilm/stream.hpp"

#include <numeric>
#include <span>

#include "bilm/common.hpp"
#include "bilm/vocab.hpp"

namespace bilm {

namespace {

// Frames one sentence: BOS ids EOS, sequential positions from 0.
void append_segment(Example& ex, const std::vector<std::int32_t>& ids, std::int32_t lang) {
    std::int32_t pos = 0;
    auto push = [&](std::int32_t id) {
        ex.tokens.push_back(id);
        ex.langs.push_back(lang);
        ex.positions.push_back(pos++);
    };
    push(Vocab::kBos);
    for (std::int32_t id : ids) push(id);
    push(Vocab::kEos);
}

std::vector<std::int32_t> clip(const std::vector<std::int32_t>& ids, std::int64_t budget, bool& clipped) {
    if (static_cast<std::int64_t>(ids.size()) <= budget) return ids;
    clipped = true;
    return std::vector<std::int32_t>(ids.begin(), ids.begin() + budget);
}

Example mono_example(const std::vector<std::int32_t>& ids, std::int32_t lang,
                     const StreamConfig& cfg, std::int64_t& truncated) {
    bool clipped = false;
    Example ex;
    append_segment(ex, clip(ids, cfg.max_positions - 2, clipped), lang);
    if (clipped) truncated += 1;
    return ex;
}

// Bilingual TLM example: both segments framed, positions reset at segment 2.
// When the pair exceeds max_positions, each side is clipped to an equal share
// with leftover budget flowing to the longer side.
Example pair_example(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b,
                     const StreamConfig& cfg, std::int64_t& truncated) {
    std::int64_t budget = cfg.max_positions - 4;
    std::int64_t la = static_cast<std::int64_t>(a.size());
    std::int64_t lb = static_cast<std::int64_t>(b.size());
    std::int64_t qa = la, qb = lb;
    if (la + lb > budget) {
        std::int64_t half = budget / 2;
        if (la <= half) {
            qb = budget - la;
        } else if (lb <= half) {
            qa = budget - lb;
        } else {
            qa = half;
            qb = budget - half;
        }
    }
    bool clipped = false;
    Example ex;
    append_segment(ex, clip(a, qa, clipped), cfg.l1_lang);
    append_segment(ex, clip(b, qb, clipped), cfg.l2_lang);
    if (clipped) truncated += 1;
    return ex;
}

std::vector<std::int32_t> epoch_order(std::int64_t n, std::uint64_t seed, std::int64_t epoch) {
    std::vector<std::int32_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng_shuffle(std::span<std::int32_t>(order),
                rng_derive(rng_derive(rng_seed(seed), "order"), static_cast<std::uint64_t>(epoch)));
    return order;
}

}  // namespace

Regime regime_from_string(const std::string& s) {
    if (s == "mono") return Regime::kMono;
    if (s == "para") return Regime::kPara;
    if (s == "nopara") return Regime::kNopara;
    if (s == "drop") return Regime::kDrop;
    throw InputError("unknown regime '" + s + "' (expected mono|para|nopara|drop)");
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::kMono: return "mono";
        case Regime::kPara: return "para";
        case Regime::kNopara: return "nopara";
        case Regime::kDrop: return "drop";
    }
    throw InputError("invalid regime value");
}

EpochStream make_mono_stream(const std::vector<std::vector<std::int32_t>>& sents,
                             std::int32_t lang, const StreamConfig& cfg,
                             std::int64_t epoch, std::uint64_t seed) {
    if (sents.empty()) throw InputError("make_mono_stream: empty corpus");
    EpochStream s;
    for (std::int32_t i : epoch_order(static_cast<std::int64_t>(sents.size()), seed, epoch)) {
        s.examples.push_back(mono_example(sents[static_cast<size_t>(i)], lang, cfg, s.truncated));
    }
    return s;
}

EpochStream make_l2_stream(const TokenizedPairs& pairs, Regime regime, const StreamConfig& cfg,
                           std::int64_t epoch, std::uint64_t seed) {
    if (regime == Regime::kMono) throw InputError("make_l2_stream: regime must be para|nopara|drop");
    if (pairs.size() == 0 || pairs.l1.size() != pairs.l2.size()) {
        throw InputError("make_l2_stream: parallel corpus empty or misaligned");
    }
    std::int64_t n = pairs.size();
    EpochStream s;

    bool bilingual_epoch = true;
    if (regime == Regime::kDrop) {
        bool odd = (epoch % 2) == 1;
        bilingual_epoch = cfg.drop_bilingual_odd ? odd : !odd;
    }

    // nopara: break alignment by re-permuting the L1 side, fresh each epoch.
    std::vector<std::int32_t> l1_of(static_cast<size_t>(n));
    std::iota(l1_of.begin(), l1_of.end(), 0);
    if (regime == Regime::kNopara) {
        rng_shuffle(std::span<std::int32_t>(l1_of),
                    rng_derive(rng_derive(rng_seed(seed), "nopara"), static_cast<std::uint64_t>(epoch)));
    }

    for (std::int32_t i : epoch_order(n, seed, epoch)) {
        if (bilingual_epoch) {
            const auto& l1 = pairs.l1[static_cast<size_t>(l1_of[static_cast<size_t>(i)])];
            s.examples.push_back(pair_example(l1, pairs.l2[static_cast<size_t>(i)], cfg, s.truncated));
            s.bilingual = true;
        } else {
            s.examples.push_back(mono_example(pairs.l2[static_cast<size_t>(i)], cfg.l2_lang, cfg, s.truncated));
        }
    }
    return s;
}

std::vector<std::vector<Example>> pack_batches(const std::vector<Example>& examples,
                                               std::int64_t token_budget) {
    if (token_budget <= 0) throw InputError("pack_batches: token budget must be positive");
    std::vector<std::vector<Example>> batches;
    std::vector<Example> cur;
    std::int64_t cost = 0;
    for (const auto& ex : examples) {
        if (!cur.empty() && cost + ex.size() > token_budget) {
            batches.push_back(std::move(cur));
            cur.clear();
            cost = 0;
        }
        cost += ex.size();
        cur.push_back(ex);
    }
    if (!cur.empty()) batches.push_back(std::move(cur));
    return batches;
}

}  // namespace bilm
