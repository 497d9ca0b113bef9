#include "bilm/masking.hpp"

#include <algorithm>
#include <cmath>

#include "bilm/common.hpp"
#include "bilm/vocab.hpp"

namespace bilm {

void MaskingConfig::validate() const {
    if (mask_rate < 0 || mask_rate > 1) throw ConfigError("mask_rate must lie in [0,1]", {"mask_rate"});
    if (p_mask < 0 || p_random < 0 || p_keep < 0 || std::abs(p_mask + p_random + p_keep - 1.0) > 1e-9) {
        throw ConfigError("masking treatment split must be non-negative and sum to 1",
                          {"p_mask", "p_random", "p_keep"});
    }
}

Batch mask_batch(const std::vector<Example>& examples, const MaskingConfig& mc,
                 std::int32_t vocab_size, RngKey key) {
    mc.validate();
    if (examples.empty()) throw InputError("mask_batch: empty batch");
    std::int64_t seq_len = 0;
    for (const auto& ex : examples) {
        if (ex.size() == 0) throw InputError("mask_batch: empty example");
        if (ex.langs.size() != ex.tokens.size() || ex.positions.size() != ex.tokens.size()) {
            throw InputError("mask_batch: example field lengths disagree");
        }
        seq_len = std::max(seq_len, ex.size());
    }

    RngKey select_key = rng_derive(key, "select");
    RngKey treat_key = rng_derive(key, "treat");
    RngKey rand_key = rng_derive(key, "rand");
    std::int64_t random_span = static_cast<std::int64_t>(vocab_size) - Vocab::kNumSpecials;

    Batch b;
    b.batch_size = static_cast<std::int64_t>(examples.size());
    b.seq_len = seq_len;
    std::int64_t n = b.batch_size * seq_len;
    b.tokens.assign(static_cast<size_t>(n), Vocab::kPad);
    b.positions.assign(static_cast<size_t>(n), 0);
    b.langs.assign(static_cast<size_t>(n), 0);
    b.attend.assign(static_cast<size_t>(n), 0);

    for (std::int64_t e = 0; e < b.batch_size; ++e) {
        const Example& ex = examples[static_cast<size_t>(e)];
        for (std::int64_t t = 0; t < ex.size(); ++t) {
            std::int64_t flat = e * seq_len + t;
            std::int32_t id = ex.tokens[static_cast<size_t>(t)];
            b.tokens[static_cast<size_t>(flat)] = id;
            b.positions[static_cast<size_t>(flat)] = ex.positions[static_cast<size_t>(t)];
            b.langs[static_cast<size_t>(flat)] = ex.langs[static_cast<size_t>(t)];
            b.attend[static_cast<size_t>(flat)] = 1;

            if (id < Vocab::kNumSpecials) continue;  // specials and PAD never maskable
            std::uint64_t ctr = static_cast<std::uint64_t>(flat);
            if (rng_uniform(select_key, ctr) >= mc.mask_rate) continue;

            b.pred_pos.push_back(static_cast<std::int32_t>(flat));
            b.targets.push_back(id);
            double u = rng_uniform(treat_key, ctr);
            if (u < mc.p_mask) {
                b.tokens[static_cast<size_t>(flat)] = Vocab::kMask;
            } else if (u < mc.p_mask + mc.p_random && random_span > 0) {
                b.tokens[static_cast<size_t>(flat)] = static_cast<std::int32_t>(
                    Vocab::kNumSpecials + rng_below(rand_key, ctr, static_cast<std::uint64_t>(random_span)));
            }
            // else: keep the original token
        }
    }
    return b;
}

}  // namespace bilm
