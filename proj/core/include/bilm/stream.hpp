#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/masking.hpp"

namespace bilm {

enum class Regime { kMono, kPara, kNopara, kDrop };

Regime regime_from_string(const std::string& s);
std::string to_string(Regime r);

struct StreamConfig {
    std::int32_t l1_lang = 0;
    std::int32_t l2_lang = 1;
    std::int64_t token_budget = 2048;  // unpadded subwords per micro-batch
    std::int32_t max_positions = 256;
    bool drop_bilingual_odd = true;  // drop regime: odd epochs bilingual, even L2-only
};

// Aligned tokenized sentence pairs (ids without BOS/EOS framing).
struct TokenizedPairs {
    std::vector<std::vector<std::int32_t>> l1, l2;

    std::int64_t size() const { return static_cast<std::int64_t>(l1.size()); }
};

struct EpochStream {
    std::vector<Example> examples;  // already shuffled into epoch order
    std::int64_t truncated = 0;     // sentences clipped to max_positions
    bool bilingual = false;         // any example carries two language segments
};

// Monolingual sentences, one per example, order shuffled from (seed, epoch).
EpochStream make_mono_stream(const std::vector<std::vector<std::int32_t>>& sents,
                             std::int32_t lang, const StreamConfig& cfg,
                             std::int64_t epoch, std::uint64_t seed);

// The three L2 exposure regimes (epochs are 1-based):
//   para    — concatenated aligned pairs, positions reset at segment 2
//   nopara  — pairs with the L1 side re-permuted each epoch
//   drop    — alternates para-style epochs with L2-only epochs
EpochStream make_l2_stream(const TokenizedPairs& pairs, Regime regime, const StreamConfig& cfg,
                           std::int64_t epoch, std::uint64_t seed);

// Greedy in-order packing under the token budget (at least one example per batch).
std::vector<std::vector<Example>> pack_batches(const std::vector<Example>& examples,
                                               std::int64_t token_budget);

}  // namespace bilm
