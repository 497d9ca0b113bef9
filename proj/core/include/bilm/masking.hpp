#pragma once

#include <cstdint>
#include <vector>

#include "bilm/model.hpp"
#include "bilm/rng.hpp"

namespace bilm {

struct MaskingConfig {
    double mask_rate = 0.15;
    double p_mask = 0.8;    // replace with MASK
    double p_random = 0.1;  // replace with a random non-special id
    double p_keep = 0.1;    // keep the original token

    void validate() const;
};

// One input sequence, already framed (BOS/EOS) with per-token language and
// position ids; positions restart at the second segment of bilingual pairs.
struct Example {
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> langs;
    std::vector<std::int32_t> positions;

    std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
};

// Pads examples to a common length and applies the masking procedure. Tokens
// with special ids (< 5) are never maskable. All randomness is a pure function
// of (key, slot index), so identical batches mask identically on any schedule.
Batch mask_batch(const std::vector<Example>& examples, const MaskingConfig& mc,
                 std::int32_t vocab_size, RngKey key);

}  // namespace bilm
