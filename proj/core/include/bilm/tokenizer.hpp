#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/bpe.hpp"
#include "bilm/vocab.hpp"

namespace bilm {

struct VocabExtension {
    std::int32_t first_added_id = 0;
    std::int32_t added_count = 0;
};

// Codes + vocab as one trained artifact. Saved as codes.txt / vocab.txt in a
// directory so phases can hand tokenizers to each other by path.
struct Tokenizer {
    BpeCodes codes;
    Vocab vocab;

    std::vector<std::string> segment_line(const std::string& line) const;
    std::vector<std::int32_t> encode_line(const std::string& line) const;

    void save(const std::string& dir) const;
    static Tokenizer load(const std::string& dir);
};

Tokenizer train_tokenizer(const std::vector<std::string>& corpus_lines,
                          std::int64_t num_merges, std::int64_t vocab_cap);

// Learns merges on the L2 corpus, appends the novel ones after the base
// merges, then appends novel subwords (counted under the combined codes)
// after the base vocab. Base merge ranks and base vocab ids never move.
VocabExtension extend_bilingual(Tokenizer& tok, const std::vector<std::string>& l2_lines,
                                std::int64_t extra_merges, std::int64_t added_cap);

}  // namespace bilm
