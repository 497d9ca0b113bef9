#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace bilm {

// End-of-word marker. During training and merge application it is a separate
// trailing symbol (so merges can learn word-final units); on output a bare
// trailing marker is fused into the preceding subword.
inline constexpr const char* kEowMarker = "</w>";

struct BpeCodes {
    std::vector<std::pair<std::string, std::string>> merges;  // rank = index

    void save(const std::string& path) const;
    static BpeCodes load(const std::string& path);
};

// Greedy pair-frequency BPE over word types. Ties broken by lexicographic
// (left, right). Stops early if no pair occurs at least twice.
BpeCodes train_bpe(const std::vector<std::string>& corpus_lines, std::int64_t num_merges);

// Stateless merge application: lowest-rank present pair merged left to right,
// repeated until no ranked pair remains.
class BpeApplier {
public:
    explicit BpeApplier(const BpeCodes& codes);
    std::vector<std::string> segment_word(const std::string& word) const;
    std::vector<std::string> segment_line(const std::string& line) const;

private:
    std::map<std::pair<std::string, std::string>, std::int64_t> rank_;
};

std::vector<std::string> apply_bpe(const BpeCodes& codes, const std::string& line);

// Inverse of segmentation: strips markers and restores the whitespace-joined line.
std::string detokenize(const std::vector<std::string>& subwords);

std::vector<std::string> utf8_chars(const std::string& word);

}  // namespace bilm
