#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/tokenizer.hpp"

namespace bilm {

// Disjoint, exhaustive 8:1:1 line-index partition with a deterministic shuffle.
struct CorpusSplit {
    std::vector<std::int32_t> train, dev, test;
};

CorpusSplit split_corpus(std::int64_t n_lines, std::uint64_t seed);

// Aligned sentence pairs from two files of equal line count.
struct ParallelCorpus {
    std::vector<std::string> l1, l2;

    std::int64_t size() const { return static_cast<std::int64_t>(l1.size()); }
    static ParallelCorpus load(const std::string& l1_path, const std::string& l2_path);
};

std::vector<std::string> load_corpus(const std::string& path);  // rejects empty lines

std::vector<std::string> gather_lines(const std::vector<std::string>& lines,
                                      const std::vector<std::int32_t>& idx);

// Segment + encode each line; memoizes per word type.
std::vector<std::vector<std::int32_t>> tokenize_lines(const Tokenizer& tok,
                                                      const std::vector<std::string>& lines);

}  // namespace bilm
