#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace bilm {

// Dense-id subword vocabulary. The five reserved specials always occupy the
// first ids, in this order.
struct Vocab {
    static constexpr std::int32_t kMask = 0;
    static constexpr std::int32_t kPad = 1;
    static constexpr std::int32_t kUnk = 2;
    static constexpr std::int32_t kBos = 3;
    static constexpr std::int32_t kEos = 4;
    static constexpr std::int32_t kNumSpecials = 5;

    std::vector<std::pair<std::string, std::int64_t>> entries;  // (subword, corpus count)
    std::unordered_map<std::string, std::int32_t> index;

    static const std::vector<std::string>& special_strings();
    static Vocab with_specials();

    std::int32_t size() const { return static_cast<std::int32_t>(entries.size()); }
    bool contains(const std::string& s) const { return index.count(s) != 0; }
    std::int32_t id_or_unk(const std::string& s) const;
    const std::string& subword(std::int32_t id) const;
    void push(std::string subword, std::int64_t count);

    // Stable digest of the full (subword, count) sequence; checkpoints embed it
    // so a model is never resumed against a different vocabulary.
    std::uint64_t content_hash() const;

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);
};

// Top-(cap - 5) subwords by corpus count, ties by lexicographic order.
Vocab build_vocab(const std::vector<std::vector<std::string>>& segmented_corpus, std::int64_t cap);

std::vector<std::int32_t> encode(const Vocab& v, const std::vector<std::string>& subwords);
std::vector<std::string> decode(const Vocab& v, const std::vector<std::int32_t>& ids);

}  // namespace bilm
