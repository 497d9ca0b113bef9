#include "bilm/tokenizer.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "bilm/common.hpp"

namespace bilm {

std::vector<std::string> Tokenizer::segment_line(const std::string& line) const {
    return BpeApplier(codes).segment_line(line);
}

std::vector<std::int32_t> Tokenizer::encode_line(const std::string& line) const {
    return encode(vocab, segment_line(line));
}

void Tokenizer::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    codes.save(dir + "/codes.txt");
    vocab.save(dir + "/vocab.txt");
}

Tokenizer Tokenizer::load(const std::string& dir) {
    Tokenizer t;
    t.codes = BpeCodes::load(dir + "/codes.txt");
    t.vocab = Vocab::load(dir + "/vocab.txt");
    return t;
}

Tokenizer train_tokenizer(const std::vector<std::string>& corpus_lines,
                          std::int64_t num_merges, std::int64_t vocab_cap) {
    Tokenizer t;
    t.codes = train_bpe(corpus_lines, num_merges);
    BpeApplier apply(t.codes);
    std::vector<std::vector<std::string>> segmented;
    segmented.reserve(corpus_lines.size());
    for (const auto& line : corpus_lines) segmented.push_back(apply.segment_line(line));
    t.vocab = build_vocab(segmented, vocab_cap);
    return t;
}

VocabExtension extend_bilingual(Tokenizer& tok, const std::vector<std::string>& l2_lines,
                                std::int64_t extra_merges, std::int64_t added_cap) {
    if (added_cap < 0) throw InputError("added_cap must be >= 0");
    BpeCodes l2_codes = train_bpe(l2_lines, extra_merges);
    std::set<std::pair<std::string, std::string>> have(tok.codes.merges.begin(), tok.codes.merges.end());
    for (auto& m : l2_codes.merges) {
        if (have.insert(m).second) tok.codes.merges.push_back(std::move(m));
    }

    // Count L2 subwords under the combined codes so the model vocabulary
    // covers exactly what later segmentation will produce.
    BpeApplier apply(tok.codes);
    std::map<std::string, std::int64_t> counts;
    for (const auto& line : l2_lines) {
        for (const auto& s : apply.segment_line(line)) counts[s] += 1;
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked;
    for (const auto& [s, c] : counts) {
        if (!tok.vocab.contains(s)) ranked.emplace_back(s, c);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    VocabExtension ext;
    ext.first_added_id = tok.vocab.size();
    for (const auto& [s, c] : ranked) {
        if (ext.added_count >= added_cap) break;
        tok.vocab.push(s, c);
        ext.added_count += 1;
    }
    return ext;
}

}  // namespace bilm
